"""Static tactic detectors and engine-derived tactic lines."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

from .chesscore import (
    BISHOP,
    BLACK,
    KING,
    KNIGHT,
    PAWN,
    QUEEN,
    ROOK,
    WHITE,
    Move,
    Piece,
    Position,
    _CASTLE_BY_KING_MOVE,
    _make,
    apply_move,
    attacked_squares,
    attackers_to,
    color_name,
    is_capture,
    legal_moves,
    line_kinds,
    material_balance,
    mirror_square,
    parse_square,
    slider_rays,
    square_name,
)
from .engineio import DEFAULT_BUILD_DEPTH, MateIn

# exchange values; the king outranks everything
TACTIC_VALUES = {PAWN: 1, KNIGHT: 3, BISHOP: 3, ROOK: 5, QUEEN: 9, KING: 1000}
SLIDERS = (BISHOP, ROOK, QUEEN)
DEFAULT_MAX_PLIES = 6
KEEP_MATERIAL_SWING = 2


class TacticPattern(str, enum.Enum):
    PIN = "Pin"
    FORK = "Fork"
    BATTERY = "Battery"
    XRAY = "XRay"
    DISCOVERED_ATTACK = "DiscoveredAttack"
    DOUBLE_ATTACK = "DoubleAttack"
    WINDMILL = "Windmill"
    GREEK_GIFT = "GreekGift"

    def __str__(self) -> str:
        return self.value


_PATTERN_WORDS = {
    TacticPattern.PIN: "pin",
    TacticPattern.FORK: "fork",
    TacticPattern.BATTERY: "battery",
    TacticPattern.XRAY: "x-ray",
    TacticPattern.DISCOVERED_ATTACK: "discovered attack",
    TacticPattern.DOUBLE_ATTACK: "double attack",
    TacticPattern.WINDMILL: "windmill",
    TacticPattern.GREEK_GIFT: "Greek gift sacrifice",
}


@dataclass(frozen=True)
class TacticInstance:
    pattern: TacticPattern
    actor: int
    targets: tuple
    through: Optional[int] = None

    def mirrored(self) -> "TacticInstance":
        return TacticInstance(
            self.pattern,
            mirror_square(self.actor),
            tuple(sorted(mirror_square(t) for t in self.targets)),
            mirror_square(self.through) if self.through is not None else None,
        )

    def describe(self) -> str:
        text = f"{_PATTERN_WORDS[self.pattern]} by {square_name(self.actor)}"
        if self.through is not None:
            text += f" through {square_name(self.through)}"
        return text + " on " + ", ".join(square_name(t) for t in self.targets)


@dataclass(frozen=True)
class TacticLine:
    moves: tuple
    end_description: str
    material_delta_after: int
    gives_check: bool
    mate: bool = False
    patterns: tuple = ()


def _value(piece: Piece) -> int:
    return TACTIC_VALUES[piece.kind]


def _is_slider(piece: Optional[Piece]) -> bool:
    return piece is not None and piece.kind in SLIDERS


# ---------------------------------------------------------------------------
# Static detectors


def detect_pins(pos: Position) -> list:
    board = pos.board
    out = []
    for sq, piece in pos.pieces():
        if piece.kind not in SLIDERS:
            continue
        for ray in slider_rays(piece.kind, sq):
            blocker = None
            for t in ray:
                target = board[t]
                if target is None:
                    continue
                if blocker is None:
                    if target.color == piece.color:
                        break
                    blocker = t
                    continue
                if target.color != piece.color and (
                    target.kind == KING or _value(target) > _value(board[blocker])
                ):
                    out.append(TacticInstance(TacticPattern.PIN, sq, (t,), blocker))
                break
    return out


def _is_threat(pos: Position, attacker: Piece, target_sq: int) -> bool:
    target = pos.board[target_sq]
    if target is None or target.color == attacker.color:
        return False
    if target.kind == KING:
        return True
    if _value(target) > _value(attacker):
        return True
    return not attackers_to(pos, target_sq, target.color)


def detect_forks(pos: Position) -> list:
    out = []
    for sq, piece in pos.pieces(pos.turn):
        targets = [t for t in attacked_squares(pos, sq) if _is_threat(pos, piece, t)]
        if len(targets) >= 2:
            out.append(TacticInstance(TacticPattern.FORK, sq, tuple(sorted(targets))))
    return out


def detect_battery(pos: Position) -> list:
    board = pos.board
    out = []
    for sq, piece in pos.pieces():
        if piece.kind not in SLIDERS:
            continue
        for ray in slider_rays(piece.kind, sq):
            for t in ray:
                other = board[t]
                if other is None:
                    continue
                if (
                    t > sq
                    and other.color == piece.color
                    and other.kind in (line_kinds(sq, t) or ())
                ):
                    out.append(TacticInstance(TacticPattern.BATTERY, sq, (t,)))
                break
    return out


def detect_xray(pos: Position) -> list:
    board = pos.board
    out = []
    for sq, piece in pos.pieces():
        if piece.kind not in SLIDERS:
            continue
        for ray in slider_rays(piece.kind, sq):
            blocker = None
            for t in ray:
                target = board[t]
                if target is None:
                    continue
                if blocker is None:
                    if target.color == piece.color:
                        break
                    blocker = t
                    continue
                if target.color != piece.color:
                    out.append(TacticInstance(TacticPattern.XRAY, sq, (t,), blocker))
                break
    return out


def _ray_through(src: int, via: int) -> tuple:
    """Squares beyond ``via`` on the ray from ``src`` through ``via``."""
    for ray in slider_rays(QUEEN, src):
        if via in ray:
            return ray[ray.index(via) + 1 :]
    return ()


def _discovered_targets(pos: Position, after: Position, move: Move) -> list:
    """(slider, target) pairs whose line opens because the piece left move.from_square."""
    us = pos.turn
    frm = move.from_square
    found = []
    for s, piece in pos.pieces(us):
        if s == frm or not _is_slider(piece):
            continue
        if piece.kind not in (line_kinds(s, frm) or ()):
            continue
        if after.board[s] != piece:
            continue
        # the front piece must have been the first piece on the line
        ray = next(r for r in slider_rays(QUEEN, s) if frm in r)
        if any(pos.board[t] is not None for t in ray[: ray.index(frm)]):
            continue
        for t in _ray_through(s, frm):
            target = after.board[t]
            if target is None:
                continue
            if target.color != us and (target.kind == KING or TACTIC_VALUES[target.kind] >= 3):
                found.append((s, t))
            break
    return found


def detect_discovered(pos: Position, move: Move) -> Optional[TacticInstance]:
    after = _make(pos, move)
    found = _discovered_targets(pos, after, move)
    if not found:
        return None
    actor = min(s for s, _ in found)
    targets = tuple(sorted({t for _, t in found}))
    return TacticInstance(TacticPattern.DISCOVERED_ATTACK, actor, targets, move.from_square)


def _direct_threats(pos: Position, after: Position, move: Move) -> list:
    mover = after.board[move.to_square]
    before = set(attacked_squares(pos, move.from_square))
    return sorted(
        t for t in attacked_squares(after, move.to_square) if t not in before and _is_threat(after, mover, t)
    )


def detect_double_attack(pos: Position, move: Move) -> Optional[TacticInstance]:
    after = _make(pos, move)
    targets = set(_direct_threats(pos, after, move))
    targets.update(t for _, t in _discovered_targets(pos, after, move))
    if len(targets) < 2:
        return None
    return TacticInstance(TacticPattern.DOUBLE_ATTACK, move.to_square, tuple(sorted(targets)))


_GREEK_GIFT = {
    WHITE: dict(bishop="d3", knight="f3", queen="d1", king="g8", pawn="h7"),
    BLACK: dict(bishop="d6", knight="f6", queen="d8", king="g1", pawn="h2"),
}


def detect_greek_gift(pos: Position) -> Optional[TacticInstance]:
    """Classical bishop-sacrifice setup for the side to move, by placement only."""
    us = pos.turn
    sq = {k: parse_square(v) for k, v in _GREEK_GIFT[us].items()}
    board = pos.board
    if (
        board[sq["bishop"]] != Piece(BISHOP, us)
        or board[sq["knight"]] != Piece(KNIGHT, us)
        or board[sq["queen"]] != Piece(QUEEN, us)
        or board[sq["king"]] != Piece(KING, not us)
        or board[sq["pawn"]] != Piece(PAWN, not us)
    ):
        return None
    if Move(sq["bishop"], sq["pawn"]) not in legal_moves(pos):
        return None
    return TacticInstance(TacticPattern.GREEK_GIFT, sq["bishop"], (sq["pawn"],))


def detect_static(pos: Position) -> list:
    """All placement-based detections for a position."""
    found = detect_pins(pos) + detect_forks(pos) + detect_battery(pos) + detect_xray(pos)
    gift = detect_greek_gift(pos)
    if gift:
        found.append(gift)
    return found


# ---------------------------------------------------------------------------
# Lines


def _line_moves(line) -> Sequence[Move]:
    return line.moves if isinstance(line, TacticLine) else tuple(line)


def detect_windmill(line, pos: Position) -> bool:
    """Two or more discovered checks by one piece that also revisits a square."""
    moves = _line_moves(line)
    if not moves:
        return False
    attacker = pos.turn
    ids = {sq: i for i, (sq, _) in enumerate(pos.pieces())}
    visited = {i: [sq] for sq, i in ids.items()}
    checks: dict = {}
    revisits = set()
    cur = pos
    for m in moves:
        pid = ids[m.from_square]
        if cur.turn == attacker:
            d = detect_discovered(cur, m)
            if d is not None and cur.king_square(not attacker) in d.targets:
                checks[pid] = checks.get(pid, 0) + 1
        if m.to_square in visited[pid]:
            revisits.add(pid)
        visited[pid].append(m.to_square)

        moving = cur.board[m.from_square]
        if moving.kind == PAWN and is_capture(cur, m) and cur.board[m.to_square] is None:
            ids.pop(m.to_square - 8 if moving.color else m.to_square + 8, None)
        ids.pop(m.to_square, None)
        ids[m.to_square] = ids.pop(m.from_square)
        if moving.kind == KING and (m.from_square, m.to_square) in _CASTLE_BY_KING_MOVE:
            rfrom, rto = _CASTLE_BY_KING_MOVE[(m.from_square, m.to_square)]
            ids[rto] = ids.pop(rfrom)
        cur = apply_move(cur, m)
    return any(n >= 2 and pid in revisits for pid, n in checks.items())


def line_patterns(pos: Position, moves: Sequence[Move]) -> list:
    """Named motifs executed by the side to move along ``moves``."""
    found = []
    mover = pos.turn
    gift = detect_greek_gift(pos)
    if gift and moves and moves[0] == Move(gift.actor, gift.targets[0]):
        found.append(gift)
    cur = pos
    for i, m in enumerate(moves):
        after = _make(cur, m)
        if cur.turn == mover:
            direct = _direct_threats(cur, after, m)
            disc = detect_discovered(cur, m)
            if len(direct) >= 2:
                found.append(TacticInstance(TacticPattern.FORK, m.to_square, tuple(direct)))
            elif disc is not None and len(set(direct) | set(disc.targets)) >= 2:
                found.append(
                    TacticInstance(TacticPattern.DOUBLE_ATTACK, m.to_square, tuple(sorted(set(direct) | set(disc.targets))))
                )
            if disc is not None:
                found.append(disc)
            if i == 0:
                before = set(detect_pins(cur))
                for pin in detect_pins(after):
                    if pin not in before and after.board[pin.actor].color == mover:
                        found.append(pin)
        cur = after
    if detect_windmill(moves, pos):
        found.append(TacticInstance(TacticPattern.WINDMILL, moves[0].from_square, (pos.king_square(not mover),)))
    return found


_MATERIAL_WORDS = {
    1: "a pawn",
    2: "two pawns",
    3: "a knight",
    4: "a knight and a pawn",
    5: "a rook",
    6: "a rook and a pawn",
    7: "a rook and two pawns",
    8: "a rook and a knight",
    9: "a queen",
    10: "a queen and a pawn",
}


def material_phrase(n: int) -> str:
    return _MATERIAL_WORDS.get(n, f"{n} points of material")


def describe_resulting_position(
    p_end: Position,
    delta: int,
    check: bool,
    patterns: Sequence[TacticInstance] = (),
    plies: Optional[int] = None,
    mover: Optional[bool] = None,
) -> str:
    """Factual, deterministic summary of where a forcing line ends."""
    who = color_name(mover) if mover is not None else "The side to move"
    parts = []
    if plies:
        parts.append(f"After {plies} half-move{'s' if plies != 1 else ''},")
        lead = who
    else:
        lead = who
    if delta > 0:
        parts.append(f"{lead} wins {material_phrase(delta)}.")
    elif delta < 0:
        parts.append(f"{lead} gives up {material_phrase(-delta)}.")
    else:
        parts.append(f"{lead} keeps the material balance level.")
    if check and not legal_moves(p_end):
        parts.append(f"The line ends in checkmate of the {color_name(p_end.turn).lower()} king.")
    elif check:
        parts.append(f"The {color_name(p_end.turn).lower()} king is in check.")
    names = []
    for inst in patterns:
        word = _PATTERN_WORDS[inst.pattern]
        if word not in names:
            names.append(word)
    if names:
        parts.append("Motifs: " + ", ".join(names) + ".")
    return " ".join(parts)


def extract_tactic_line(
    pos: Position,
    move: Move,
    engine,
    max_plies: int = DEFAULT_MAX_PLIES,
    depth: int = DEFAULT_BUILD_DEPTH,
    keep_all: bool = False,
) -> Optional[TacticLine]:
    """Follow the engine's main line for ``move`` and keep it if it is forcing.

    A line is kept when the mover's material swing is at least two pawns or a
    mate lands inside the window.  ``keep_all`` returns quiet lines as well.
    """
    scored = engine.score_line(pos, move, depth)
    moves = tuple(scored.pv[:max_plies])
    cur = pos
    for m in moves:
        cur = apply_move(cur, m)
    mover = pos.turn
    swing = material_balance(cur) - material_balance(pos)
    if mover == BLACK:
        swing = -swing
    check = cur.is_check()
    mated = check and not legal_moves(cur)
    engine_mate = isinstance(scored.score, MateIn) and 0 < 2 * scored.score.plies - 1 <= max_plies
    mate = mated or engine_mate
    if not keep_all and abs(swing) < KEEP_MATERIAL_SWING and not mate:
        return None
    patterns = tuple(line_patterns(pos, moves))
    text = describe_resulting_position(cur, swing, check, patterns, plies=len(moves), mover=mover)
    return TacticLine(moves, text, swing, check, mate, patterns)

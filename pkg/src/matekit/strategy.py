"""Rule-based long-term plan classification and phrasing.

Feature deltas are signed White minus Black; per-side counts are
``(white, black)`` pairs, so mirroring a position negates every delta and
swaps every pair.
"""

from __future__ import annotations

import enum
import zlib
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Optional

from .chesscore import (
    BISHOP,
    BLACK,
    KING,
    KNIGHT,
    PAWN,
    PIECE_VALUES,
    QUEEN,
    ROOK,
    WHITE,
    KING_ATTACKS,
    Position,
    attacked_squares,
    color_name,
    render_fen,
)


class StrategyCategory(str, enum.Enum):
    MATERIAL_COUNT = "MaterialCount"
    PIECE_ACTIVITY = "PieceActivity"
    PAWN_STRUCTURE = "PawnStructure"
    SPACE = "Space"
    KING_SAFETY = "KingSafety"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class StrategyFeatures:
    material_delta: int
    activity_delta: float
    space_delta: int
    doubled: tuple
    isolated: tuple
    passed: tuple
    king_shield: tuple
    king_attackers: tuple  # enemy pieces bearing on each side's king zone
    total_pawns: int

    def mirrored(self) -> "StrategyFeatures":
        swap = lambda t: (t[1], t[0])  # noqa: E731
        return StrategyFeatures(
            material_delta=-self.material_delta,
            activity_delta=-self.activity_delta,
            space_delta=-self.space_delta,
            doubled=swap(self.doubled),
            isolated=swap(self.isolated),
            passed=swap(self.passed),
            king_shield=swap(self.king_shield),
            king_attackers=swap(self.king_attackers),
            total_pawns=self.total_pawns,
        )

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class StrategyThresholds:
    shield_max: int = 1
    attackers_min: int = 2
    material_min: int = 1
    activity_min: float = 3.0
    pawns_min: int = 12
    space_min: int = 4
    structure_min: int = 2
    passed_min: int = 1


DEFAULT_THRESHOLDS = StrategyThresholds()


@dataclass(frozen=True)
class StrategyAnnotation:
    category: StrategyCategory
    template_id: int
    text: str


# 2 on d4/e4/d5/e5, 1 on the 12-square ring around them
CENTRALIZATION = [0] * 64
for _sq in range(64):
    _f, _r = _sq & 7, _sq >> 3
    if 3 <= _f <= 4 and 3 <= _r <= 4:
        CENTRALIZATION[_sq] = 2
    elif 2 <= _f <= 5 and 2 <= _r <= 5:
        CENTRALIZATION[_sq] = 1

_ACTIVE_KINDS = (KNIGHT, BISHOP, ROOK, QUEEN)


def _pawn_flags(pawns: dict) -> tuple:
    """Doubled, isolated and passed counts as (white, black) pairs."""
    files = {c: [0] * 8 for c in (WHITE, BLACK)}
    for color, squares in pawns.items():
        for sq in squares:
            files[color][sq & 7] += 1
    doubled, isolated, passed = [], [], []
    for color in (WHITE, BLACK):
        mine = files[color]
        doubled.append(sum(max(0, n - 1) for n in mine))
        iso = 0
        for sq in pawns[color]:
            f = sq & 7
            left = mine[f - 1] if f > 0 else 0
            right = mine[f + 1] if f < 7 else 0
            if left == 0 and right == 0:
                iso += 1
        isolated.append(iso)
        npassed = 0
        for sq in pawns[color]:
            f, r = sq & 7, sq >> 3
            blocked = False
            for other in pawns[not color]:
                of, orank = other & 7, other >> 3
                if abs(of - f) <= 1 and (orank > r if color == WHITE else orank < r):
                    blocked = True
                    break
            if not blocked:
                npassed += 1
        passed.append(npassed)
    return tuple(doubled), tuple(isolated), tuple(passed)


def _king_shield(pos: Position, color: bool) -> int:
    ksq = pos.king_square(color)
    kf, kr = ksq & 7, ksq >> 3
    step = 1 if color == WHITE else -1
    count = 0
    for dr in (1, 2):
        r = kr + step * dr
        if not 0 <= r < 8:
            continue
        for f in (kf - 1, kf, kf + 1):
            if 0 <= f < 8:
                p = pos.board[r * 8 + f]
                if p is not None and p.kind == PAWN and p.color == color:
                    count += 1
    return count


def _king_zone_attackers(pos: Position, color: bool, attack_map: dict) -> int:
    zone = set(KING_ATTACKS[pos.king_square(color)])
    n = 0
    for sq, targets in attack_map.items():
        p = pos.board[sq]
        if p.color != color and p.kind != KING and zone.intersection(targets):
            n += 1
    return n


def extract_features(pos: Position) -> StrategyFeatures:
    board = pos.board
    attack_map = {sq: attacked_squares(pos, sq) for sq, _ in pos.pieces()}

    material = [0, 0]
    central = [0, 0]
    mobility = [0, 0]
    controlled = [set(), set()]
    pawns = {WHITE: [], BLACK: []}
    for sq, p in pos.pieces():
        idx = 0 if p.color == WHITE else 1
        material[idx] += PIECE_VALUES[p.kind]
        if p.kind == PAWN:
            pawns[p.color].append(sq)
        if p.kind in _ACTIVE_KINDS:
            central[idx] += CENTRALIZATION[sq]
            mobility[idx] += sum(
                1 for t in attack_map[sq] if board[t] is None or board[t].color != p.color
            )
        enemy_half = range(4, 8) if p.color == WHITE else range(0, 4)
        if sq >> 3 in enemy_half:
            controlled[idx].add(sq)
        for t in attack_map[sq]:
            if t >> 3 in enemy_half:
                controlled[idx].add(t)

    doubled, isolated, passed = _pawn_flags(pawns)
    return StrategyFeatures(
        material_delta=material[0] - material[1],
        activity_delta=(central[0] - central[1]) + (mobility[0] - mobility[1]) / 10,
        space_delta=len(controlled[0]) - len(controlled[1]),
        doubled=doubled,
        isolated=isolated,
        passed=passed,
        king_shield=(_king_shield(pos, WHITE), _king_shield(pos, BLACK)),
        king_attackers=(
            _king_zone_attackers(pos, WHITE, attack_map),
            _king_zone_attackers(pos, BLACK, attack_map),
        ),
        total_pawns=len(pawns[WHITE]) + len(pawns[BLACK]),
    )


def _exposed_sides(f: StrategyFeatures, t: StrategyThresholds) -> list:
    return [
        i
        for i in (0, 1)
        if f.king_shield[i] <= t.shield_max and f.king_attackers[i] >= t.attackers_min
    ]


def classify_strategy(f: StrategyFeatures, t: StrategyThresholds = DEFAULT_THRESHOLDS) -> StrategyCategory:
    """Pick the dominant plan with a fixed priority cascade."""
    if _exposed_sides(f, t):
        return StrategyCategory.KING_SAFETY
    if abs(f.material_delta) >= t.material_min:
        return StrategyCategory.MATERIAL_COUNT
    if abs(f.activity_delta) >= t.activity_min:
        return StrategyCategory.PIECE_ACTIVITY
    if f.total_pawns >= t.pawns_min and abs(f.space_delta) >= t.space_min:
        return StrategyCategory.SPACE
    weak = [f.doubled[i] + f.isolated[i] for i in (0, 1)]
    if abs(weak[0] - weak[1]) >= t.structure_min or abs(f.passed[0] - f.passed[1]) >= t.passed_min:
        return StrategyCategory.PAWN_STRUCTURE
    return StrategyCategory.PIECE_ACTIVITY


# ---------------------------------------------------------------------------
# Phrasing


def parse_template_pools(text: str) -> dict:
    pools: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            try:
                current = StrategyCategory(line[1:-1])
            except ValueError:
                raise ValueError(f"line {lineno}: unknown category {line!r}") from None
            pools.setdefault(current, [])
            continue
        if current is None:
            raise ValueError(f"line {lineno}: template before any [Category] header")
        pools[current].append(line)
    return pools


def load_template_pools(path=None) -> dict:
    """Read template pools; categories missing from ``path`` keep the defaults."""
    default_text = resources.files(__package__).joinpath("strategy_templates.txt").read_text(encoding="utf-8")
    pools = parse_template_pools(default_text)
    if path is not None:
        pools.update({c: v for c, v in parse_template_pools(Path(path).read_text(encoding="utf-8")).items() if v})
    return pools


DEFAULT_POOLS = load_template_pools()


def pool_size(category: StrategyCategory, pools: Optional[dict] = None) -> int:
    return len((pools or DEFAULT_POOLS)[category])


def position_hash(pos: Position) -> int:
    return zlib.crc32(render_fen(pos).encode("ascii"))


def _plural(n, unit: str) -> str:
    return f"{n} {unit}" if n == 1 else f"{n} {unit}s"


def _lead(delta) -> tuple:
    if delta > 0:
        return "White", "Black"
    if delta < 0:
        return "Black", "White"
    return "Either side", "the opponent"


def _context(c: StrategyCategory, f: StrategyFeatures, t: StrategyThresholds) -> dict:
    side, other = _lead(0)
    n = 0
    shield = min(f.king_shield)
    attackers = max(f.king_attackers)
    if c is StrategyCategory.MATERIAL_COUNT:
        side, other = _lead(f.material_delta)
        n = abs(f.material_delta)
    elif c is StrategyCategory.PIECE_ACTIVITY:
        side, other = _lead(f.activity_delta)
        n = round(abs(f.activity_delta), 1)
    elif c is StrategyCategory.SPACE:
        side, other = _lead(f.space_delta)
        n = abs(f.space_delta)
    elif c is StrategyCategory.PAWN_STRUCTURE:
        weak = (f.doubled[0] + f.isolated[0]) - (f.doubled[1] + f.isolated[1])
        if weak:
            side, other = _lead(-weak)
            n = abs(weak)
        else:
            passed = f.passed[0] - f.passed[1]
            side, other = _lead(passed)
            n = abs(passed)
    elif c is StrategyCategory.KING_SAFETY:
        exposed = _exposed_sides(f, t)
        # the weaker king when both are exposed; ties go to the side with fewer shield pawns
        if exposed:
            victim = max(exposed, key=lambda i: (f.king_attackers[i], -f.king_shield[i], -i))
        else:
            victim = 0 if (f.king_attackers[0], -f.king_shield[0]) >= (f.king_attackers[1], -f.king_shield[1]) else 1
        other = color_name(victim == 0)
        side = color_name(victim == 1)
        shield = f.king_shield[victim]
        attackers = f.king_attackers[victim]
        n = attackers
    return {
        "side": side,
        "other": other,
        "n": n,
        "points": _plural(n, "point"),
        "squares": _plural(n, "square"),
        "attackers": attackers,
        "shield": shield,
    }


def render_strategy_text(
    category: StrategyCategory,
    features: StrategyFeatures,
    seed: int,
    pools: Optional[dict] = None,
    thresholds: StrategyThresholds = DEFAULT_THRESHOLDS,
) -> StrategyAnnotation:
    pool = (pools or DEFAULT_POOLS)[category]
    template_id = seed % len(pool)
    text = pool[template_id].format(**_context(category, features, thresholds))
    if text and text[0].islower():
        text = text[0].upper() + text[1:]
    return StrategyAnnotation(category, template_id, text)


def annotate_strategy(pos: Position, seed: Optional[int] = None, pools=None) -> StrategyAnnotation:
    f = extract_features(pos)
    c = classify_strategy(f)
    return render_strategy_text(c, f, position_hash(pos) if seed is None else seed, pools)

"""Chess domain model: positions, FEN/UCI text forms, legal move generation.

Squares are plain integers 0..63 with a1 = 0, b1 = 1, ..., h8 = 63.
Positions and moves are immutable; every operation here is a pure function.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Optional

WHITE = True
BLACK = False

PAWN, KNIGHT, BISHOP, ROOK, QUEEN, KING = range(1, 7)
PIECE_SYMBOLS = [None, "p", "n", "b", "r", "q", "k"]
PIECE_NAMES = [None, "pawn", "knight", "bishop", "rook", "queen", "king"]

# Conventional material values in pawns. The king has no exchange value.
PIECE_VALUES = {PAWN: 1, KNIGHT: 3, BISHOP: 3, ROOK: 5, QUEEN: 9, KING: 0}

FILE_NAMES = "abcdefgh"
RANK_NAMES = "12345678"

STARTING_FEN = "rnbqkbnr/pppppppp/8/8/8/8/PPPPPPPP/RNBQKBNR w KQkq - 0 1"


class FenError(ValueError):
    """Malformed or invalid FEN. ``field`` is the 1-based FEN field index."""

    def __init__(self, message: str, field: int):
        super().__init__(f"FEN field {field}: {message}")
        self.field = field


class MoveParseError(ValueError):
    pass


class IllegalMoveError(ValueError):
    pass


def square(file: int, rank: int) -> int:
    if not (0 <= file < 8 and 0 <= rank < 8):
        raise ValueError(f"square out of range: file={file} rank={rank}")
    return rank * 8 + file


def square_file(sq: int) -> int:
    return sq & 7


def square_rank(sq: int) -> int:
    return sq >> 3


def square_name(sq: int) -> str:
    return FILE_NAMES[sq & 7] + RANK_NAMES[sq >> 3]


def parse_square(text: str) -> int:
    if len(text) != 2 or text[0] not in FILE_NAMES or text[1] not in RANK_NAMES:
        raise ValueError(f"invalid square: {text!r}")
    return square(FILE_NAMES.index(text[0]), RANK_NAMES.index(text[1]))


def mirror_square(sq: int) -> int:
    return sq ^ 56


class Piece(NamedTuple):
    kind: int
    color: bool

    def symbol(self) -> str:
        s = PIECE_SYMBOLS[self.kind]
        return s.upper() if self.color else s

    @property
    def value(self) -> int:
        return PIECE_VALUES[self.kind]

    @classmethod
    def from_symbol(cls, symbol: str) -> "Piece":
        return _PIECE_BY_SYMBOL[symbol]


_PIECE_BY_SYMBOL = {
    (s.upper() if color else s): Piece(kind, color)
    for kind, s in enumerate(PIECE_SYMBOLS)
    if s
    for color in (WHITE, BLACK)
}


class Move(NamedTuple):
    from_square: int
    to_square: int
    promotion: Optional[int] = None

    def uci(self) -> str:
        text = square_name(self.from_square) + square_name(self.to_square)
        if self.promotion:
            text += PIECE_SYMBOLS[self.promotion]
        return text

    def __str__(self) -> str:
        return self.uci()


def parse_uci_move(text: str) -> Move:
    if len(text) not in (4, 5):
        raise MoveParseError(f"UCI move must have 4 or 5 characters: {text!r}")
    try:
        from_sq = parse_square(text[0:2])
        to_sq = parse_square(text[2:4])
    except ValueError as exc:
        raise MoveParseError(f"invalid UCI move {text!r}: {exc}") from None
    promotion = None
    if len(text) == 5:
        if text[4] not in "nbrq":
            raise MoveParseError(f"invalid promotion letter in {text!r}")
        promotion = PIECE_SYMBOLS.index(text[4])
    if from_sq == to_sq:
        raise MoveParseError(f"null move not allowed: {text!r}")
    return Move(from_sq, to_sq, promotion)


def render_uci_move(move: Move) -> str:
    return move.uci()


# ---------------------------------------------------------------------------
# Attack tables

_ORTHO_DIRS = ((0, 1), (0, -1), (1, 0), (-1, 0))
_DIAG_DIRS = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def _ray(sq: int, df: int, dr: int) -> tuple:
    out = []
    f, r = sq & 7, sq >> 3
    f, r = f + df, r + dr
    while 0 <= f < 8 and 0 <= r < 8:
        out.append(r * 8 + f)
        f, r = f + df, r + dr
    return tuple(out)


def _leaps(sq: int, deltas) -> tuple:
    f, r = sq & 7, sq >> 3
    return tuple(
        (r + dr) * 8 + (f + df)
        for df, dr in deltas
        if 0 <= f + df < 8 and 0 <= r + dr < 8
    )


_KNIGHT_DELTAS = ((1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2))
_KING_DELTAS = _ORTHO_DIRS + _DIAG_DIRS

ORTHO_RAYS = [tuple(_ray(sq, df, dr) for df, dr in _ORTHO_DIRS) for sq in range(64)]
DIAG_RAYS = [tuple(_ray(sq, df, dr) for df, dr in _DIAG_DIRS) for sq in range(64)]
KNIGHT_ATTACKS = [_leaps(sq, _KNIGHT_DELTAS) for sq in range(64)]
KING_ATTACKS = [_leaps(sq, _KING_DELTAS) for sq in range(64)]
# PAWN_ATTACKS[color][sq]: squares a pawn of `color` standing on sq attacks
PAWN_ATTACKS = {
    WHITE: [_leaps(sq, ((-1, 1), (1, 1))) for sq in range(64)],
    BLACK: [_leaps(sq, ((-1, -1), (1, -1))) for sq in range(64)],
}


def slider_rays(kind: int, sq: int) -> tuple:
    """Rays a sliding piece of ``kind`` moves along from ``sq``."""
    if kind == ROOK:
        return ORTHO_RAYS[sq]
    if kind == BISHOP:
        return DIAG_RAYS[sq]
    if kind == QUEEN:
        return ORTHO_RAYS[sq] + DIAG_RAYS[sq]
    return ()


def line_kinds(a: int, b: int) -> Optional[tuple]:
    """Slider kinds that travel the line through ``a`` and ``b``, or None."""
    df = (b & 7) - (a & 7)
    dr = (b >> 3) - (a >> 3)
    if a == b:
        return None
    if df == 0 or dr == 0:
        return (ROOK, QUEEN)
    if abs(df) == abs(dr):
        return (BISHOP, QUEEN)
    return None


def between(a: int, b: int) -> tuple:
    """Squares strictly between a and b on a shared rank/file/diagonal."""
    if line_kinds(a, b) is None:
        return ()
    df = (b & 7) - (a & 7)
    dr = (b >> 3) - (a >> 3)
    step_f = (df > 0) - (df < 0)
    step_r = (dr > 0) - (dr < 0)
    out = []
    f, r = (a & 7) + step_f, (a >> 3) + step_r
    while r * 8 + f != b:
        out.append(r * 8 + f)
        f, r = f + step_f, r + step_r
    return tuple(out)


# ---------------------------------------------------------------------------
# Position


@dataclass(frozen=True)
class Position:
    board: tuple  # 64 entries of Optional[Piece], index = square
    turn: bool = WHITE
    castling: str = ""  # canonical subset of "KQkq"
    ep_square: Optional[int] = None
    halfmove_clock: int = 0
    fullmove_number: int = 1

    @classmethod
    def initial(cls) -> "Position":
        return parse_fen(STARTING_FEN)

    def piece_at(self, sq: int) -> Optional[Piece]:
        return self.board[sq]

    def pieces(self, color: Optional[bool] = None) -> Iterator[tuple]:
        """Yield (square, piece) pairs, optionally filtered by color."""
        for sq, piece in enumerate(self.board):
            if piece is not None and (color is None or piece.color == color):
                yield sq, piece

    def king_square(self, color: bool) -> Optional[int]:
        king = Piece(KING, color)
        for sq, piece in enumerate(self.board):
            if piece == king:
                return sq
        return None

    def is_check(self) -> bool:
        ksq = self.king_square(self.turn)
        return ksq is not None and is_attacked(self.board, ksq, not self.turn)

    def fen(self) -> str:
        return render_fen(self)

    def __str__(self) -> str:
        return render_fen(self)


def _canonical_castling(rights: str) -> str:
    return "".join(c for c in "KQkq" if c in rights)


def parse_fen(text: str) -> Position:
    fields = text.split()
    if len(fields) not in (4, 6):
        if len(fields) == 5:
            raise FenError("fullmove number missing while halfmove clock present", 6)
        raise FenError(f"expected 4 or 6 fields, got {len(fields)}", max(1, min(len(fields) + 1, 6)))

    rows = fields[0].split("/")
    if len(rows) != 8:
        raise FenError(f"expected 8 rows, got {len(rows)}", 1)
    board: list = [None] * 64
    for i, row in enumerate(rows):
        rank = 7 - i
        file = 0
        prev_digit = False
        for ch in row:
            if ch.isdigit():
                if ch in "09" or prev_digit:
                    raise FenError(f"bad empty-square count in row {i + 1}: {row!r}", 1)
                file += int(ch)
                prev_digit = True
            elif ch in _PIECE_BY_SYMBOL:
                if file >= 8:
                    raise FenError(f"row {i + 1} longer than 8 squares: {row!r}", 1)
                board[rank * 8 + file] = _PIECE_BY_SYMBOL[ch]
                file += 1
                prev_digit = False
            else:
                raise FenError(f"illegal piece letter {ch!r}", 1)
        if file != 8:
            raise FenError(f"row {i + 1} does not sum to 8 squares: {row!r}", 1)

    if fields[1] not in ("w", "b"):
        raise FenError(f"active color must be 'w' or 'b', got {fields[1]!r}", 2)
    turn = fields[1] == "w"

    castling = fields[2]
    if castling != "-":
        if any(c not in "KQkq" for c in castling) or len(set(castling)) != len(castling):
            raise FenError(f"invalid castling token {castling!r}", 3)
    castling = "" if castling == "-" else _canonical_castling(castling)

    ep = fields[3]
    ep_square = None
    if ep != "-":
        try:
            ep_square = parse_square(ep)
        except ValueError:
            raise FenError(f"invalid en-passant square {ep!r}", 4) from None

    halfmove, fullmove = 0, 1
    if len(fields) == 6:
        try:
            halfmove = int(fields[4])
        except ValueError:
            raise FenError(f"halfmove clock not an integer: {fields[4]!r}", 5) from None
        if halfmove < 0:
            raise FenError("halfmove clock negative", 5)
        try:
            fullmove = int(fields[5])
        except ValueError:
            raise FenError(f"fullmove number not an integer: {fields[5]!r}", 6) from None
        if fullmove < 1:
            raise FenError("fullmove number must be positive", 6)

    pos = Position(tuple(board), turn, castling, ep_square, halfmove, fullmove)
    _validate(pos)
    return pos


def _validate(pos: Position) -> None:
    board = pos.board
    for color, name in ((WHITE, "white"), (BLACK, "black")):
        kings = sum(1 for p in board if p == Piece(KING, color))
        if kings == 0:
            raise FenError(f"missing {name} king", 1)
        if kings > 1:
            raise FenError(f"multiple {name} kings", 1)
    for sq in list(range(8)) + list(range(56, 64)):
        p = board[sq]
        if p is not None and p.kind == PAWN:
            raise FenError(f"pawn on back rank at {square_name(sq)}", 1)
    home = {
        "K": (4, 7, WHITE),
        "Q": (4, 0, WHITE),
        "k": (60, 63, BLACK),
        "q": (60, 56, BLACK),
    }
    for right in pos.castling:
        ksq, rsq, color = home[right]
        if board[ksq] != Piece(KING, color) or board[rsq] != Piece(ROOK, color):
            raise FenError(f"castling right {right!r} without king and rook on home squares", 3)
    if pos.ep_square is not None:
        want_rank = 5 if pos.turn == WHITE else 2
        if square_rank(pos.ep_square) != want_rank:
            raise FenError(f"en-passant square {square_name(pos.ep_square)} on wrong rank", 4)
    ksq = pos.king_square(not pos.turn)
    if is_attacked(board, ksq, pos.turn):
        raise FenError("side not to move is in check", 2)


def render_fen(pos: Position) -> str:
    rows = []
    for rank in range(7, -1, -1):
        row = ""
        empty = 0
        for file in range(8):
            p = pos.board[rank * 8 + file]
            if p is None:
                empty += 1
                continue
            if empty:
                row += str(empty)
                empty = 0
            row += p.symbol()
        if empty:
            row += str(empty)
        rows.append(row)
    return " ".join(
        [
            "/".join(rows),
            "w" if pos.turn else "b",
            pos.castling or "-",
            square_name(pos.ep_square) if pos.ep_square is not None else "-",
            str(pos.halfmove_clock),
            str(pos.fullmove_number),
        ]
    )


# ---------------------------------------------------------------------------
# Attacks


def is_attacked(board: tuple, sq: int, by: bool) -> bool:
    """True if any piece of color ``by`` attacks ``sq`` on ``board``."""
    for a in PAWN_ATTACKS[not by][sq]:
        p = board[a]
        if p is not None and p.kind == PAWN and p.color == by:
            return True
    for a in KNIGHT_ATTACKS[sq]:
        p = board[a]
        if p is not None and p.kind == KNIGHT and p.color == by:
            return True
    for a in KING_ATTACKS[sq]:
        p = board[a]
        if p is not None and p.kind == KING and p.color == by:
            return True
    for ray in ORTHO_RAYS[sq]:
        for a in ray:
            p = board[a]
            if p is not None:
                if p.color == by and (p.kind == ROOK or p.kind == QUEEN):
                    return True
                break
    for ray in DIAG_RAYS[sq]:
        for a in ray:
            p = board[a]
            if p is not None:
                if p.color == by and (p.kind == BISHOP or p.kind == QUEEN):
                    return True
                break
    return False


def attackers_to(pos: Position, sq: int, by: bool) -> list:
    """Squares of all ``by``-colored pieces attacking ``sq``, ascending."""
    board = pos.board
    out = []
    # a pawn of `by` on square a attacks sq iff a pawn of the other color on sq would attack a
    for a in PAWN_ATTACKS[not by][sq]:
        p = board[a]
        if p is not None and p.kind == PAWN and p.color == by:
            out.append(a)
    for a in KNIGHT_ATTACKS[sq]:
        p = board[a]
        if p is not None and p.kind == KNIGHT and p.color == by:
            out.append(a)
    for a in KING_ATTACKS[sq]:
        p = board[a]
        if p is not None and p.kind == KING and p.color == by:
            out.append(a)
    for rays, kinds in ((ORTHO_RAYS[sq], (ROOK, QUEEN)), (DIAG_RAYS[sq], (BISHOP, QUEEN))):
        for ray in rays:
            for a in ray:
                p = board[a]
                if p is not None:
                    if p.color == by and p.kind in kinds:
                        out.append(a)
                    break
    out.sort()
    return out


def attacked_squares(pos: Position, sq: int) -> list:
    """Squares attacked by the piece on ``sq`` (empty list if none)."""
    board = pos.board
    p = board[sq]
    if p is None:
        return []
    if p.kind == PAWN:
        return list(PAWN_ATTACKS[p.color][sq])
    if p.kind == KNIGHT:
        return list(KNIGHT_ATTACKS[sq])
    if p.kind == KING:
        return list(KING_ATTACKS[sq])
    out = []
    for ray in slider_rays(p.kind, sq):
        for a in ray:
            out.append(a)
            if board[a] is not None:
                break
    return out


# ---------------------------------------------------------------------------
# Move generation

_PROMOTIONS = (QUEEN, ROOK, BISHOP, KNIGHT)

# castling: right -> (king from, king to, rook from, rook to, must be empty, must not be attacked)
_CASTLES = {
    "K": (4, 6, 7, 5, (5, 6), (4, 5, 6)),
    "Q": (4, 2, 0, 3, (1, 2, 3), (4, 3, 2)),
    "k": (60, 62, 63, 61, (61, 62), (60, 61, 62)),
    "q": (60, 58, 56, 59, (57, 58, 59), (60, 59, 58)),
}
_CASTLE_BY_KING_MOVE = {(v[0], v[1]): (v[2], v[3]) for v in _CASTLES.values()}
# squares whose vacating or capture drops a castling right
_RIGHTS_LOST = {4: "KQ", 7: "K", 0: "Q", 60: "kq", 63: "k", 56: "q"}


def _pseudo_moves(pos: Position) -> list:
    board = pos.board
    us = pos.turn
    moves = []
    append = moves.append
    for sq in range(64):
        p = board[sq]
        if p is None or p.color != us:
            continue
        kind = p.kind
        if kind == PAWN:
            step = 8 if us else -8
            start_rank = 1 if us else 6
            last_rank = 7 if us else 0
            to = sq + step
            if 0 <= to < 64 and board[to] is None:
                if to >> 3 == last_rank:
                    for promo in _PROMOTIONS:
                        append(Move(sq, to, promo))
                else:
                    append(Move(sq, to))
                    if sq >> 3 == start_rank and board[to + step] is None:
                        append(Move(sq, to + step))
            for to in PAWN_ATTACKS[us][sq]:
                target = board[to]
                if target is not None and target.color != us:
                    if to >> 3 == last_rank:
                        for promo in _PROMOTIONS:
                            append(Move(sq, to, promo))
                    else:
                        append(Move(sq, to))
                elif to == pos.ep_square and target is None:
                    append(Move(sq, to))
        elif kind == KNIGHT or kind == KING:
            table = KNIGHT_ATTACKS if kind == KNIGHT else KING_ATTACKS
            for to in table[sq]:
                target = board[to]
                if target is None or target.color != us:
                    append(Move(sq, to))
        else:
            for ray in slider_rays(kind, sq):
                for to in ray:
                    target = board[to]
                    if target is None:
                        append(Move(sq, to))
                    else:
                        if target.color != us:
                            append(Move(sq, to))
                        break
    for right in pos.castling:
        if (right in "KQ") != us:
            continue
        kfrom, kto, _rfrom, _rto, empty, safe = _CASTLES[right]
        if any(board[s] is not None for s in empty):
            continue
        if any(is_attacked(board, s, not us) for s in safe):
            continue
        append(Move(kfrom, kto))
    return moves


def _play_board(board: tuple, move: Move, ep_square: Optional[int]) -> list:
    new = list(board)
    frm, to = move.from_square, move.to_square
    piece = new[frm]
    new[frm] = None
    if piece.kind == PAWN:
        if to == ep_square and board[to] is None and (frm & 7) != (to & 7):
            new[to - 8 if piece.color else to + 8] = None
        if move.promotion:
            piece = Piece(move.promotion, piece.color)
    elif piece.kind == KING:
        rook_move = _CASTLE_BY_KING_MOVE.get((frm, to))
        if rook_move is not None:
            rfrom, rto = rook_move
            new[rto] = new[rfrom]
            new[rfrom] = None
    new[to] = piece
    return new


def _make(pos: Position, move: Move) -> Position:
    """Apply a move assumed pseudo-legal; no legality check."""
    board = pos.board
    frm, to = move.from_square, move.to_square
    piece = board[frm]
    captured = board[to]
    new = _play_board(board, move, pos.ep_square)

    castling = pos.castling
    if castling:
        for s in (frm, to):
            lost = _RIGHTS_LOST.get(s)
            if lost:
                castling = "".join(c for c in castling if c not in lost)

    ep_square = None
    if piece.kind == PAWN and abs(to - frm) == 16:
        ep_square = (frm + to) // 2

    if piece.kind == PAWN or captured is not None:
        halfmove = 0
    else:
        halfmove = pos.halfmove_clock + 1
    fullmove = pos.fullmove_number + (0 if pos.turn else 1)
    return Position(tuple(new), not pos.turn, castling, ep_square, halfmove, fullmove)


def _find_king(board, color: bool) -> int:
    king = Piece(KING, color)
    for sq in range(64):
        if board[sq] == king:
            return sq
    raise ValueError("no king on board")


def _pinned_squares(board, ksq: int, us: bool) -> set:
    """Own pieces that stand alone between our king and an enemy slider."""
    pinned = set()
    for rays, kinds in ((ORTHO_RAYS[ksq], (ROOK, QUEEN)), (DIAG_RAYS[ksq], (BISHOP, QUEEN))):
        for ray in rays:
            shield = None
            for a in ray:
                p = board[a]
                if p is None:
                    continue
                if shield is None:
                    if p.color != us:
                        break
                    shield = a
                else:
                    if p.color != us and p.kind in kinds:
                        pinned.add(shield)
                    break
    return pinned


def legal_moves(pos: Position) -> list:
    board = pos.board
    us = pos.turn
    ksq = _find_king(board, us)
    in_check = is_attacked(board, ksq, not us)
    pinned = _pinned_squares(board, ksq, us)
    ep = pos.ep_square
    out = []
    for m in _pseudo_moves(pos):
        frm = m.from_square
        if frm == ksq:
            if not is_attacked(_play_board(board, m, ep), m.to_square, not us):
                out.append(m)
        elif in_check or frm in pinned or (m.to_square == ep and board[frm].kind == PAWN):
            # only these moves can uncover or leave an attack on the king
            if not is_attacked(_play_board(board, m, ep), ksq, not us):
                out.append(m)
        else:
            out.append(m)
    return out


def is_legal(pos: Position, move: Move) -> bool:
    return move in legal_moves(pos)


def apply_move(pos: Position, move: Move) -> Position:
    if move not in legal_moves(pos):
        raise IllegalMoveError(f"illegal move {move.uci()} in {render_fen(pos)}")
    return _make(pos, move)


def apply_moves(pos: Position, moves) -> Position:
    for m in moves:
        pos = apply_move(pos, m)
    return pos


def is_checkmate(pos: Position) -> bool:
    return pos.is_check() and not legal_moves(pos)


def is_stalemate(pos: Position) -> bool:
    return not pos.is_check() and not legal_moves(pos)


def is_capture(pos: Position, move: Move) -> bool:
    if pos.board[move.to_square] is not None:
        return True
    p = pos.board[move.from_square]
    return (
        p is not None
        and p.kind == PAWN
        and move.to_square == pos.ep_square
        and (move.from_square & 7) != (move.to_square & 7)
    )


def perft(pos: Position, depth: int) -> int:
    if depth == 0:
        return 1
    moves = legal_moves(pos)
    if depth == 1:
        return len(moves)
    return sum(perft(_make(pos, m), depth - 1) for m in moves)


def mirror_position(pos: Position) -> Position:
    """Flip the board vertically and swap colors, keeping clocks."""
    board: list = [None] * 64
    for sq, p in enumerate(pos.board):
        if p is not None:
            board[sq ^ 56] = Piece(p.kind, not p.color)
    castling = _canonical_castling(pos.castling.swapcase())
    ep = pos.ep_square ^ 56 if pos.ep_square is not None else None
    return Position(tuple(board), not pos.turn, castling, ep, pos.halfmove_clock, pos.fullmove_number)


def mirror_move(move: Move) -> Move:
    return Move(move.from_square ^ 56, move.to_square ^ 56, move.promotion)


def material(pos: Position, color: bool) -> int:
    return sum(PIECE_VALUES[p.kind] for p in pos.board if p is not None and p.color == color)


def material_balance(pos: Position) -> int:
    """White material minus black material, in pawns."""
    return material(pos, WHITE) - material(pos, BLACK)


def color_name(color: bool) -> str:
    return "White" if color else "Black"

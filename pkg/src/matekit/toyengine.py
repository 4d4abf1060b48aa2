"""A small deterministic UCI engine for hermetic pipeline runs.

It is not a strong engine: a two-ply material search with mate-in-one
detection, a centralisation term, and a position-hashed jitter so that
candidate moves get spread-out scores.  Identical input gives identical
output, which is what transcript recording and determinism tests need.

Run as a process with ``python -m matekit.toyengine``.
"""

from __future__ import annotations

import sys
import zlib

from .chesscore import (
    BISHOP,
    KING,
    KNIGHT,
    PAWN,
    QUEEN,
    ROOK,
    STARTING_FEN,
    Position,
    _make,
    legal_moves,
    parse_fen,
    parse_uci_move,
)

MATE = 100_000
_CP = {PAWN: 100, KNIGHT: 310, BISHOP: 330, ROOK: 500, QUEEN: 900, KING: 0}
_CENTER = [0] * 64
for _sq in range(64):
    _f, _r = _sq & 7, _sq >> 3
    _CENTER[_sq] = 6 - (abs(2 * _f - 7) + abs(2 * _r - 7)) // 2
MAX_PV = 8


def evaluate(pos: Position) -> int:
    """Static score in centipawns from the side to move's perspective."""
    total = 0
    for sq, p in enumerate(pos.board):
        if p is None:
            continue
        v = _CP[p.kind]
        if p.kind in (KNIGHT, BISHOP, QUEEN):
            v += 3 * _CENTER[sq]
        elif p.kind == PAWN:
            v += _CENTER[sq]
        total += v if p.color else -v
    jitter = zlib.crc32(_placement(pos).encode("ascii")) % 61 - 30
    total += jitter
    return total if pos.turn else -total


def _placement(pos: Position) -> str:
    return "".join(p.symbol() if p else "." for p in pos.board)


def _to_uci_score(v: int) -> str:
    if v > MATE - 1000:
        return f"mate {(MATE - v + 1) // 2}"
    if v < -MATE + 1000:
        return f"mate {-((MATE + v) // 2)}"
    return f"cp {v}"


class ToyEngine:
    def __init__(self):
        self.multipv = 1
        self.position = parse_fen(STARTING_FEN)
        self.nodes = 0

    # --- search -------------------------------------------------------

    def _reply_value(self, child: Position) -> tuple:
        """Best (value, reply) for the side to move in ``child``, one ply deep."""
        replies = legal_moves(child)
        if not replies:
            return (-MATE if child.is_check() else 0), None
        best, best_move = None, None
        for r in replies:
            grand = _make(child, r)
            self.nodes += 1
            if grand.is_check() and not legal_moves(grand):
                v = MATE - 1
            else:
                v = -evaluate(grand)
            if best is None or v > best or (v == best and r.uci() < best_move.uci()):
                best, best_move = v, r
        return best, best_move

    def _root_value(self, pos: Position, move, depth: int) -> tuple:
        child = _make(pos, move)
        self.nodes += 1
        if depth <= 1:
            replies = legal_moves(child)
            if not replies:
                return (MATE - 1 if child.is_check() else 0), [move]
            return -evaluate(child), [move]
        v, reply = self._reply_value(child)
        if reply is None:
            # opponent has no moves: we mated (ply 1) or stalemated
            return (MATE - 1 if v != 0 else 0), [move]
        if v >= MATE - 1:
            return -(MATE - 2), [move, reply]
        return -v, [move, reply]

    def _extend(self, pos: Position, pv: list, length: int) -> list:
        cur = pos
        for m in pv:
            cur = _make(cur, m)
        pv = list(pv)
        while len(pv) < length:
            moves = legal_moves(cur)
            if not moves:
                break
            best, best_move = None, None
            for m in moves:
                nxt = _make(cur, m)
                if nxt.is_check() and not legal_moves(nxt):
                    v = MATE
                else:
                    v = -evaluate(nxt)
                if best is None or v > best or (v == best and m.uci() < best_move.uci()):
                    best, best_move = v, m
            pv.append(best_move)
            cur = _make(cur, best_move)
        return pv

    def search(self, pos: Position, depth: int, searchmoves=None) -> list:
        self.nodes = 0
        moves = legal_moves(pos)
        if searchmoves:
            moves = [m for m in moves if m in searchmoves]
        scored = []
        for m in moves:
            v, pv = self._root_value(pos, m, depth)
            scored.append((v, m.uci(), pv))
        scored.sort(key=lambda t: (-t[0], t[1]))
        out = []
        for rank, (v, _, pv) in enumerate(scored[: self.multipv], 1):
            if abs(v) < MATE - 1000:
                pv = self._extend(pos, pv, min(depth, MAX_PV))
            out.append((rank, v, pv))
        return out

    # --- protocol -------------------------------------------------------

    def handle(self, line: str) -> list:
        tokens = line.split()
        if not tokens:
            return []
        cmd = tokens[0]
        if cmd == "uci":
            return ["id name matekit-toy", "id author matekit", "option name MultiPV type spin default 1 min 1 max 500", "uciok"]
        if cmd == "isready":
            return ["readyok"]
        if cmd == "setoption":
            if len(tokens) >= 5 and tokens[2].lower() == "multipv" and tokens[3] == "value":
                self.multipv = max(1, int(tokens[4]))
            return []
        if cmd == "ucinewgame":
            self.position = parse_fen(STARTING_FEN)
            return []
        if cmd == "position":
            self._set_position(tokens[1:])
            return []
        if cmd == "go":
            return self._go(tokens[1:])
        return []

    def _set_position(self, args: list) -> None:
        if args and args[0] == "startpos":
            pos = parse_fen(STARTING_FEN)
            rest = args[1:]
        elif args and args[0] == "fen":
            if "moves" in args:
                idx = args.index("moves")
                fen, rest = " ".join(args[1:idx]), args[idx:]
            else:
                fen, rest = " ".join(args[1:]), []
            pos = parse_fen(fen)
        else:
            return
        if rest and rest[0] == "moves":
            for text in rest[1:]:
                pos = _make(pos, parse_uci_move(text))
        self.position = pos

    def _go(self, args: list) -> list:
        depth = 2
        searchmoves = None
        i = 0
        while i < len(args):
            if args[i] == "depth":
                depth = int(args[i + 1])
                i += 2
            elif args[i] == "searchmoves":
                searchmoves = [parse_uci_move(t) for t in args[i + 1 :]]
                break
            else:
                i += 2
        results = self.search(self.position, depth, searchmoves)
        if not results:
            return ["info depth 0 score mate 0" if self.position.is_check() else "info depth 0 score cp 0", "bestmove (none)"]
        out = []
        for rank, v, pv in results:
            out.append(
                f"info depth {depth} seldepth {len(pv)} multipv {rank} score {_to_uci_score(v)} "
                f"nodes {self.nodes} pv {' '.join(m.uci() for m in pv)}"
            )
        out.append(f"bestmove {results[0][2][0].uci()}")
        return out


def main(argv=None) -> int:
    import argparse

    ap = argparse.ArgumentParser(prog="python -m matekit.toyengine")
    ap.add_argument("--log-input", help="append every raw stdin line to this file")
    args = ap.parse_args(argv)
    engine = ToyEngine()
    log_fh = open(args.log_input, "ab") if args.log_input else None
    for raw in sys.stdin.buffer:
        if log_fh:
            log_fh.write(raw)
            log_fh.flush()
        line = raw.decode("ascii", errors="replace").strip()
        if line == "quit":
            break
        for out in engine.handle(line):
            sys.stdout.write(out + "\n")
        sys.stdout.flush()
    if log_fh:
        log_fh.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

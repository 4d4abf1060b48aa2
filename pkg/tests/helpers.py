"""Shared test utilities: random playouts and scripted engine transcripts."""

from __future__ import annotations

import random
from functools import lru_cache

from matekit.chesscore import Position, apply_move, legal_moves, render_fen


def random_playout(rng: random.Random, max_plies: int = 60, min_plies: int = 1) -> Position:
    """Play random legal moves from the initial position; stop early at mate or stalemate."""
    pos = Position.initial()
    for _ in range(rng.randint(min_plies, max_plies)):
        moves = legal_moves(pos)
        if not moves:
            break
        pos = apply_move(pos, rng.choice(moves))
    return pos


@lru_cache(maxsize=None)
def playout_fens(n: int, seed: int, max_plies: int = 80) -> tuple:
    rng = random.Random(seed)
    return tuple(render_fen(random_playout(rng, max_plies)) for _ in range(n))


def uci_info(depth, multipv, score, pv) -> str:
    return f"< info depth {depth} seldepth {depth} multipv {multipv} score {score} nodes 1000 pv {' '.join(pv)}"


def transcript(*blocks: str) -> str:
    """Join transcript blocks, prefixing the standard handshake."""
    head = [
        "> uci",
        "< id name Scripted",
        "< id author tests",
        "< uciok",
        "> isready",
        "< readyok",
    ]
    return "\n".join(head + [b for b in blocks if b]) + "\n"


def search_block(fen: str, depth: int, multipv: int, lines, searchmoves=None, bestmove=None) -> str:
    """One analyze exchange. ``lines`` is a list of (score_text, pv) in rank order."""
    go = f"> go depth {depth}"
    if searchmoves:
        go += " searchmoves " + " ".join(searchmoves)
    out = [f"> setoption name MultiPV value {multipv}", f"> position fen {fen}", go]
    for i, (score, pv) in enumerate(lines, 1):
        out.append(uci_info(depth, i, score, pv))
    best = bestmove or (lines[0][1][0] if lines else "(none)")
    out.append(f"< bestmove {best}")
    return "\n".join(out)


def score_text(score) -> str:
    """("cp", 35) -> "cp 35"; ints are centipawns."""
    if isinstance(score, int):
        return f"cp {score}"
    return f"{score[0]} {score[1]}"


def scripted_build_transcript(fens, score_lists, depth: int, multipv: int) -> str:
    """Multipv answers for each position: the i-th score goes to the i-th legal move in UCI order.

    Positions with fewer than two legal moves get no exchange, as the builder skips them.
    """
    from matekit.chesscore import legal_moves, parse_fen

    blocks = []
    for fen, scores in zip(fens, score_lists):
        moves = sorted(m.uci() for m in legal_moves(parse_fen(fen)))
        if len(moves) < 2:
            continue  # never sent to the engine
        lines = [(score_text(s), [moves[i]]) for i, s in enumerate(scores[: len(moves)])]
        blocks.append(search_block(fen, depth, multipv, lines))
    return transcript(*blocks)


def oracle_pair(scores, threshold: int, floor_margin: int):
    """Index of the alternative the selection rule must pick, or None."""
    from matekit.engineio import MATE_ORDINAL

    def ordinal(s):
        if isinstance(s, int):
            return s
        k = s[1]
        return MATE_ORDINAL - k if k > 0 else -MATE_ORDINAL - k

    if len(scores) < 2:
        return None
    top = ordinal(scores[0])
    for i, s in enumerate(scores[1:], 1):
        if top - ordinal(s) >= threshold and ordinal(s) >= top - floor_margin:
            return i
    return None

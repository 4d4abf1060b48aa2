import random

import pytest
from hypothesis import given, settings, strategies as st

import naive_chess
from helpers import playout_fens, random_playout
from matekit.chesscore import Position, mirror_position, parse_fen
from matekit.strategy import (
    DEFAULT_POOLS,
    StrategyCategory,
    StrategyFeatures,
    annotate_strategy,
    classify_strategy,
    extract_features,
    load_template_pools,
    parse_template_pools,
    pool_size,
    render_strategy_text,
)


def features(**kw) -> StrategyFeatures:
    base = dict(
        material_delta=0,
        activity_delta=0.0,
        space_delta=0,
        doubled=(0, 0),
        isolated=(0, 0),
        passed=(0, 0),
        king_shield=(3, 3),
        king_attackers=(0, 0),
        total_pawns=16,
    )
    base.update(kw)
    return StrategyFeatures(**base)


def test_initial_position_is_balanced():
    f = extract_features(Position.initial())
    assert (f.material_delta, f.activity_delta, f.space_delta) == (0, 0, 0)
    assert f.king_shield == (3, 3)
    assert f.king_attackers == (0, 0)
    assert f.total_pawns == 16
    assert classify_strategy(f) is StrategyCategory.PIECE_ACTIVITY


def test_lone_knight_feature_values():
    f = extract_features(parse_fen("4k3/8/8/8/3N4/8/8/4K3 w - - 0 1"))
    assert f.material_delta == 3
    assert f.activity_delta == pytest.approx(2.8)  # centre square 2 + eight free squares / 10
    assert f.space_delta == 4  # c6 e6 b5 f5
    assert classify_strategy(f) is StrategyCategory.MATERIAL_COUNT


def test_extra_rook_is_material():
    f = extract_features(parse_fen("4k3/8/8/8/8/8/8/R3K3 w - - 0 1"))
    assert f.material_delta == 5
    assert classify_strategy(f) is StrategyCategory.MATERIAL_COUNT


def test_exposed_king_beats_material():
    pos = parse_fen("6k1/8/8/8/8/8/PPP5/1K3RQ1 b - - 0 1")
    f = extract_features(pos)
    assert f.king_shield == (3, 0)
    assert f.king_attackers == (0, 2)
    assert classify_strategy(f) is StrategyCategory.KING_SAFETY
    text = render_strategy_text(StrategyCategory.KING_SAFETY, f, seed=0).text
    assert "Black" in text


@pytest.mark.parametrize(
    "kw,expected",
    [
        (dict(king_shield=(1, 3), king_attackers=(2, 0), material_delta=4), StrategyCategory.KING_SAFETY),
        (dict(king_shield=(1, 3), king_attackers=(1, 0), material_delta=-1), StrategyCategory.MATERIAL_COUNT),
        (dict(activity_delta=-3.0, space_delta=9), StrategyCategory.PIECE_ACTIVITY),
        (dict(activity_delta=2.9, space_delta=4), StrategyCategory.SPACE),
        (dict(space_delta=6, total_pawns=11, doubled=(2, 0)), StrategyCategory.PAWN_STRUCTURE),
        (dict(passed=(0, 1)), StrategyCategory.PAWN_STRUCTURE),
        (dict(doubled=(1, 0)), StrategyCategory.PIECE_ACTIVITY),
    ],
)
def test_cascade_priority(kw, expected):
    assert classify_strategy(features(**kw)) is expected


def _pawn_oracle(fen):
    board = naive_chess.parse(fen)["board"]
    out = {}
    for white, ch in ((True, "P"), (False, "p")):
        squares = [(f, r) for r in range(8) for f in range(8) if board[r][f] == ch]
        enemy = [(f, r) for r in range(8) for f in range(8) if board[r][f] == ("p" if white else "P")]
        files = [f for f, _ in squares]
        doubled = sum(files.count(f) - 1 for f in set(files))
        isolated = sum(1 for f, _ in squares if (f - 1) not in files and (f + 1) not in files)
        passed = sum(
            1
            for f, r in squares
            if not any(abs(ef - f) <= 1 and (er > r if white else er < r) for ef, er in enemy)
        )
        out[white] = (doubled, isolated, passed)
    return out


@pytest.mark.parametrize("fen", playout_fens(40, seed=21, max_plies=120))
def test_pawn_flags_match_oracle(fen):
    f = extract_features(parse_fen(fen))
    o = _pawn_oracle(fen)
    assert (f.doubled, f.isolated, f.passed) == tuple(zip(o[True], o[False]))


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mirror_antisymmetry(seed):
    pos = random_playout(random.Random(seed), max_plies=90)
    f = extract_features(pos)
    g = extract_features(mirror_position(pos))
    assert g.material_delta == -f.material_delta
    assert g.activity_delta == pytest.approx(-f.activity_delta)
    assert g.space_delta == -f.space_delta
    assert g == f.mirrored()
    assert classify_strategy(g) is classify_strategy(f)


def test_pools_are_large_and_fully_reachable():
    f = features()
    for c in StrategyCategory:
        assert pool_size(c) >= 20
        seen = {render_strategy_text(c, f, seed).template_id for seed in range(100)}
        assert seen == set(range(pool_size(c)))


@pytest.mark.parametrize("category", list(StrategyCategory))
def test_every_template_renders(category):
    f = features(material_delta=-2, activity_delta=3.5, space_delta=5, doubled=(2, 0), king_shield=(0, 3), king_attackers=(3, 0))
    for seed in range(pool_size(category)):
        text = render_strategy_text(category, f, seed).text
        assert "{" not in text and "}" not in text
        assert text[0].isupper() or text[0].isdigit()


def test_annotation_is_deterministic():
    pos = parse_fen(playout_fens(1, seed=2)[0])
    assert annotate_strategy(pos) == annotate_strategy(pos)


def test_custom_pool_file(tmp_path):
    path = tmp_path / "pools.txt"
    path.write_text("[Space]\n{side} has room.\n{side} is cramping {other}.\n", encoding="utf-8")
    pools = load_template_pools(path)
    assert len(pools[StrategyCategory.SPACE]) == 2
    assert pools[StrategyCategory.MATERIAL_COUNT] == DEFAULT_POOLS[StrategyCategory.MATERIAL_COUNT]
    ann = render_strategy_text(StrategyCategory.SPACE, features(space_delta=-5), seed=3, pools=pools)
    assert ann.text == "Black is cramping White."


@pytest.mark.parametrize("text", ["[Tempo]\nx\n", "orphan line\n[Space]\nx\n"])
def test_bad_pool_file(text):
    with pytest.raises(ValueError):
        parse_template_pools(text)


def test_doubled_pawn_example():
    f = extract_features(parse_fen("4k3/8/8/8/8/2P5/2P5/4K3 w - - 0 1"))
    assert f.doubled == (1, 0)


def test_exposed_king_with_extra_material():
    f = features(king_shield=(0, 3), king_attackers=(3, 0), material_delta=5)
    assert classify_strategy(f) is StrategyCategory.KING_SAFETY
    assert classify_strategy(features()) is StrategyCategory.PIECE_ACTIVITY


def test_template_selection_by_seed():
    f = features(material_delta=5)
    ann = render_strategy_text(StrategyCategory.MATERIAL_COUNT, f, seed=0)
    assert ann.template_id == 0
    assert "material" in ann.text and "5 points" in ann.text and "White" in ann.text
    assert ann == render_strategy_text(StrategyCategory.MATERIAL_COUNT, f, seed=0)
    n = pool_size(StrategyCategory.MATERIAL_COUNT)
    for seed in (5, n - 1, 3 * n + 2):
        a = render_strategy_text(StrategyCategory.MATERIAL_COUNT, f, seed).template_id
        b = render_strategy_text(StrategyCategory.MATERIAL_COUNT, f, seed + 1).template_id
        assert b == (a + 1) % n

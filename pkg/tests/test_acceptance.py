"""End-to-end acceptance checks, one test per criterion."""

import itertools
import random
import sys
import time

import pytest

import naive_chess
import tactic_oracles as oracle
from helpers import oracle_pair, playout_fens, scripted_build_transcript, search_block, transcript
from matekit.chesscore import (
    KING,
    Move,
    Position,
    between,
    legal_moves,
    mirror_position,
    parse_fen,
    parse_uci_move,
    perft,
    render_fen,
)
from matekit.cli import main as cli_main
from matekit.datasetgen import (
    BuildConfig,
    DatasetVariant,
    SampleRecord,
    build_dataset,
    emit_records,
    load_records,
    validate_record,
)
from matekit.engineio import (
    AnalysisRequest,
    Centipawns,
    EngineSession,
    MateIn,
    ReplayTransport,
    open_session,
    score_ordinal,
)
from matekit.evalharness import PromptConfig, ReplayClient, build_prompt, run_eval, write_replay_file
from matekit.strategy import (
    StrategyCategory,
    classify_strategy,
    extract_features,
    pool_size,
    render_strategy_text,
)
from matekit.tactics import detect_battery, detect_forks, detect_pins, detect_xray


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def session(text):
    s = EngineSession(ReplayTransport.from_text(text), 0.1, 0.1)
    s.handshake()
    return s


@pytest.mark.criterion(1, "perft equals a naive enumerator at depths 1-3")
def test_movegen_correctness():
    with Timer() as t:
        initial = Position.initial()
        assert perft(initial, 1) == 20
        fens = (render_fen(initial),) + playout_fens(20, seed=2024)
        assert len(set(fens)) == 21
        for fen in fens:
            ours, ref = parse_fen(fen), naive_chess.parse(fen)
            for depth in (1, 2, 3):
                assert perft(ours, depth) == naive_chess.perft(ref, depth), (fen, depth)
    assert t.seconds < 60


@pytest.mark.criterion(2, "FEN and UCI text round-trip")
def test_fen_uci_round_trip():
    with Timer() as t:
        rng = random.Random(77)
        fens = playout_fens(1000, seed=77)
        moves = []
        for fen in fens:
            pos = parse_fen(fen)
            assert render_fen(pos) == fen
            assert parse_fen(render_fen(pos)) == pos
            legal = legal_moves(pos)
            if legal:
                moves.append(rng.choice(legal))
        while len(moves) < 1000:
            moves.append(Move(rng.randrange(64), rng.randrange(64), rng.choice([None, 2, 3, 4, 5])))
            if moves[-1].from_square == moves[-1].to_square:
                moves.pop()
        for m in moves[:1000]:
            text = m.uci()
            assert parse_uci_move(text) == m
            assert parse_uci_move(text).uci() == text
    assert t.seconds < 10


@pytest.mark.criterion(3, "pin/fork/battery/x-ray match brute force; absolute pins hold")
def test_tactic_oracle_equivalence():
    with Timer() as t:
        found = dict.fromkeys(("pin", "fork", "battery", "xray"), 0)
        absolute = 0
        for fen in playout_fens(500, seed=303):
            pos = parse_fen(fen)
            board = naive_chess.parse(fen)["board"]
            pins = detect_pins(pos)
            pairs = [
                ("pin", pins, oracle.pins(board)),
                ("fork", detect_forks(pos), oracle.forks(board, pos.turn)),
                ("battery", detect_battery(pos), oracle.batteries(board)),
                ("xray", detect_xray(pos), oracle.xrays(board)),
            ]
            for name, ours, ref in pairs:
                assert oracle.as_set(ours) == ref, (name, fen)
                found[name] += len(ours)
            legal = legal_moves(pos)
            for pin in pins:
                king = pin.targets[0]
                if pos.board[king].kind != KING or pos.board[pin.through].color != pos.turn:
                    continue
                absolute += 1
                line = set(between(pin.actor, king)) | {pin.actor}
                assert not [m for m in legal if m.from_square == pin.through and m.to_square not in line], fen
        assert all(found.values()), found
        assert absolute > 0
    assert t.seconds < 120


@pytest.mark.criterion(4, "strategy features mirror-antisymmetric; pools large and reachable")
def test_strategy_symmetry():
    for fen in playout_fens(500, seed=404, max_plies=100):
        pos = parse_fen(fen)
        f = extract_features(pos)
        g = extract_features(mirror_position(pos))
        assert g == f.mirrored(), fen
        assert (g.material_delta, g.space_delta) == (-f.material_delta, -f.space_delta)
        assert g.activity_delta == pytest.approx(-f.activity_delta)
        assert classify_strategy(g) is classify_strategy(f), fen
    f = extract_features(Position.initial())
    for c in StrategyCategory:
        assert pool_size(c) >= 20
        assert {render_strategy_text(c, f, s).template_id for s in range(1000)} == set(range(pool_size(c)))


def _desc(scores):
    return sorted(scores, key=lambda s: s if isinstance(s, int) else 100000 - s[1] if s[1] > 0 else -100000 - s[1], reverse=True)


@pytest.mark.criterion(5, "pair selection follows the gap/floor rule; records validate; labels balanced")
def test_pair_selection_contract(tmp_path):
    rng = random.Random(505)
    fens = playout_fens(300, seed=505)
    score_lists = []
    for _ in fens:
        top = rng.randint(-150, 150)
        alts = [top - rng.randint(0, 900) for _ in range(4)]
        if rng.random() < 0.05:
            alts[0] = ("mate", -rng.randint(1, 5))
        scores = _desc([top] + alts)
        if rng.random() < 0.05:
            scores = [("mate", rng.randint(1, 4))] + scores[1:]
        score_lists.append(scores)
    text = scripted_build_transcript(fens, score_lists, depth=16, multipv=5)
    cfg = BuildConfig(variant=DatasetVariant.S, depth=16, seed=42)
    records = build_dataset([parse_fen(f) for f in fens], session(text), cfg)

    want = []
    for fen, scores in zip(fens, score_lists):
        nlegal = len(legal_moves(parse_fen(fen)))
        idx = oracle_pair(scores[:nlegal], 150, 600) if nlegal >= 2 else None
        if idx is not None:
            want.append((fen, idx))
    assert [r.fen for r in records] == [fen for fen, _ in want]
    for r, (fen, idx) in zip(records, want):
        ucis = sorted(m.uci() for m in legal_moves(parse_fen(fen)))
        assert r.optimal_uci == ucis[0]
        assert r.candidates[1 - r.label]["uci"] == ucis[idx]

    path = tmp_path / "s.jsonl"
    emit_records(records, path)
    again = load_records(path)
    for r in again:
        validate_record(r)
    assert len(again) >= 200
    balance = sum(r.label for r in again[:200]) / 200
    assert 0.4 <= balance <= 0.6, balance


@pytest.mark.criterion(6, "byte-exact UCI commands; score grammar; ordinal order on a grid")
def test_protocol_conformance(tmp_path):
    log = tmp_path / "stdin.log"
    fen = "r1bqkb1r/pppp1ppp/2n2n2/4p2Q/2B1P3/8/PPPP1PPP/RNB1K1NR w KQkq - 4 4"
    with open_session([sys.executable, "-m", "matekit.toyengine", "--log-input", str(log)]) as s:
        lines = s.analyze(parse_fen(fen), AnalysisRequest(depth=6, multipv=2))
        s.score_move(parse_fen(fen), parse_uci_move("h5f7"), 6)
    assert lines[0].score == MateIn(1) and lines[0].pv[0].uci() == "h5f7"
    assert log.read_bytes() == (
        "uci\nisready\n"
        f"setoption name MultiPV value 2\nposition fen {fen}\ngo depth 6\n"
        f"setoption name MultiPV value 1\nposition fen {fen}\ngo depth 6 searchmoves h5f7\n"
        "quit\n"
    ).encode("ascii")

    start = Position.initial().fen()
    block = search_block(start, 9, 3, [("cp 25", ["e2e4"]), ("mate -3", ["f2f3"]), ("cp -7", ["a2a3"])])
    got = session(transcript(block)).analyze(Position.initial(), AnalysisRequest(depth=9, multipv=3))
    assert [ln.score for ln in got] == [Centipawns(25), MateIn(-3), Centipawns(-7)]

    grid = [Centipawns(v) for v in range(-3000, 3001, 50)] + [MateIn(k) for k in range(-50, 51) if k]
    for a, b in itertools.product(grid, grid):
        assert (a < b) == (score_ordinal(a) < score_ordinal(b))
        assert (a == b) == (score_ordinal(a) == score_ordinal(b))


def _calibration_records():
    rng = random.Random(707)
    recs, seen = [], set()
    for fen in playout_fens(400, seed=707, max_plies=40):
        legal = legal_moves(parse_fen(fen))
        pairs = [p for p in itertools.combinations(sorted(m.uci() for m in legal), 2)]
        rng.shuffle(pairs)
        for a, b in pairs[:4]:
            key = (fen, a, b)
            if key in seen:
                continue
            seen.add(key)
            recs.append(SampleRecord(fen, [{"uci": a}, {"uci": b}], rng.randrange(2), DatasetVariant.N, 200, {}))
        if len(recs) >= 1000:
            break
    return recs[:1000]


@pytest.mark.criterion(7, "oracle 1.0, anti-oracle 0.0, random within [0.45, 0.55]")
def test_harness_calibration(tmp_path):
    recs = _calibration_records()
    assert len(recs) == 1000
    cfg = PromptConfig()
    prompts = [build_prompt(r, cfg) for r in recs]
    assert len(set(prompts)) == 1000
    rng = random.Random(0)
    write_replay_file(tmp_path / "oracle.jsonl", {p: f"I choose {r.optimal_uci}." for p, r in zip(prompts, recs)})
    write_replay_file(tmp_path / "anti.jsonl", {p: f"I choose {r.candidates[1 - r.label]['uci']}." for p, r in zip(prompts, recs)})
    write_replay_file(tmp_path / "random.jsonl", {p: f"I choose {rng.choice(r.candidates)['uci']}." for p, r in zip(prompts, recs)})
    with Timer() as t:
        accs = {name: run_eval(ReplayClient.from_file(tmp_path / f"{name}.jsonl"), recs, cfg).accuracy for name in ("oracle", "anti", "random")}
    assert accs["oracle"] == 1.0
    assert accs["anti"] == 0.0
    assert 0.45 <= accs["random"] <= 0.55, accs
    assert t.seconds < 30


def _pipeline(workdir, fens_path, transcript_path, replay_path):
    workdir.mkdir()
    data = workdir / "st.jsonl"
    result = workdir / "eval.json"
    cli_main(["build", "--input", str(fens_path), "--variant", "ST", "--depth", "6", "--seed", "9",
              "--engine", str(transcript_path), "--out", str(data)])
    cli_main(["eval", "--in", str(data), "--client", f"replay:{replay_path}", "--shots", "2",
              "--special-tokens", "--out", str(result)])
    return data.read_bytes(), result.read_bytes()


@pytest.mark.criterion(8, "two pipeline runs give byte-identical dataset and evaluation files")
def test_determinism_end_to_end(tmp_path):
    fens_path = tmp_path / "positions.fen"
    fens_path.write_text("\n".join(playout_fens(30, seed=808)) + "\n")
    rec_path = tmp_path / "engine.txt"
    seed_data = tmp_path / "seed.jsonl"
    replay = tmp_path / "answers.jsonl"
    # record the engine once, and a seeded random model's answers once
    cli_main(["build", "--input", str(fens_path), "--variant", "ST", "--depth", "6", "--seed", "9",
              "--engine", "toy", "--record-transcript", str(rec_path), "--out", str(seed_data)])
    cli_main(["eval", "--in", str(seed_data), "--client", "random:4", "--shots", "2", "--special-tokens",
              "--out", str(tmp_path / "seed_eval.json"), "--save-replay", str(replay)])
    first = _pipeline(tmp_path / "run1", fens_path, rec_path, replay)
    second = _pipeline(tmp_path / "run2", fens_path, rec_path, replay)
    assert first[0] == seed_data.read_bytes()
    assert first == second
    assert first[0].count(b"\n") >= 5


@pytest.mark.criterion(9, "N/S/T/ST files satisfy the per-variant field rules")
def test_variant_discipline(tmp_path):
    fens_path = tmp_path / "positions.fen"
    fens_path.write_text("\n".join(playout_fens(40, seed=909)) + "\n")
    for v in DatasetVariant:
        out = tmp_path / f"{v.value}.jsonl"
        cli_main(["build", "--input", str(fens_path), "--variant", v.value, "--depth", "6", "--engine", "toy", "--out", str(out)])
        records = load_records(out)
        assert records, v
        for r in records:
            assert r.variant is v
            validate_record(r)
            for c in r.candidates:
                assert ("strategy_text" in c) == v.has_strategy
                assert ("tactic_text" in c) == v.has_tactic
        assert cli_main(["validate", "--in", str(out)]) == 0

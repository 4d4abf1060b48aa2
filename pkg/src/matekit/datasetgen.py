"""Build annotated move-choice samples and write them as JSON lines."""

from __future__ import annotations

import csv
import enum
import json
import logging
import random
import statistics
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from . import __version__
from .chesscore import FenError, Position, apply_move, legal_moves, parse_fen, parse_uci_move
from .engineio import (
    DEFAULT_BUILD_DEPTH,
    AnalysisRequest,
    Score,
    score_from_json,
    score_ordinal,
    score_to_json,
)
from .strategy import StrategyCategory, classify_strategy, extract_features, position_hash, render_strategy_text
from .tactics import DEFAULT_MAX_PLIES, TacticPattern, extract_tactic_line

log = logging.getLogger(__name__)

GENERATOR_VERSION = f"matekit {__version__}"
DEFAULT_THRESHOLD = 150
DEFAULT_MULTIPV = 5
DEFAULT_FLOOR_MARGIN = 600
DIFFICULTY_DEPTH = 4

EXPLANATION_KEYS = {
    "strategy": ("strategy_text", "strategy_category"),
    "tactic": ("tactic_text", "tactic_patterns", "tactic_moves"),
}


class DatasetVariant(str, enum.Enum):
    N = "N"
    S = "S"
    T = "T"
    ST = "ST"

    @property
    def has_strategy(self) -> bool:
        return self in (DatasetVariant.S, DatasetVariant.ST)

    @property
    def has_tactic(self) -> bool:
        return self in (DatasetVariant.T, DatasetVariant.ST)

    def __str__(self) -> str:
        return self.value


class IngestError(RuntimeError):
    pass


class CandidateError(ValueError):
    pass


class NoTacticError(RuntimeError):
    """Neither candidate has a forcing line; the position only suits N/S."""


class RecordFormatError(ValueError):
    pass


class RecordValidationError(ValueError):
    pass


@dataclass(frozen=True)
class CandidatePair:
    move_a: object
    move_b: object
    score_a: Score
    score_b: Score
    optimal: int
    gap: int


@dataclass
class SampleRecord:
    fen: str
    candidates: list
    label: int
    variant: DatasetVariant
    gap: int
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "fen": self.fen,
            "candidates": self.candidates,
            "label": self.label,
            "variant": self.variant.value,
            "gap": self.gap,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SampleRecord":
        expected = {"fen", "candidates", "label", "variant", "gap", "meta"}
        if set(obj) != expected:
            raise RecordFormatError(f"record keys {sorted(obj)} != {sorted(expected)}")
        return cls(obj["fen"], obj["candidates"], obj["label"], DatasetVariant(obj["variant"]), obj["gap"], obj["meta"])

    @property
    def moves(self) -> list:
        return [parse_uci_move(c["uci"]) for c in self.candidates]

    @property
    def optimal_uci(self) -> str:
        return self.candidates[self.label]["uci"]


@dataclass(frozen=True)
class BuildConfig:
    variant: DatasetVariant = DatasetVariant.ST
    threshold: int = DEFAULT_THRESHOLD
    depth: int = DEFAULT_BUILD_DEPTH
    multipv: int = DEFAULT_MULTIPV
    seed: int = 0
    floor_margin: int = DEFAULT_FLOOR_MARGIN
    max_plies: int = DEFAULT_MAX_PLIES


# ---------------------------------------------------------------------------
# Ingestion


def _looks_like_csv(path: Path, first_line: str, fen_column: str) -> bool:
    if path.suffix.lower() == ".csv":
        return True
    return "," in first_line and fen_column in [c.strip() for c in first_line.split(",")]


def ingest_positions(source, fen_column: str = "FEN") -> Iterator[Position]:
    """Yield positions from a FEN-per-line file or a CSV with a FEN column."""
    path = Path(source)
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = text.splitlines()
    first = next((line for line in lines if line.strip()), "")
    if _looks_like_csv(path, first, fen_column):
        rows = csv.DictReader(lines)
        if rows.fieldnames is None or fen_column not in rows.fieldnames:
            raise IngestError(f"{path}: no {fen_column!r} column")
        candidates = ((i + 2, row.get(fen_column) or "") for i, row in enumerate(rows))
    else:
        candidates = (
            (i + 1, line) for i, line in enumerate(lines) if line.strip() and not line.lstrip().startswith("#")
        )
    good = bad = 0
    for lineno, fen in candidates:
        try:
            pos = parse_fen(fen.strip())
        except FenError as exc:
            bad += 1
            log.debug("%s:%d: skipped: %s", path, lineno, exc)
            continue
        good += 1
        yield pos
    if bad:
        log.warning("%s: skipped %d invalid position(s)", path, bad)
    if good == 0:
        raise IngestError(f"{path}: no valid positions")


# ---------------------------------------------------------------------------
# Pair selection and annotation


def select_candidates(
    pos: Position,
    engine,
    threshold: int = DEFAULT_THRESHOLD,
    multipv: int = DEFAULT_MULTIPV,
    depth: int = DEFAULT_BUILD_DEPTH,
    floor_margin: int = DEFAULT_FLOOR_MARGIN,
) -> Optional[CandidatePair]:
    """Best move plus the highest-ranked alternative that is clearly worse but still plausible."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if len(legal_moves(pos)) < 2:
        raise CandidateError("position has fewer than two legal moves")
    lines = engine.analyze(pos, AnalysisRequest(depth=depth, multipv=multipv))
    if len(lines) < 2:
        return None
    best = lines[0]
    top = score_ordinal(best.score)
    floor = top - floor_margin
    for line in lines[1:]:
        ordinal = score_ordinal(line.score)
        gap = top - ordinal
        if gap >= threshold and ordinal >= floor:
            return CandidatePair(best.pv[0], line.pv[0], best.score, line.score, 0, gap)
    return None


def record_seed(seed: int, index: int) -> int:
    return zlib.crc32(f"{seed}:{index}".encode("ascii"))


def _tactic_entry(line) -> dict:
    moves = [m.uci() for m in line.moves]
    return {
        "tactic_text": f"Line: {' '.join(moves)}. {line.end_description}",
        "tactic_patterns": sorted({p.pattern.value for p in line.patterns}),
        "tactic_moves": moves,
    }


def annotate_sample(
    pos: Position,
    pair: CandidatePair,
    variant: DatasetVariant,
    engine=None,
    seed: int = 0,
    depth: int = DEFAULT_BUILD_DEPTH,
    threshold: int = DEFAULT_THRESHOLD,
    max_plies: int = DEFAULT_MAX_PLIES,
    pools=None,
) -> SampleRecord:
    variant = DatasetVariant(variant)
    moves = [pair.move_a, pair.move_b]
    scores = [pair.score_a, pair.score_b]
    optimal = pair.optimal
    rng = random.Random(seed)
    order = [0, 1]
    if rng.random() < 0.5:
        order = [1, 0]

    entries = [{"uci": m.uci()} for m in moves]
    if variant.has_strategy:
        for entry, m in zip(entries, moves):
            after = apply_move(pos, m)
            features = extract_features(after)
            ann = render_strategy_text(classify_strategy(features), features, position_hash(after), pools)
            entry["strategy_text"] = ann.text
            entry["strategy_category"] = ann.category.value
    if variant.has_tactic:
        if engine is None:
            raise ValueError("tactic variants need an engine session")
        lines = [extract_tactic_line(pos, m, engine, max_plies=max_plies, depth=depth) for m in moves]
        if all(line is None for line in lines):
            raise NoTacticError(f"no forcing line for either candidate in {pos.fen()}")
        for i, m in enumerate(moves):
            line = lines[i] or extract_tactic_line(pos, m, engine, max_plies=max_plies, depth=depth, keep_all=True)
            entries[i].update(_tactic_entry(line))

    return SampleRecord(
        fen=pos.fen(),
        candidates=[entries[i] for i in order],
        label=order.index(optimal),
        variant=variant,
        gap=int(pair.gap),
        meta={
            "engine_depth": depth,
            "threshold": threshold,
            "generator_version": GENERATOR_VERSION,
            "seed": seed,
            "scores": [score_to_json(scores[i]) for i in order],
        },
    )


def build_record(pos: Position, index: int, engine, cfg: BuildConfig, pools=None) -> Optional[SampleRecord]:
    if len(legal_moves(pos)) < 2:
        log.debug("position %d: fewer than two legal moves", index)
        return None
    pair = select_candidates(pos, engine, cfg.threshold, cfg.multipv, cfg.depth, cfg.floor_margin)
    if pair is None:
        return None
    try:
        return annotate_sample(
            pos,
            pair,
            cfg.variant,
            engine,
            seed=record_seed(cfg.seed, index),
            depth=cfg.depth,
            threshold=cfg.threshold,
            max_plies=cfg.max_plies,
            pools=pools,
        )
    except NoTacticError:
        log.debug("position %d: no tactic line, not usable for %s", index, cfg.variant)
        return None


def build_dataset(positions: Iterable[Position], engine, cfg: BuildConfig, pool=None, workers: int = 1, pools=None) -> list:
    """Records in input order. With ``pool`` (an EnginePool) positions run in parallel."""
    positions = list(positions)
    if pool is None or workers <= 1:
        out = [build_record(p, i, engine, cfg, pools) for i, p in enumerate(positions)]
    else:

        def job(item):
            i, p = item
            with pool.session() as s:
                return build_record(p, i, s, cfg, pools)

        with ThreadPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(job, enumerate(positions)))
    return [r for r in out if r is not None]


# ---------------------------------------------------------------------------
# Serialization


def dump_record(record: SampleRecord) -> str:
    return json.dumps(record.to_dict(), ensure_ascii=False)


def emit_records(records: Iterable[SampleRecord], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(dump_record(r) + "\n")
            n += 1
    return n


def load_records(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(SampleRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise RecordFormatError(f"{path}:{lineno}: malformed record: {exc}") from exc
    return out


def validate_record(record: SampleRecord) -> None:
    """Raise RecordValidationError unless the record is self-consistent."""
    try:
        pos = parse_fen(record.fen)
    except FenError as exc:
        raise RecordValidationError(f"bad fen: {exc}") from exc
    if len(record.candidates) != 2:
        raise RecordValidationError("expected exactly two candidates")
    if record.label not in (0, 1):
        raise RecordValidationError(f"label {record.label!r} not in {{0, 1}}")
    legal = legal_moves(pos)
    moves = []
    for c in record.candidates:
        try:
            m = parse_uci_move(c["uci"])
        except (KeyError, ValueError) as exc:
            raise RecordValidationError(f"bad candidate {c!r}") from exc
        if m not in legal:
            raise RecordValidationError(f"candidate {c['uci']} is illegal")
        moves.append(m)
    if moves[0] == moves[1]:
        raise RecordValidationError("candidates are identical")
    for c in record.candidates:
        for group, keys in EXPLANATION_KEYS.items():
            want = record.variant.has_strategy if group == "strategy" else record.variant.has_tactic
            for key in keys:
                present = key in c
                if present != want:
                    state = "missing" if want else "unexpected"
                    raise RecordValidationError(f"{record.variant} record: {state} {key!r} on {c['uci']}")
                if want and key.endswith("_text") and not c[key]:
                    raise RecordValidationError(f"empty {key!r} on {c['uci']}")
    threshold = record.meta.get("threshold")
    if threshold is not None and record.gap < threshold:
        raise RecordValidationError(f"gap {record.gap} below threshold {threshold}")
    scores = record.meta.get("scores")
    if scores is not None:
        ordinals = [score_ordinal(score_from_json(s)) for s in scores]
        if ordinals[record.label] <= ordinals[1 - record.label]:
            raise RecordValidationError("label does not point at the higher-scored move")
        if ordinals[record.label] - ordinals[1 - record.label] != record.gap:
            raise RecordValidationError("gap disagrees with recorded scores")


# ---------------------------------------------------------------------------
# Statistics


def _quantiles(values: list) -> Optional[dict]:
    if not values:
        return None
    values = sorted(values)
    if len(values) == 1:
        q1 = med = q3 = float(values[0])
    else:
        q1, med, q3 = statistics.quantiles(values, n=4, method="inclusive")
    return {"min": values[0], "q25": q1, "median": med, "q75": q3, "max": values[-1]}


@dataclass
class DatasetSummary:
    counts: dict
    strategy_histogram: dict
    tactic_histogram: dict
    gap_quantiles: Optional[dict]

    def to_dict(self) -> dict:
        return {
            "counts": self.counts,
            "strategy_histogram": self.strategy_histogram,
            "tactic_histogram": self.tactic_histogram,
            "gap_quantiles": self.gap_quantiles,
        }


UNNAMED_TACTIC = "Unnamed"


def summarize(records: Iterable[SampleRecord]) -> DatasetSummary:
    """Per-variant counts plus category/pattern histograms of each record's optimal move."""
    counts = {v.value: 0 for v in DatasetVariant}
    strat = {c.value: 0 for c in StrategyCategory}
    tact = {p.value: 0 for p in TacticPattern}
    tact[UNNAMED_TACTIC] = 0
    gaps = []
    for r in records:
        counts[r.variant.value] += 1
        gaps.append(r.gap)
        best = r.candidates[r.label]
        if r.variant.has_strategy:
            strat[best["strategy_category"]] += 1
        if r.variant.has_tactic:
            patterns = best.get("tactic_patterns") or []
            tact[patterns[0] if patterns else UNNAMED_TACTIC] += 1
    return DatasetSummary(counts, strat, tact, _quantiles(gaps))


def difficulty_report(records: Iterable[SampleRecord], engine, depth: int = DIFFICULTY_DEPTH) -> dict:
    """Engine-measured difficulty proxies per variant; empty variants map to None."""
    by_variant: dict = {v.value: [] for v in DatasetVariant}
    for r in records:
        pos = parse_fen(r.fen)
        moves = tuple(r.moves)
        lines = engine.analyze(pos, AnalysisRequest(depth=depth, multipv=1, move_filter=moves))
        agree = bool(lines) and lines[0].pv[0] == moves[r.label]
        by_variant[r.variant.value].append((r.gap, agree))
    report = {}
    for v, rows in by_variant.items():
        if not rows:
            report[v] = None
            continue
        gaps = [g for g, _ in rows]
        report[v] = {
            "n": len(rows),
            "gap_mean": statistics.fmean(gaps),
            "gap_quantiles": _quantiles(gaps),
            "shallow_agreement": sum(1 for _, a in rows if a) / len(rows),
        }
    return report


def format_difficulty_table(report: dict) -> str:
    header = f"{'variant':<8}{'n':>6}{'gap mean':>10}{'gap median':>12}{'agreement':>11}"
    rows = [header]
    for v, stats in report.items():
        if stats is None:
            rows.append(f"{v:<8}{'absent':>6}")
            continue
        rows.append(
            f"{v:<8}{stats['n']:>6}{stats['gap_mean']:>10.1f}"
            f"{stats['gap_quantiles']['median']:>12.1f}{stats['shallow_agreement']:>11.3f}"
        )
    return "\n".join(rows)

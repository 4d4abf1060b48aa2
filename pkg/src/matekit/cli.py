"""Command line: build / summarize / validate / difficulty / eval."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .datasetgen import (
    DEFAULT_FLOOR_MARGIN,
    DEFAULT_MULTIPV,
    DEFAULT_THRESHOLD,
    DIFFICULTY_DEPTH,
    BuildConfig,
    DatasetVariant,
    RecordValidationError,
    build_dataset,
    difficulty_report,
    emit_records,
    format_difficulty_table,
    ingest_positions,
    load_records,
    summarize,
    validate_record,
)
from .engineio import DEFAULT_BUILD_DEPTH, EnginePool, open_session
from .evalharness import (
    DEFAULT_MAX_ERROR_RATE,
    HttpClient,
    PromptConfig,
    ReplayClient,
    anti_oracle_client,
    oracle_client,
    prompt_hash,
    random_client,
    run_eval,
    write_result,
)
from .strategy import load_template_pools
from .tactics import DEFAULT_MAX_PLIES

log = logging.getLogger("matekit")


def _cmd_build(args) -> int:
    positions = list(ingest_positions(args.input, fen_column=args.fen_column))
    cfg = BuildConfig(
        variant=DatasetVariant(args.variant),
        threshold=args.threshold,
        depth=args.depth,
        multipv=args.multipv,
        seed=args.seed,
        floor_margin=args.floor_margin,
        max_plies=args.max_plies,
    )
    pools = load_template_pools(args.templates) if args.templates else None
    if args.workers > 1:
        if os.path.isfile(args.engine) or args.record_transcript:
            raise SystemExit("--workers > 1 needs an engine command (transcripts replay sequentially)")
        with EnginePool.open(args.engine, args.workers) as pool:
            records = build_dataset(positions, None, cfg, pool=pool, workers=args.workers, pools=pools)
    else:
        with open_session(args.engine, record=args.record_transcript) as session:
            records = build_dataset(positions, session, cfg, pools=pools)
    n = emit_records(records, args.out)
    print(f"wrote {n} {cfg.variant} record(s) from {len(positions)} position(s) to {args.out}")
    return 0


def _cmd_summarize(args) -> int:
    summary = summarize(load_records(args.input))
    print(json.dumps(summary.to_dict(), indent=2))
    return 0


def _cmd_validate(args) -> int:
    bad = 0
    records = load_records(args.input)
    for i, r in enumerate(records, 1):
        try:
            validate_record(r)
        except RecordValidationError as exc:
            bad += 1
            print(f"record {i}: {exc}")
    print(f"{len(records) - bad}/{len(records)} record(s) valid")
    return 1 if bad else 0


def _cmd_difficulty(args) -> int:
    records = load_records(args.input)
    with open_session(args.engine) as session:
        report = difficulty_report(records, session, depth=args.depth)
    print(format_difficulty_table(report))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=1)
            fh.write("\n")
    return 0


class _RecordingClient:
    def __init__(self, inner, path):
        self.inner = inner
        self.path = path
        self.entries: dict = {}

    def send(self, prompt: str) -> str:
        response = self.inner.send(prompt)
        self.entries[prompt_hash(prompt)] = response
        return response

    def flush(self) -> None:
        with open(self.path, "w", encoding="utf-8", newline="\n") as fh:
            for key, response in self.entries.items():
                fh.write(json.dumps({"prompt_hash": key, "response": response}) + "\n")


def _make_client(name: str, records, cfg: PromptConfig):
    kind, _, arg = name.partition(":")
    if kind == "replay":
        return ReplayClient.from_file(arg)
    if kind == "oracle":
        return oracle_client(records, cfg)
    if kind == "anti-oracle":
        return anti_oracle_client(records, cfg)
    if kind == "random":
        return random_client(records, cfg, seed=int(arg or 0))
    if kind == "http":
        return HttpClient.from_file(arg)
    raise SystemExit(f"unknown client {name!r}")


def _cmd_eval(args) -> int:
    records = load_records(args.input)
    if args.exemplars:
        pool = load_records(args.exemplars)
    else:
        # hold out the first records as exemplars so they never appear as tests
        pool, records = records[: args.shots], records[args.shots :]
    cfg = PromptConfig(shots=args.shots, exemplar_pool=pool, special_tokens=args.special_tokens)
    client = _make_client(args.client, records, cfg)
    if args.save_replay:
        client = _RecordingClient(client, args.save_replay)
    result = run_eval(client, records, cfg, max_error_rate=args.max_error_rate, workers=args.workers)
    result.meta["client"] = args.client.split(":", 1)[0]
    if args.save_replay:
        client.flush()
    write_result(result, args.out)
    print(f"accuracy {result.accuracy:.3f} over {result.n} sample(s); wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="matekit", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build annotated records from positions")
    b.add_argument("--input", required=True, help="FEN-per-line file or CSV with a FEN column")
    b.add_argument("--variant", choices=[v.value for v in DatasetVariant], default="ST")
    b.add_argument("--threshold", type=int, default=DEFAULT_THRESHOLD)
    b.add_argument("--depth", type=int, default=DEFAULT_BUILD_DEPTH)
    b.add_argument("--multipv", type=int, default=DEFAULT_MULTIPV)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--engine", required=True, help="engine command, transcript file, or 'toy'")
    b.add_argument("--out", required=True)
    b.add_argument("--fen-column", default="FEN")
    b.add_argument("--floor-margin", type=int, default=DEFAULT_FLOOR_MARGIN)
    b.add_argument("--max-plies", type=int, default=DEFAULT_MAX_PLIES)
    b.add_argument("--templates", help="strategy template pool file")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--record-transcript", help="write the engine conversation to this transcript")
    b.set_defaults(func=_cmd_build)

    s = sub.add_parser("summarize", help="distribution summary of a record file")
    s.add_argument("--in", dest="input", required=True)
    s.set_defaults(func=_cmd_summarize)

    v = sub.add_parser("validate", help="check every record against the variant field rules")
    v.add_argument("--in", dest="input", required=True)
    v.set_defaults(func=_cmd_validate)

    d = sub.add_parser("difficulty", help="engine-based difficulty proxies per variant")
    d.add_argument("--in", dest="input", required=True)
    d.add_argument("--engine", required=True)
    d.add_argument("--depth", type=int, default=DIFFICULTY_DEPTH)
    d.add_argument("--out")
    d.set_defaults(func=_cmd_difficulty)

    e = sub.add_parser("eval", help="score a model client on a record file")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--client", required=True, help="replay:<file> | oracle | anti-oracle | random[:seed] | http:<config>")
    e.add_argument("--shots", type=int, default=0)
    e.add_argument("--exemplars", help="record file for few-shot exemplars")
    e.add_argument("--special-tokens", action="store_true")
    e.add_argument("--out", required=True)
    e.add_argument("--max-error-rate", type=float, default=DEFAULT_MAX_ERROR_RATE)
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--save-replay", help="write prompt-hash keyed responses for later replay")
    e.set_defaults(func=_cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())

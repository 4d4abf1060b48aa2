"""Prompt construction, answer extraction and accuracy scoring for move-choice records."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

from .chesscore import Move, Position, parse_fen, render_fen

log = logging.getLogger(__name__)

TEMPLATE_ID = "mate-choice-v1"
DEFAULT_SHOTS = 3
DEFAULT_MAX_ERROR_RATE = 0.2

HEADER = (
    "You are a chess expert. Each position is given in FEN and each candidate move in UCI notation.\n"
    "Choose the better of the candidate moves."
)
QUESTION = "Which candidate move is better? Answer with the move in UCI notation."


class EvalAborted(RuntimeError):
    pass


class ClientError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Prompt building


def format_position_text(pos: Position, special_tokens: bool = False) -> str:
    fen = render_fen(pos)
    if not special_tokens:
        return fen
    placement, turn, rest = fen.split(" ", 2)
    return placement.replace("/", " <line> ") + " <color> " + turn + " " + rest


def strip_special_tokens(text: str) -> str:
    placement, _, rest = text.partition(" <color> ")
    return placement.replace(" <line> ", "/") + " " + rest


@dataclass
class PromptConfig:
    shots: int = 0
    exemplar_pool: list = field(default_factory=list)
    special_tokens: bool = False
    template_id: str = TEMPLATE_ID


def _position_block(record, special_tokens: bool, answer: Optional[str]) -> str:
    pos = parse_fen(record.fen)
    side = "White" if pos.turn else "Black"
    lines = [f"Position: {format_position_text(pos, special_tokens)}", f"Side to move: {side}", "Candidate moves:"]
    for i, c in enumerate(record.candidates, 1):
        lines.append(f"{i}. {c['uci']}")
        if "strategy_text" in c:
            lines.append(f"   Strategy: {c['strategy_text']}")
        if "tactic_text" in c:
            lines.append(f"   Tactic: {c['tactic_text']}")
    if answer is not None:
        lines.append(f"Answer: {answer}")
    return "\n".join(lines)


def build_prompt(test, cfg: PromptConfig) -> str:
    if len(test.candidates) < 2:
        raise ValueError("test record needs at least two candidates")
    if cfg.shots > len(cfg.exemplar_pool):
        raise ValueError(f"{cfg.shots} shots requested but only {len(cfg.exemplar_pool)} exemplars available")
    parts = [HEADER]
    for i, ex in enumerate(cfg.exemplar_pool[: cfg.shots], 1):
        parts.append(f"Example {i}\n" + _position_block(ex, cfg.special_tokens, ex.optimal_uci))
    parts.append(_position_block(test, cfg.special_tokens, None))
    parts.append(QUESTION)
    return "\n\n".join(parts) + "\n"


# ---------------------------------------------------------------------------
# Answer parsing


def parse_move_from_response(text: str, candidates: Sequence[Move]) -> Optional[Move]:
    """Return the candidate mentioned last in ``text``, or None if none appears."""
    if not candidates:
        raise ValueError("candidates must be nonempty")
    lowered = text.lower()
    best_pos, best = -1, None
    for m in candidates:
        uci = m.uci()
        # a 4-char move must not match the prefix of a promotion like e7e8q
        pattern = r"(?<![a-z0-9])" + re.escape(uci) + r"(?![a-z0-9])"
        for match in re.finditer(pattern, lowered):
            if match.start() > best_pos:
                best_pos, best = match.start(), m
    return best


# ---------------------------------------------------------------------------
# Clients


class ModelClient(Protocol):
    def send(self, prompt: str) -> str: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ReplayClient:
    """Answers from a JSON-lines file of ``{"prompt_hash", "response"}`` objects."""

    def __init__(self, responses: dict):
        self.responses = responses

    @classmethod
    def from_file(cls, path) -> "ReplayClient":
        responses = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    responses[obj["prompt_hash"]] = obj["response"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad replay entry: {exc}") from exc
        return cls(responses)

    def send(self, prompt: str) -> str:
        key = prompt_hash(prompt)
        if key not in self.responses:
            raise ClientError(f"no recorded response for prompt {key[:12]}")
        return self.responses[key]


def write_replay_file(path, entries: dict) -> None:
    """Write {prompt: response} as a replay file."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for prompt, response in entries.items():
            fh.write(json.dumps({"prompt_hash": prompt_hash(prompt), "response": response}) + "\n")


class ScriptedClient:
    def __init__(self, responder: Callable[[str], str]):
        self.responder = responder

    def send(self, prompt: str) -> str:
        return self.responder(prompt)


def _keyed_client(records, cfg: PromptConfig, choose: Callable) -> ScriptedClient:
    answers = {}
    for r in records:
        answers[prompt_hash(build_prompt(r, cfg))] = choose(r)

    def respond(prompt: str) -> str:
        key = prompt_hash(prompt)
        if key not in answers:
            raise ClientError("prompt not among the scripted records")
        return answers[key]

    return ScriptedClient(respond)


def oracle_client(records, cfg: PromptConfig) -> ScriptedClient:
    return _keyed_client(records, cfg, lambda r: f"The best move is {r.optimal_uci}.")


def anti_oracle_client(records, cfg: PromptConfig) -> ScriptedClient:
    return _keyed_client(records, cfg, lambda r: f"The best move is {r.candidates[1 - r.label]['uci']}.")


def random_client(records, cfg: PromptConfig, seed: int = 0) -> ScriptedClient:
    rng = random.Random(seed)
    return _keyed_client(records, cfg, lambda r: f"I pick {rng.choice(r.candidates)['uci']}.")


def _dig(obj, path: str):
    for part in path.split(".") if path else []:
        if isinstance(obj, list):
            obj = obj[int(part)]
        else:
            obj = obj[part]
    return obj


def _fill(template, prompt: str):
    if isinstance(template, str):
        return prompt if template == "{prompt}" else template.replace("{prompt}", prompt)
    if isinstance(template, dict):
        return {k: _fill(v, prompt) for k, v in template.items()}
    if isinstance(template, list):
        return [_fill(v, prompt) for v in template]
    return template


class HttpClient:
    """Generic JSON-over-HTTP adapter driven by a config mapping.

    Keys: ``url``, ``method`` (default POST), ``headers``, ``body`` (JSON
    template; any string equal to or containing ``{prompt}`` is filled),
    ``response_path`` (dotted path into the JSON reply, list indices as
    integers), ``timeout`` seconds.  Header values of the form ``$NAME`` are
    read from the environment.
    """

    def __init__(self, config: dict, transport=None):
        import httpx

        self.config = config
        headers = {}
        for k, v in (config.get("headers") or {}).items():
            if isinstance(v, str) and v.startswith("$"):
                v = os.environ.get(v[1:], "")
            headers[k] = v
        self._client = httpx.Client(headers=headers, timeout=config.get("timeout", 60), transport=transport)
        self._httpx = httpx

    @classmethod
    def from_file(cls, path, transport=None) -> "HttpClient":
        return cls(json.loads(Path(path).read_text(encoding="utf-8")), transport=transport)

    def send(self, prompt: str) -> str:
        cfg = self.config
        body = _fill(cfg.get("body", {"prompt": "{prompt}"}), prompt)
        try:
            resp = self._client.request(cfg.get("method", "POST"), cfg["url"], json=body)
            resp.raise_for_status()
            return str(_dig(resp.json(), cfg.get("response_path", "")))
        except (self._httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ClientError(f"http client failure: {exc}") from exc


# ---------------------------------------------------------------------------
# Running


@dataclass
class EvalResult:
    accuracy: float
    n: int
    per_sample: list
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "n": self.n, "per_sample": self.per_sample, "meta": self.meta}

    @classmethod
    def from_dict(cls, obj: dict) -> "EvalResult":
        return cls(obj["accuracy"], obj["n"], obj["per_sample"], obj.get("meta", {}))


def _evaluate_one(client, record, cfg: PromptConfig, index: int) -> dict:
    prompt = build_prompt(record, cfg)
    moves = record.moves
    entry = {"record_id": index, "extracted": None, "correct": False, "errored": False}
    try:
        response = client.send(prompt)
    except Exception as exc:  # transport failures of any client kind
        log.warning("record %d: client error: %s", index, exc)
        entry["errored"] = True
        entry["error"] = str(exc)
        return entry
    choice = parse_move_from_response(response, moves)
    if choice is not None:
        entry["extracted"] = choice.uci()
        entry["correct"] = choice == moves[record.label]
    return entry


def run_eval(
    client,
    records: Sequence,
    cfg: PromptConfig,
    max_error_rate: float = DEFAULT_MAX_ERROR_RATE,
    workers: int = 1,
) -> EvalResult:
    """Score the client's choices; unparseable or failed answers count as wrong."""
    records = list(records)
    if not records:
        raise ValueError("no records to evaluate")
    budget = max_error_rate * len(records)
    per_sample: list = [None] * len(records)
    errors = 0

    def check(entry):
        nonlocal errors
        if entry["errored"]:
            errors += 1
            if errors > budget:
                raise EvalAborted(f"{errors} client errors exceed {max_error_rate:.0%} of {len(records)} samples")

    if workers <= 1:
        for i, r in enumerate(records):
            per_sample[i] = _evaluate_one(client, r, cfg, i)
            check(per_sample[i])
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(_evaluate_one, client, r, cfg, i) for i, r in enumerate(records)]
            for i, fut in enumerate(futures):
                per_sample[i] = fut.result()
                check(per_sample[i])

    correct = sum(1 for e in per_sample if e["correct"])
    return EvalResult(
        accuracy=correct / len(records),
        n=len(records),
        per_sample=per_sample,
        meta={
            "template_id": cfg.template_id,
            "shots": cfg.shots,
            "special_tokens": cfg.special_tokens,
            "answer_rule": "last-mentioned candidate; none counts as incorrect",
            "errored": errors,
        },
    )


def write_result(result: EvalResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result.to_dict(), fh, indent=1)
        fh.write("\n")


def load_result(path) -> EvalResult:
    return EvalResult.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

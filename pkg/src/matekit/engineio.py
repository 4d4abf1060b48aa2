"""UCI engine client.

An :class:`EngineSession` talks to an engine over a line transport.  Three
transports share the same contract: a child process, an in-process engine
object, and a transcript replay for hermetic tests.  A recording wrapper
captures any live conversation as a transcript.

Transcript format (one event per line)::

    > uci              command the client is expected to send
    < id name Foo      line the engine answers with
    # comment

Bare lines without a ``<``/``>`` prefix are treated as engine output.  A
transcript without any ``>`` line is output-only: commands are not checked.
"""

from __future__ import annotations

import functools
import logging
import os
import queue
import shlex
import subprocess
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence, Union

from .chesscore import (
    Move,
    MoveParseError,
    Position,
    _make,
    legal_moves,
    parse_uci_move,
    render_fen,
)

log = logging.getLogger(__name__)

MATE_ORDINAL = 100_000
DEFAULT_HANDSHAKE_TIMEOUT = 10.0
DEFAULT_SEARCH_TIMEOUT = 120.0
DEFAULT_BUILD_DEPTH = 18
DEFAULT_TEST_DEPTH = 8


class EngineError(RuntimeError):
    pass


class EngineTimeout(EngineError):
    pass


class EngineCrashed(EngineError):
    pass


class ProtocolError(EngineError):
    """Engine output or transcript does not follow the expected grammar."""


class SessionBusy(EngineError):
    pass


# ---------------------------------------------------------------------------
# Scores


@functools.total_ordering
@dataclass(frozen=True)
class Score:
    """Engine evaluation from the side to move's point of view."""

    def ordinal(self) -> int:
        raise NotImplementedError

    def _key(self) -> tuple:
        raise NotImplementedError

    def __lt__(self, other):
        if not isinstance(other, Score):
            return NotImplemented
        return self._key() < other._key()

    def is_mate(self) -> bool:
        return isinstance(self, MateIn)


@dataclass(frozen=True)
class Centipawns(Score):
    value: int

    def ordinal(self) -> int:
        return self.value

    def _key(self) -> tuple:
        return (1, self.value)

    def negate(self) -> "Centipawns":
        return Centipawns(-self.value)

    def to_uci(self) -> str:
        return f"cp {self.value}"


@dataclass(frozen=True)
class MateIn(Score):
    # moves to mate; positive means the side to move mates
    plies: int

    def __post_init__(self):
        if self.plies == 0:
            raise ValueError("MateIn requires a nonzero count")

    def ordinal(self) -> int:
        if self.plies > 0:
            return MATE_ORDINAL - self.plies
        return -MATE_ORDINAL - self.plies

    def _key(self) -> tuple:
        if self.plies > 0:
            return (2, -self.plies)
        return (0, -self.plies)

    def negate(self) -> "MateIn":
        return MateIn(-self.plies)

    def to_uci(self) -> str:
        return f"mate {self.plies}"


def score_ordinal(x: Score) -> int:
    """Order-preserving integer: mate in k -> 100000 - k, mated in k -> -100000 + k."""
    return x.ordinal()


def parse_score(kind: str, value: str) -> Score:
    if kind == "cp":
        return Centipawns(int(value))
    if kind == "mate":
        return MateIn(int(value))
    raise ProtocolError(f"unknown score kind {kind!r}")


def score_from_json(obj: dict) -> Score:
    if "mate" in obj:
        return MateIn(int(obj["mate"]))
    return Centipawns(int(obj["cp"]))


def score_to_json(score: Score) -> dict:
    if isinstance(score, MateIn):
        return {"mate": score.plies}
    return {"cp": score.value}


@dataclass(frozen=True)
class ScoredLine:
    rank: int
    score: Score
    pv: tuple  # of Move


@dataclass(frozen=True)
class AnalysisRequest:
    depth: int = DEFAULT_BUILD_DEPTH
    multipv: int = 1
    move_filter: Optional[tuple] = None

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be positive")
        if self.multipv < 1:
            raise ValueError("multipv must be positive")


# ---------------------------------------------------------------------------
# Transports


class Transport(Protocol):
    def send(self, line: str) -> None: ...

    def readline(self, timeout: float) -> str: ...

    def close(self) -> None: ...


_EOF = object()


class ProcessTransport:
    """Child process speaking UCI on stdin/stdout."""

    def __init__(self, command: Union[str, Sequence[str]], cwd=None):
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.argv = argv
        try:
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                cwd=cwd,
            )
        except OSError as exc:
            raise EngineError(f"cannot launch engine {argv!r}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for raw in self.proc.stdout:
            self._lines.put(raw.decode("ascii", errors="replace").rstrip("\r\n"))
        self._lines.put(_EOF)

    def send(self, line: str) -> None:
        try:
            self.proc.stdin.write(line.encode("ascii") + b"\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise EngineCrashed(f"engine stdin closed: {exc}") from exc

    def readline(self, timeout: float) -> str:
        try:
            item = self._lines.get(timeout=timeout)
        except queue.Empty:
            raise EngineTimeout(f"no engine output within {timeout:g}s") from None
        if item is _EOF:
            self._lines.put(_EOF)
            raise EngineCrashed(f"engine exited (code {self.proc.poll()})")
        return item

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self.proc.stdin.close()
            except OSError:
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class InProcessTransport:
    """Drives an engine object exposing ``handle(command) -> list[str]``."""

    def __init__(self, engine):
        self.engine = engine
        self._out: list = []
        self.sent: list = []

    def send(self, line: str) -> None:
        self.sent.append(line)
        self._out.extend(self.engine.handle(line))

    def readline(self, timeout: float) -> str:
        if not self._out:
            raise EngineTimeout("in-process engine has no pending output")
        return self._out.pop(0)

    def close(self) -> None:
        pass


def parse_transcript(text: str) -> list:
    events = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        if line.startswith("> "):
            events.append((">", line[2:]))
        elif line.startswith("< "):
            events.append(("<", line[2:]))
        elif line in (">", "<"):
            events.append((line, ""))
        else:
            events.append(("<", line))
    return events


class ReplayTransport:
    """Replays a recorded conversation; each sent command must match in order."""

    def __init__(self, events: Iterable[tuple], source: str = "<transcript>"):
        self.events = list(events)
        self.source = source
        self.strict = any(kind == ">" for kind, _ in self.events)
        self._pos = 0
        self._out: list = []
        self.sent: list = []
        self._drain()

    @classmethod
    def from_file(cls, path) -> "ReplayTransport":
        path = Path(path)
        return cls(parse_transcript(path.read_text(encoding="ascii")), source=str(path))

    @classmethod
    def from_text(cls, text: str) -> "ReplayTransport":
        return cls(parse_transcript(text))

    def _drain(self):
        while self._pos < len(self.events) and self.events[self._pos][0] == "<":
            self._out.append(self.events[self._pos][1])
            self._pos += 1

    def send(self, line: str) -> None:
        self.sent.append(line)
        if not self.strict:
            return
        if self._pos >= len(self.events):
            raise ProtocolError(f"{self.source}: transcript exhausted, client sent {line!r}")
        expected = self.events[self._pos][1]
        if expected != line:
            raise ProtocolError(
                f"{self.source}: desync at event {self._pos}: expected {expected!r}, client sent {line!r}"
            )
        self._pos += 1
        self._drain()

    def readline(self, timeout: float) -> str:
        if not self._out:
            raise EngineTimeout(f"{self.source}: no further engine output in transcript")
        return self._out.pop(0)

    def close(self) -> None:
        pass


class RecordingTransport:
    """Wraps a transport and writes the conversation as a transcript."""

    def __init__(self, inner, path):
        self.inner = inner
        self.path = Path(path)
        self._fh = open(self.path, "w", encoding="ascii", newline="\n")

    def send(self, line: str) -> None:
        self._fh.write(f"> {line}\n")
        self.inner.send(line)

    def readline(self, timeout: float) -> str:
        line = self.inner.readline(timeout)
        self._fh.write(f"< {line}\n")
        return line

    def close(self) -> None:
        self.inner.close()
        self._fh.close()


# ---------------------------------------------------------------------------
# Session


def _parse_info(tokens: list) -> Optional[tuple]:
    """Return (multipv, Score, pv-texts) from an ``info`` line, or None."""
    rank = 1
    score = None
    pv = None
    i = 1
    while i < len(tokens):
        tok = tokens[i]
        if tok == "string":
            return None
        if tok == "multipv":
            rank = int(tokens[i + 1])
            i += 2
        elif tok == "score":
            kind, value = tokens[i + 1], tokens[i + 2]
            i += 3
            if i < len(tokens) and tokens[i] in ("lowerbound", "upperbound"):
                return None
            if kind == "mate" and int(value) == 0:
                return None
            score = parse_score(kind, value)
        elif tok == "pv":
            pv = tokens[i + 1 :]
            break
        else:
            i += 1
    if score is None or not pv:
        return None
    return rank, score, pv


class EngineSession:
    def __init__(
        self,
        transport,
        handshake_timeout: float = DEFAULT_HANDSHAKE_TIMEOUT,
        search_timeout: float = DEFAULT_SEARCH_TIMEOUT,
    ):
        self.transport = transport
        self.handshake_timeout = handshake_timeout
        self.search_timeout = search_timeout
        self.name: Optional[str] = None
        self.ready = False
        self._lock = threading.Lock()

    def _send(self, line: str) -> None:
        log.debug(">> %s", line)
        self.transport.send(line)

    def _read(self, timeout: float) -> str:
        line = self.transport.readline(timeout)
        log.debug("<< %s", line)
        return line

    def handshake(self) -> None:
        self._send("uci")
        while True:
            line = self._read(self.handshake_timeout)
            tokens = line.split()
            if not tokens:
                continue
            if tokens[0] == "uciok":
                break
            if tokens[0] == "id":
                if len(tokens) < 3 or tokens[1] not in ("name", "author"):
                    raise ProtocolError(f"malformed id line: {line!r}")
                if tokens[1] == "name":
                    self.name = " ".join(tokens[2:])
            elif tokens[0] == "option":
                if len(tokens) < 3 or tokens[1] != "name":
                    raise ProtocolError(f"malformed option line: {line!r}")
            elif tokens[0] in ("readyok", "bestmove", "info"):
                raise ProtocolError(f"unexpected {tokens[0]!r} before uciok")
            # anything else is free-form banner text
        self._send("isready")
        while True:
            line = self._read(self.handshake_timeout)
            if line.strip() == "readyok":
                break
        self.ready = True

    def analyze(self, pos: Position, req: AnalysisRequest) -> list:
        if not self.ready:
            raise EngineError("session not ready")
        if not self._lock.acquire(blocking=False):
            raise SessionBusy("a search is already in flight on this session")
        try:
            return self._analyze(pos, req)
        finally:
            self._lock.release()

    def _analyze(self, pos: Position, req: AnalysisRequest) -> list:
        legal = legal_moves(pos)
        if req.move_filter:
            for m in req.move_filter:
                if m not in legal:
                    raise EngineError(f"searchmoves contains illegal move {m.uci()}")
        self._send(f"setoption name MultiPV value {req.multipv}")
        self._send(f"position fen {render_fen(pos)}")
        go = f"go depth {req.depth}"
        if req.move_filter:
            go += " searchmoves " + " ".join(m.uci() for m in req.move_filter)
        self._send(go)

        latest: dict = {}
        while True:
            line = self._read(self.search_timeout)
            tokens = line.split()
            if not tokens:
                continue
            if tokens[0] == "info":
                try:
                    parsed = _parse_info(tokens)
                except (IndexError, ValueError) as exc:
                    raise ProtocolError(f"unparseable info line {line!r}: {exc}") from exc
                if parsed is not None:
                    rank, score, pv = parsed
                    latest[rank] = (score, pv)
            elif tokens[0] == "bestmove":
                if len(tokens) < 2:
                    raise ProtocolError(f"malformed bestmove line {line!r}")
                if tokens[1] in ("(none)", "0000"):
                    return []
                break
            elif tokens[0] in ("uciok", "readyok"):
                raise ProtocolError(f"unexpected {tokens[0]!r} during search")

        if not latest:
            raise ProtocolError("engine sent bestmove without any scored info line")
        lines = []
        for rank in sorted(latest):
            if rank > req.multipv:
                continue
            score, pv_texts = latest[rank]
            lines.append(ScoredLine(rank, score, self._replay_pv(pos, legal, pv_texts)))
        if [line.rank for line in lines] != list(range(1, len(lines) + 1)):
            raise ProtocolError(f"multipv ranks not contiguous: {[line.rank for line in lines]}")
        return lines

    @staticmethod
    def _replay_pv(pos: Position, legal: list, pv_texts: list) -> tuple:
        moves = []
        cur = pos
        cur_legal = legal
        for text in pv_texts:
            try:
                m = parse_uci_move(text)
            except MoveParseError as exc:
                if not moves:
                    raise ProtocolError(f"bad pv move {text!r}") from exc
                break
            if m not in cur_legal:
                if not moves:
                    raise ProtocolError(f"pv starts with illegal move {text} in {render_fen(pos)}")
                log.warning("truncating pv at illegal move %s", text)
                break
            moves.append(m)
            cur = _make(cur, m)
            cur_legal = legal_moves(cur)
        return tuple(moves)

    def score_line(self, pos: Position, move: Move, depth: int) -> ScoredLine:
        lines = self.analyze(pos, AnalysisRequest(depth=depth, multipv=1, move_filter=(move,)))
        if not lines:
            raise EngineError(f"engine returned no line for {move.uci()}")
        line = lines[0]
        if line.pv[0] != move:
            raise ProtocolError(f"searchmoves {move.uci()} ignored; engine answered {line.pv[0].uci()}")
        return line

    def score_move(self, pos: Position, move: Move, depth: int) -> Score:
        return self.score_line(pos, move, depth).score

    def close(self) -> None:
        try:
            self._send("quit")
        except EngineError:
            pass
        self.transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def make_transport(endpoint, record=None):
    """Resolve an endpoint string or transport.

    ``"toy"`` selects the bundled in-process toy engine; an existing file is a
    transcript; anything else is a command line to launch.
    """
    if hasattr(endpoint, "send") and hasattr(endpoint, "readline"):
        transport = endpoint
    elif isinstance(endpoint, Path) or (isinstance(endpoint, str) and os.path.isfile(endpoint)):
        transport = ReplayTransport.from_file(endpoint)
    elif endpoint == "toy":
        from .toyengine import ToyEngine

        transport = InProcessTransport(ToyEngine())
    else:
        transport = ProcessTransport(endpoint)
    if record is not None:
        transport = RecordingTransport(transport, record)
    return transport


def open_session(
    endpoint,
    handshake_timeout: float = DEFAULT_HANDSHAKE_TIMEOUT,
    search_timeout: float = DEFAULT_SEARCH_TIMEOUT,
    record=None,
) -> EngineSession:
    transport = make_transport(endpoint, record=record)
    session = EngineSession(transport, handshake_timeout, search_timeout)
    try:
        session.handshake()
    except BaseException:
        transport.close()
        raise
    return session


def analyze(session: EngineSession, pos: Position, req: AnalysisRequest) -> list:
    return session.analyze(pos, req)


def score_move(session: EngineSession, pos: Position, move: Move, depth: int = DEFAULT_BUILD_DEPTH) -> Score:
    return session.score_move(pos, move, depth)


class EnginePool:
    """Fixed set of sessions; each is handed to one worker at a time."""

    def __init__(self, sessions: Iterable[EngineSession]):
        self.sessions = list(sessions)
        self._free: queue.Queue = queue.Queue()
        for s in self.sessions:
            self._free.put(s)

    @classmethod
    def open(cls, endpoint, size: int, **kwargs) -> "EnginePool":
        return cls(open_session(endpoint, **kwargs) for _ in range(size))

    @contextmanager
    def session(self):
        s = self._free.get()
        try:
            yield s
        finally:
            self._free.put(s)

    def close(self) -> None:
        for s in self.sessions:
            s.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

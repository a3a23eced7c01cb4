"""Log line grammar, character vocabulary, batching and realism metrics.

The line grammar (one event per line)::

    {t} - New call: call_{id} from {o} to {d} guests {g}
    {t} - Assign call: call_{id} on car_{SS}_{CC}
    {t} - Load call: call_{id} on car_{SS}_{CC}
    {t} - Unload call: call_{id} on car_{SS}_{CC} overtravel {v}

A line is matched field by field. When a field fails, the reported position
is the offset where that field starts, so ``"94_03"`` fails at 0 (the
timestamp field ``"<int> - "`` never matched) and a line cut off before its
car suffix fails at its own length.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, fields
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .sim import CarId, EventKind, LogEvent

_INT = r"(0|[1-9][0-9]*)"
_POS = r"([1-9][0-9]*)"

_HEAD = [
    ("timestamp", re.compile(_INT + r" - ")),
    ("keyword", re.compile(r"(New|Assign|Load|Unload) call: ")),
    ("call id", re.compile(r"call_" + _POS)),
]
_CAR = ("car", re.compile(r" on car_([0-9]{2})_([0-9]{2})"))
_TAILS = {
    "New": [
        ("origin", re.compile(r" from " + _POS)),
        ("destination", re.compile(r" to " + _POS)),
        ("guests", re.compile(r" guests " + _POS)),
    ],
    "Assign": [_CAR],
    "Load": [_CAR],
    "Unload": [_CAR, ("overtravel", re.compile(r" overtravel " + _INT))],
}


def _casefree(table):
    return [(name, re.compile(p.pattern, re.IGNORECASE)) for name, p in table]


_GRAMMAR = {
    False: (_HEAD, _TAILS),
    True: (_casefree(_HEAD), {k: _casefree(v) for k, v in _TAILS.items()}),
}


@dataclass(frozen=True)
class ParseFailure:
    line: str
    position: int
    expected: str

    def __bool__(self) -> bool:
        return False


def format_event(event: LogEvent) -> str:
    head = f"{event.time} - {event.kind.value} call: call_{event.call_id}"
    if event.kind is EventKind.NEW:
        return f"{head} from {event.origin} to {event.destination} guests {event.guests}"
    line = f"{head} on {event.car}"
    if event.kind is EventKind.UNLOAD:
        line += f" overtravel {event.overtravel}"
    return line


def format_log(events: Iterable[LogEvent]) -> str:
    return "".join(format_event(e) + "\n" for e in events)


def parse_line(line: str, *, ignore_case: bool = False) -> Union[LogEvent, ParseFailure]:
    """Parse one line; returns a :class:`ParseFailure` (falsy) instead of raising.

    ``ignore_case`` accepts keyword spellings in any case, which is what a
    lowercase-folded generator emits.
    """
    head, tails = _GRAMMAR[ignore_case]
    pos = 0
    groups: list[str] = []

    def take(name: str, pattern: re.Pattern) -> Optional[ParseFailure]:
        nonlocal pos
        m = pattern.match(line, pos)
        if m is None:
            return ParseFailure(line, pos, name)
        groups.extend(m.groups())
        pos = m.end()
        return None

    for name, pattern in head:
        if (fail := take(name, pattern)) is not None:
            return fail
    kind = groups[1].capitalize()
    for name, pattern in tails[kind]:
        if (fail := take(name, pattern)) is not None:
            return fail
    if pos != len(line):
        return ParseFailure(line, pos, "end of line")

    time, call_id = int(groups[0]), int(groups[2])
    if kind == "New":
        origin, dest, guests = (int(g) for g in groups[3:6])
        return LogEvent(time, EventKind.NEW, call_id, origin=origin, destination=dest, guests=guests)
    car = CarId(int(groups[3]), int(groups[4]))
    if kind == "Unload":
        return LogEvent(time, EventKind.UNLOAD, call_id, car=car, overtravel=int(groups[5]))
    return LogEvent(time, EventKind(kind), call_id, car=car)


def split_lines(text: str) -> list[str]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


# -- vocabulary ---------------------------------------------------------------


class VocabError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    chars: tuple[str, ...]
    lowercase_folded: bool = True

    def __post_init__(self):
        if list(self.chars) != sorted(set(self.chars)):
            raise VocabError("vocabulary characters must be distinct and sorted by code point")
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.chars)})

    def __len__(self) -> int:
        return len(self.chars)

    @property
    def size(self) -> int:
        return len(self.chars)

    def index(self, char: str) -> int:
        return self._index[char]  # type: ignore[attr-defined]

    def fold(self, text: str) -> str:
        return text.lower() if self.lowercase_folded else text

    def digest(self) -> str:
        payload = repr((self.chars, self.lowercase_folded)).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


def build_vocab(corpus: str, fold_lowercase: bool = True) -> Vocabulary:
    if not corpus:
        raise VocabError("cannot build a vocabulary from an empty corpus")
    if fold_lowercase:
        corpus = corpus.lower()
    return Vocabulary(tuple(sorted(set(corpus))), fold_lowercase)


def encode(text: str, vocab: Vocabulary) -> np.ndarray:
    text = vocab.fold(text)
    index = vocab._index  # type: ignore[attr-defined]
    try:
        return np.fromiter((index[c] for c in text), dtype=np.int64, count=len(text))
    except KeyError:
        for offset, c in enumerate(text):
            if c not in index:
                raise VocabError(f"character {c!r} at offset {offset} is not in the vocabulary") from None
        raise


def decode(tokens: Sequence[int] | np.ndarray, vocab: Vocabulary) -> str:
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.size and (tokens.min() < 0 or tokens.max() >= vocab.size):
        bad = int(tokens[(tokens < 0) | (tokens >= vocab.size)][0])
        raise VocabError(f"token index {bad} outside vocabulary of size {vocab.size}")
    return "".join(vocab.chars[i] for i in tokens.tolist())


def batchify(encoded: np.ndarray, seq_length: int, batch_size: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Cut the token stream into (input, next-char target) batches.

    Windows of ``seq_length + 1`` tokens are taken back to back from the
    start; leftover windows that do not fill a batch and the final partial
    window are dropped.
    """
    if seq_length < 1 or batch_size < 1:
        raise ValueError("seq_length and batch_size must be positive")
    encoded = np.asarray(encoded, dtype=np.int64)
    width = seq_length + 1
    n_batches = len(encoded) // (width * batch_size)
    if n_batches == 0:
        raise ValueError(
            f"corpus of {len(encoded)} tokens is too small for batch_size={batch_size} x {width} tokens"
        )
    windows = encoded[: n_batches * batch_size * width].reshape(n_batches, batch_size, width)
    return [(w[:, :-1].copy(), w[:, 1:].copy()) for w in windows]


# -- realism ------------------------------------------------------------------

_ORDER = (EventKind.NEW, EventKind.ASSIGN, EventKind.LOAD, EventKind.UNLOAD)


@dataclass(frozen=True)
class RealismReport:
    line_count: int
    parsed_count: int
    line_parse_rate: float
    timestamp_monotonic_fraction: float
    # call ids whose events are an in-order prefix of New, Assign, Load, Unload
    lifecycle_complete_rate: float
    # call ids with all four events in order
    lifecycle_full_rate: float
    lifecycle_violation_rate: float
    duplicate_new_rate: float
    new_count: int
    assign_count: int
    load_count: int
    unload_count: int

    def to_kv(self) -> str:
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in fields(self))

    @classmethod
    def csv_header(cls) -> str:
        return ",".join(f.name for f in fields(cls))

    def csv_row(self) -> str:
        return ",".join(_fmt(getattr(self, f.name)) for f in fields(self))


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def _lifecycle_status(events: list[LogEvent]) -> str:
    """'complete' (all four, in order), 'incomplete' (proper prefix) or 'violation'."""
    if len(events) > 4:
        return "violation"
    for expected, ev in zip(_ORDER, events):
        if ev.kind is not expected:
            return "violation"
    if any(b.time < a.time for a, b in zip(events, events[1:])):
        return "violation"
    cars = {ev.car for ev in events[1:]}
    if len(cars) > 1:
        return "violation"
    return "complete" if len(events) == 4 else "incomplete"


def realism_features(log_text: str, *, ignore_case: bool = False) -> RealismReport:
    lines = split_lines(log_text)
    parsed = [ev for ev in (parse_line(line, ignore_case=ignore_case) for line in lines) if ev]

    pairs = len(parsed) - 1
    if pairs > 0:
        ordered = sum(1 for a, b in zip(parsed, parsed[1:]) if b.time >= a.time)
        monotonic = ordered / pairs
    else:
        monotonic = 1.0

    by_call: dict[int, list[LogEvent]] = {}
    for ev in parsed:
        by_call.setdefault(ev.call_id, []).append(ev)
    status = [_lifecycle_status(evs) for evs in by_call.values()]
    n_calls = len(status)

    def rate(count: int, total: int) -> float:
        return count / total if total else 0.0

    counts = {kind: 0 for kind in _ORDER}
    seen_new: set[int] = set()
    dup_new = 0
    for ev in parsed:
        counts[ev.kind] += 1
        if ev.kind is EventKind.NEW:
            dup_new += ev.call_id in seen_new
            seen_new.add(ev.call_id)

    return RealismReport(
        line_count=len(lines),
        parsed_count=len(parsed),
        line_parse_rate=rate(len(parsed), len(lines)),
        timestamp_monotonic_fraction=monotonic,
        lifecycle_complete_rate=rate(n_calls - status.count("violation"), n_calls),
        lifecycle_full_rate=rate(status.count("complete"), n_calls),
        lifecycle_violation_rate=rate(status.count("violation"), n_calls),
        duplicate_new_rate=rate(dup_new, counts[EventKind.NEW]),
        new_count=counts[EventKind.NEW],
        assign_count=counts[EventKind.ASSIGN],
        load_count=counts[EventKind.LOAD],
        unload_count=counts[EventKind.UNLOAD],
    )

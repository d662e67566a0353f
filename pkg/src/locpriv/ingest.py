"""Check-in ingestion: records -> discretized per-user sequences -> Markov priors.

Input rows carry ``(user_id, location_id, timestamp)`` with the timestamp in
unix seconds.  Time is cut into fixed windows aligned to the earliest
check-in.  The ``top_k`` most visited venues keep their identity; any window
without one of them maps to the extra "somewhere else" location ``K``.
"""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, NoConvergence, NoRecords, SequenceTooShort, TooManyMalformed, TooShort
from .markov import MarkovPrior, stationary_distribution, validate_prior

log = logging.getLogger(__name__)

TSV = "tsv"
CSV = "csv"
COLUMNS = ("user_id", "location_id", "timestamp")
DEFAULT_WINDOW = 20 * 24 * 3600
MALFORMED_THRESHOLD = 0.01


@dataclass(frozen=True)
class CheckinRecord:
    user_id: str
    location_id: str
    timestamp: int


@dataclass(frozen=True)
class ParseResult:
    records: list[CheckinRecord]
    malformed: int
    lines: int


def parse_checkins(
    stream,
    fmt: str = TSV,
    columns: tuple[str, str, str] | None = None,
    max_malformed: float = MALFORMED_THRESHOLD,
) -> ParseResult:
    """Parse check-in lines from a binary or text stream.

    A header row naming ``user_id``, ``location_id`` and ``timestamp`` fixes
    the column order; otherwise ``columns`` (default: that order) does.
    Malformed lines are counted and skipped, up to ``max_malformed`` of the
    data lines.
    """
    if fmt not in (TSV, CSV):
        raise ValueError(f"unknown format {fmt!r}")
    data = stream.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = [ln for ln in data.splitlines() if ln.strip()]
    if not lines:
        raise EmptyInput("no check-in lines")
    rows = csv.reader(io.StringIO("\n".join(lines)), delimiter="\t" if fmt == TSV else ",")
    rows = [[c.strip() for c in r] for r in rows]

    order = list(columns or COLUMNS)
    if set(rows[0]) >= set(COLUMNS):
        order = None
        idx = [rows[0].index(c) for c in COLUMNS]
        rows = rows[1:]
    else:
        if sorted(order) != sorted(COLUMNS):
            raise ValueError(f"columns must be a permutation of {COLUMNS}")
        idx = [order.index(c) for c in COLUMNS]
    if not rows:
        raise EmptyInput("header without data")

    records, bad = [], 0
    for r in rows:
        try:
            user, loc, ts = (r[i] for i in idx)
            ts = int(ts)
            if not user or not loc or ts < 0:
                raise ValueError
        except (IndexError, ValueError):
            bad += 1
            continue
        records.append(CheckinRecord(user, loc, ts))
    if bad > max_malformed * len(rows):
        raise TooManyMalformed(bad, len(rows), max_malformed)
    if bad:
        log.warning("skipped %d malformed of %d lines", bad, len(rows))
    return ParseResult(records, bad, len(rows))


@dataclass(frozen=True, eq=False)
class DiscretizedUser:
    user_id: str
    sequence: np.ndarray
    fill_mask: np.ndarray
    eval_suffix_len: int = 0

    @property
    def active_steps(self) -> int:
        return int((~self.fill_mask).sum())


@dataclass(frozen=True)
class Discretization:
    users: list[DiscretizedUser]
    M: int
    location_map: dict[str, int]
    window_seconds: int
    origin: int
    n_steps: int
    min_active: int
    tie_rule: str = field(default="count desc, then global popularity, then venue key")

    @property
    def elsewhere(self) -> int:
        return self.M - 1


def discretize(records, window_seconds: int = DEFAULT_WINDOW, top_k: int = 100, min_active: int = 10) -> Discretization:
    """Per-user location sequences on a shared time axis.

    Within a window a user is placed at their most frequent top-K venue;
    count ties go to the more globally visited venue, then the smaller key.
    Users with fewer than ``min_active`` such windows are dropped.
    """
    if window_seconds <= 0 or top_k < 1:
        raise ValueError("need window_seconds > 0 and top_k >= 1")
    records = list(records)
    if not records:
        raise NoRecords("no check-ins")
    popularity = Counter(r.location_id for r in records)
    ranked = sorted(popularity, key=lambda v: (-popularity[v], v))[:top_k]
    location_map = {v: i for i, v in enumerate(ranked)}
    K = len(ranked)

    origin = min(r.timestamp for r in records)
    n_steps = (max(r.timestamp for r in records) - origin) // window_seconds + 1

    per_window: dict[str, dict[int, Counter]] = defaultdict(lambda: defaultdict(Counter))
    for r in records:
        windows = per_window[r.user_id]
        loc = location_map.get(r.location_id)
        if loc is not None:
            windows[(r.timestamp - origin) // window_seconds][loc] += 1

    users = []
    for user_id in sorted(per_window):
        seq = np.full(n_steps, K, dtype=np.int64)
        for step, counts in per_window[user_id].items():
            if counts:
                # lower index means more popular, so it settles count ties
                seq[step] = min(counts, key=lambda i: (-counts[i], i))
        fill = seq == K
        if int((~fill).sum()) >= min_active:
            users.append(DiscretizedUser(user_id, seq, fill))
    return Discretization(users, K + 1, location_map, window_seconds, origin, int(n_steps), min_active)


def fit_transition(sequence, M: int, alpha: float = 0.1) -> MarkovPrior:
    """Smoothed transition counts, with the stationary vector as initial prior.

    Rows without outgoing transitions become uniform when ``alpha`` is 0.
    """
    seq = np.asarray(sequence, dtype=np.int64)
    if seq.size < 2:
        raise SequenceTooShort("need at least two steps to count transitions")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    counts = np.zeros((M, M))
    np.add.at(counts, (seq[:-1], seq[1:]), 1.0)
    counts += alpha
    totals = counts.sum(axis=1, keepdims=True)
    P = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / M)
    try:
        pi = stationary_distribution(P)
    except NoConvergence:
        log.warning("stationary distribution did not converge; using uniform prior")
        pi = np.full(M, 1.0 / M)
    return validate_prior(pi, P)


def split_train_eval(user: DiscretizedUser, eval_T: int) -> tuple[np.ndarray, np.ndarray]:
    """Hold out the last ``eval_T`` steps as the trajectory to reconstruct."""
    n = len(user.sequence)
    if eval_T < 1 or n <= eval_T:
        raise TooShort(f"sequence of {n} steps cannot hold out {eval_T}")
    return user.sequence[: n - eval_T].copy(), user.sequence[n - eval_T:].copy()

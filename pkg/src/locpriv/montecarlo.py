"""Monte Carlo estimates of ``Pr[d(X, Xhat) <= s]`` and parameter sweeps.

Trials are paired: for a master seed, trial ``i`` always draws its
trajectory from stream ``(i, 0)`` and its noise from ``(i, 1)``, whichever
estimator is being scored.  Success counts are integers, so splitting trials
across workers cannot change a result.
"""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import rng
from .bounds import BoundReport, bound_report
from .errors import InvalidGrid
from .estimators import hamming, map_estimate, prior_estimate
from .markov import MarkovPrior, matrix_powers, sample_from_uniforms, synthetic_prior
from .mechanism import GAUSSIAN, RAW, Mechanism, Scenario, random_schedule

DEFAULT_TRIALS = 1000
THREADS_ENV = "LOCPRIV_THREADS"

MAP = "map"
PRIOR = "prior"
CONSTANT = "constant"
CONSTANT_MAX = "constant_max"
KINDS = (MAP, PRIOR, CONSTANT, CONSTANT_MAX)


@dataclass(frozen=True)
class LossEstimate:
    mean: float
    stderr: float
    n_trials: int
    estimator: str
    successes: int
    location: int | None = None

    @classmethod
    def from_count(cls, successes: int, n: int, estimator: str, location: int | None = None):
        mean = successes / n
        return cls(mean, math.sqrt(mean * (1.0 - mean) / n), n, estimator, int(successes), location)

    def to_dict(self) -> dict:
        return asdict(self)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _chunked_map(fn, n: int, threads: int | None) -> list:
    threads = threads or default_threads()
    if threads <= 1 or n < 2:
        return [fn(0, n)]
    bounds = np.linspace(0, n, min(threads, n) + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, bounds[:-1], bounds[1:]))


def simulate_trials(
    prior: MarkovPrior,
    scen: Scenario,
    mech: Mechanism,
    n_trials: int,
    master_seed: int,
    observations: bool = True,
) -> tuple[np.ndarray, np.ndarray | None]:
    """Trajectories ``(n, T)`` and, optionally, released counts ``(n, T)``."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    scen.check(prior.M)
    T = scen.T
    X = sample_from_uniforms(prior, rng.uniforms(master_seed, n_trials, T, rng.TRAJECTORY_STREAM))
    if not observations:
        return X, None
    Y = np.asarray(scen.others, dtype=float)[None, :] + (X == np.asarray(scen.c)[None, :])
    if mech.kind == GAUSSIAN:
        Y = Y + mech.sigma * rng.normals(master_seed, n_trials, T, rng.NOISE_STREAM)
    return X, Y


def _map_distances(prior, scen, mech, X, Y, threads) -> np.ndarray:
    def work(lo, hi):
        return np.array(
            [hamming(X[i], map_estimate(prior, Y[i], scen, mech).traj) for i in range(lo, hi)],
            dtype=np.int64,
        )

    return np.concatenate(_chunked_map(work, X.shape[0], threads))


def _location_counts(X: np.ndarray, M: int) -> np.ndarray:
    counts = np.zeros((X.shape[0], M), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(X.shape[0]), X.shape[1]), X.ravel()), 1)
    return counts


def _best_constant(X: np.ndarray, M: int, s: int, exclude=()) -> LossEstimate:
    n, T = X.shape
    hits = ((T - _location_counts(X, M)) <= s).sum(axis=0)
    allowed = np.ones(M, dtype=bool)
    allowed[[e for e in exclude if e is not None and 0 <= e < M]] = False
    if not allowed.any():
        raise ValueError("every location is excluded")
    hits = np.where(allowed, hits, -1)
    best = int(np.argmax(hits))
    return LossEstimate.from_count(int(hits[best]), n, CONSTANT_MAX, best)


def estimate_loss(
    prior: MarkovPrior,
    scen: Scenario,
    mech: Mechanism,
    estimator: str,
    s: int,
    n_trials: int = DEFAULT_TRIALS,
    master_seed: int = 0,
    location: int | None = None,
    threads: int | None = None,
) -> LossEstimate:
    """Monte Carlo privacy loss of one estimator.

    ``estimator`` is one of ``"map"``, ``"prior"``, ``"constant"`` (needs
    ``location``) or ``"constant_max"``.
    """
    if estimator not in KINDS:
        raise ValueError(f"unknown estimator {estimator!r}")
    T = scen.T
    X, Y = simulate_trials(prior, scen, mech, n_trials, master_seed, observations=estimator == MAP)
    if estimator == MAP:
        d = _map_distances(prior, scen, mech, X, Y, threads)
        return LossEstimate.from_count(int((d <= s).sum()), n_trials, MAP)
    if estimator == PRIOR:
        guess = prior_estimate(prior, T).traj
        return LossEstimate.from_count(int((hamming(X, guess) <= s).sum()), n_trials, PRIOR)
    if estimator == CONSTANT:
        if location is None or not 0 <= location < prior.M:
            raise ValueError("constant estimator needs a location in [0, M)")
        d = T - (X == location).sum(axis=1)
        return LossEstimate.from_count(int((d <= s).sum()), n_trials, f"{CONSTANT}({location})", location)
    return _best_constant(X, prior.M, s)


def estimate_loss_constant_max(
    prior: MarkovPrior,
    scen: Scenario,
    T: int,
    s: int,
    n_trials: int = DEFAULT_TRIALS,
    seed: int = 0,
    exclude: int | None = None,
) -> LossEstimate:
    """Best lucky-constant loss over all candidate locations on one shared trial set."""
    if T != scen.T:
        raise ValueError("T disagrees with the scenario")
    X, _ = simulate_trials(prior, scen, Mechanism.raw(), n_trials, seed, observations=False)
    return _best_constant(X, prior.M, s, exclude=(exclude,))


def attack(
    prior: MarkovPrior,
    scen: Scenario,
    mech: Mechanism,
    s: int,
    n_trials: int = DEFAULT_TRIALS,
    master_seed: int = 0,
    exclude: int | None = None,
    threads: int | None = None,
) -> dict[str, LossEstimate]:
    """MAP, prior and best-constant losses, all scored on the same trials."""
    X, Y = simulate_trials(prior, scen, mech, n_trials, master_seed)
    d_map = _map_distances(prior, scen, mech, X, Y, threads)
    d_prior = hamming(X, prior_estimate(prior, scen.T).traj)
    return {
        MAP: LossEstimate.from_count(int((d_map <= s).sum()), n_trials, MAP),
        PRIOR: LossEstimate.from_count(int((d_prior <= s).sum()), n_trials, PRIOR),
        CONSTANT_MAX: _best_constant(X, prior.M, s, exclude=(exclude,)),
    }


# -- sweeps ----------------------------------------------------------------------

SWEEPABLE = ("M", "s", "T", "sigma", "tau")
S_RULES = {None: None, "T/2": lambda T: T // 2, "T-2": lambda T: T - 2}


@dataclass(frozen=True)
class SweepSpec:
    """One swept parameter; everything else fixed at the defaults."""

    param: str
    values: tuple
    M: int = 100
    T: int = 10
    tau: float = 0.1
    s: int = 5
    sigma: float = 1.0
    mechanism: str = RAW
    n_trials: int = DEFAULT_TRIALS
    seed: int = 0
    s_rule: str | None = None
    delta: float = 1e-5

    def points(self) -> list[dict]:
        if self.param not in SWEEPABLE:
            raise InvalidGrid(f"cannot sweep {self.param!r}; choose one of {SWEEPABLE}")
        if not self.values:
            raise InvalidGrid("empty grid")
        if self.s_rule not in S_RULES:
            raise InvalidGrid(f"unknown s rule {self.s_rule!r}")
        out = []
        for v in self.values:
            p = {"M": self.M, "T": self.T, "tau": self.tau, "s": self.s, "sigma": self.sigma}
            p[self.param] = v
            for k in ("M", "T", "s"):
                if float(p[k]) != int(p[k]):
                    raise InvalidGrid(f"{k} must be an integer, got {p[k]!r}")
                p[k] = int(p[k])
            p["tau"] = float(p["tau"])
            p["sigma"] = float(p["sigma"])
            if self.s_rule is not None:
                p["s"] = S_RULES[self.s_rule](p["T"])
            if p["M"] < 1 or p["T"] < 1 or not 0 <= p["s"] < p["T"]:
                raise InvalidGrid(f"invalid grid point {p}")
            if p["tau"] <= 0 or p["sigma"] <= 0:
                raise InvalidGrid(f"invalid grid point {p}")
            p["mechanism"] = GAUSSIAN if self.param == "sigma" else self.mechanism
            out.append(p)
        return out


@dataclass(frozen=True)
class SweepRow:
    param: str
    value: float
    M: int
    T: int
    s: int
    tau: float
    sigma: float | None
    mechanism: str
    n_trials: int
    seed: int
    schedule: tuple[int, ...]
    losses: dict
    bounds: BoundReport
    wall_ms: float = field(default=0.0, compare=False)

    def to_dict(self, timing: bool = True) -> dict:
        d = {k: getattr(self, k) for k in ("param", "value", "M", "T", "s", "tau", "sigma", "mechanism", "n_trials", "seed")}
        d["schedule"] = list(self.schedule)
        d["losses"] = {k: v.to_dict() for k, v in self.losses.items()}
        d["bounds"] = self.bounds.to_dict()
        if timing:
            d["wall_ms"] = self.wall_ms
        return d


def run_point(
    M: int,
    T: int,
    tau: float,
    s: int,
    mech: Mechanism,
    n_trials: int,
    seed: int,
    delta: float = 1e-5,
    threads: int | None = None,
):
    """Synthetic prior, random schedule, all three attacks and both bounds for one setting."""
    prior = synthetic_prior(M, tau)
    scen = Scenario(random_schedule(M, T, seed))
    cache = matrix_powers(prior.P, T) if T >= 2 else None
    losses = attack(prior, scen, mech, s, n_trials, seed, threads=threads)
    report = bound_report(prior, scen, mech, s, cache=cache, delta=delta)
    return scen, losses, report


def sweep(spec: SweepSpec, threads: int | None = None) -> list[SweepRow]:
    """Evaluate every grid point of ``spec``.

    The schedule depends only on ``(seed, M, T)``, so sweeps over ``s``,
    ``sigma`` or ``tau`` share both the schedule and the trials.
    """
    rows = []
    for p in spec.points():
        start = time.perf_counter()
        mech = Mechanism.gaussian(p["sigma"]) if p["mechanism"] == GAUSSIAN else Mechanism.raw()
        scen, losses, report = run_point(
            p["M"], p["T"], p["tau"], p["s"], mech, spec.n_trials, spec.seed, spec.delta, threads
        )
        rows.append(
            SweepRow(
                param=spec.param,
                value=p[spec.param],
                M=p["M"],
                T=p["T"],
                s=p["s"],
                tau=p["tau"],
                sigma=mech.sigma,
                mechanism=mech.kind,
                n_trials=spec.n_trials,
                seed=spec.seed,
                schedule=scen.c,
                losses=losses,
                bounds=report,
                wall_ms=1000.0 * (time.perf_counter() - start),
            )
        )
    return rows


CSV_COLUMNS = (
    "param", "value", "M", "T", "s", "tau", "sigma", "mechanism", "n_trials", "seed",
    "map_mean", "map_stderr", "prior_mean", "prior_stderr",
    "constant_max_mean", "constant_max_stderr", "constant_max_location",
    "h_x", "i_tilde", "log_ns", "log_q",
    "loose_ub", "tight_ub", "loose_vacuous", "tight_vacuous", "dp_eps",
)


def rows_to_csv(rows: list[SweepRow], timing: bool = False) -> str:
    cols = CSV_COLUMNS + (("wall_ms",) if timing else ())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        b = r.bounds
        rec = {
            "param": r.param, "value": r.value, "M": r.M, "T": r.T, "s": r.s, "tau": repr(r.tau),
            "sigma": "" if r.sigma is None else repr(r.sigma), "mechanism": r.mechanism,
            "n_trials": r.n_trials, "seed": r.seed,
            "constant_max_location": r.losses[CONSTANT_MAX].location,
            "h_x": repr(b.h_x), "i_tilde": repr(b.i_tilde), "log_ns": repr(b.log_ns), "log_q": repr(b.log_q),
            "loose_ub": repr(b.loose_ub), "tight_ub": repr(b.tight_ub),
            "loose_vacuous": int(b.loose_vacuous), "tight_vacuous": int(b.tight_vacuous),
            "dp_eps": "" if b.dp_eps is None else repr(b.dp_eps),
            "wall_ms": f"{r.wall_ms:.1f}",
        }
        for k in (MAP, PRIOR, CONSTANT_MAX):
            rec[f"{k}_mean"] = repr(r.losses[k].mean)
            rec[f"{k}_stderr"] = repr(r.losses[k].stderr)
        w.writerow([rec[c] for c in cols])
    return buf.getvalue()


def with_defaults(spec: SweepSpec, **overrides) -> SweepSpec:
    return replace(spec, **{k: v for k, v in overrides.items() if v is not None})

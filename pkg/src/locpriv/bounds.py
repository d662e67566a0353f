"""Estimator-independent upper bounds on reconstruction success.

Two Fano-type inequalities turn an entropy budget into a lower bound on the
probability ``p_e`` that any adversary misses more than ``s`` steps:

* the loose variant compares ``H(X) - I`` against the log-size of a hamming
  ball of radius ``s``;
* the tight variant compares ``-I`` against the largest prior mass any
  single ball can hold, bounded via the subset-marginal dynamic program.

Both constraints are concave in ``p_e``, so their feasible sets are
intervals and the smallest feasible point is found by bisection on the
rising side.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import entr, logsumexp, xlogy

from .errors import DegenerateSpace, NotStationary, ProbabilityOutOfRange
from .estimators import prior_estimate
from .markov import MarkovPrior, PowerCache, marginals, matrix_powers, prior_entropy
from .mechanism import GAUSSIAN, Mechanism, Scenario, dp_epsilon

FANO_TOL = 1e-9


def binary_entropy(p: float) -> float:
    return float(entr(p) + entr(1.0 - p))


def hamming_ball_logsize(T: int, M: int, s: int) -> float:
    """``ln N(s)`` with ``N(s) = sum_{l<=s} C(T, l) (M-1)^l``."""
    if not 0 <= s <= T or M < 1:
        raise ValueError("need 0 <= s <= T and M >= 1")
    if M == 1:
        return 0.0
    terms = [math.log(math.comb(T, l)) + l * math.log(M - 1) for l in range(s + 1)]
    return float(logsumexp(terms))


# -- mutual information bounds -------------------------------------------------


def mi_bound_raw(prior: MarkovPrior, schedule) -> float:
    """Upper bound on ``I(X; counts)`` for exact counts.

    With the other individuals known, the count at step ``t`` reveals only
    ``B_t = 1[X_t = c_t]``; the bound is ``H(B_1) + sum_t H(B_t | B_{t-1})``.
    """
    c = list(schedule)
    T = len(c)
    mu = marginals(prior, T)
    total = binary_entropy(mu[0, c[0]])
    for t in range(1, T):
        a = mu[t - 1, c[t - 1]]
        b = mu[t, c[t]]
        p11 = a * prior.P[c[t - 1], c[t]]
        cells = np.array([p11, a - p11, b - p11, 1.0 - a - b + p11])
        if cells.min() < -1e-12:
            raise ProbabilityOutOfRange(f"joint cell {cells.min():.3g} at step {t}")
        cells = np.clip(cells, 0.0, 1.0)
        total += float(entr(cells).sum()) - binary_entropy(a)
    return max(total, 0.0)


def mi_bound_gaussian(prior: MarkovPrior, schedule, sigma: float) -> float:
    """Upper bound on ``I(X; noisy counts)`` for additive N(0, sigma^2) noise.

    Per step, with ``p = Pr[X_t = c_t]`` and ``r = exp(-1 / (2 sigma^2))``::

        -p log(p + (1 - p) r) - (1 - p) log((1 - p) + p r)
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    c = list(schedule)
    mu = marginals(prior, len(c))
    p = mu[np.arange(len(c)), c]
    r = math.exp(-1.0 / (2.0 * sigma * sigma))
    terms = -xlogy(p, p + (1 - p) * r) - xlogy(1 - p, (1 - p) + p * r)
    return float(np.clip(terms, 0.0, None).sum())


# -- maximum subset marginals --------------------------------------------------


@dataclass(frozen=True, eq=False)
class SubsetMarginalTable:
    """``log_f[m - 1]`` is the log of the largest joint marginal over any ``m`` steps."""

    log_f: np.ndarray

    def __getitem__(self, m: int) -> float:
        if m < 1:
            raise IndexError(m)
        return float(self.log_f[m - 1])

    def __len__(self) -> int:
        return len(self.log_f)


def _log(a) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(a, dtype=float))


def max_subset_marginal(prior: MarkovPrior, cache: PowerCache | None, T: int) -> SubsetMarginalTable:
    """Table of ``max_{t_1<..<t_m} max_x Pr[X_{t_1}=x_1, .., X_{t_m}=x_m]`` for ``m = 1..T``.

    Requires a stationary prior: any set of steps can then be shifted to
    start at step 1, leaving only the gaps between them to optimise.
    ``g[k, x]`` holds the best log-probability of an ``m``-step pattern
    spanning ``k`` transitions and ending at ``x``.
    """
    if not prior.stationary:
        raise NotStationary("subset marginals need a stationary prior")
    log_f = np.full(T, -np.inf)
    log_pi = _log(prior.pi)
    log_f[0] = log_pi.max()
    if T == 1:
        return SubsetMarginalTable(log_f)
    if cache is None or cache.max_power < T - 1:
        cache = matrix_powers(prior.P, T)
    log_pow = _log(cache.powers[: T])
    M = prior.M

    g = np.full((T, M), -np.inf)
    for k in range(1, T):
        g[k] = (log_pi[:, None] + log_pow[k]).max(axis=0)
    log_f[1] = g[1:].max()

    for m in range(3, T + 1):
        nxt = np.full((T, M), -np.inf)
        for k in range(m - 1, T):
            best = np.full(M, -np.inf)
            for gap in range(1, k - m + 3):
                np.maximum(best, (g[k - gap][:, None] + log_pow[gap]).max(axis=0), out=best)
            nxt[k] = best
        g = nxt
        log_f[m - 1] = g[m - 1:].max()
    return SubsetMarginalTable(log_f)


def ball_prob_bound(prior: MarkovPrior, cache: PowerCache | None, T: int, s: int) -> float:
    """Log of an upper bound on ``max_xhat Pr[d(X, xhat) <= s]``.

    Exact for ``s = 0``.  For ``s > 0`` it is the union bound
    ``sum_{l<=s} C(T, l) f(T - l)`` clamped at probability one.
    """
    if not 0 <= s < T:
        raise ValueError("need 0 <= s < T")
    if s == 0:
        return prior_estimate(prior, T).log_score
    table = max_subset_marginal(prior, cache, T)
    terms = [math.log(math.comb(T, l)) + table[T - l] for l in range(s + 1)]
    return float(min(0.0, logsumexp(terms)))


# -- Fano solvers ----------------------------------------------------------------


def _smallest_feasible(g, peak: float, tol: float) -> float | None:
    """Smallest ``p`` in ``[0, 1]`` with ``g(p) >= 0`` for concave ``g`` peaking at ``peak``."""
    if g(0.0) >= 0:
        return 0.0
    if g(peak) < 0:
        return None
    lo, hi = 0.0, peak
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def _log_ratio_outside(t_log_m: float, log_ns: float) -> float:
    """``ln((M^T - N) / N)`` from the two logs."""
    d = t_log_m - log_ns
    if d < 1e-12:
        raise DegenerateSpace("hamming ball covers the whole trajectory space")
    return d + math.log(-math.expm1(-d))


@dataclass(frozen=True)
class FanoInputs:
    h_x: float
    i_tilde: float
    log_ns: float
    t_log_m: float
    log_q: float = 0.0

    def __post_init__(self):
        if self.log_ns > self.t_log_m + 1e-12:
            raise ValueError("ball larger than the trajectory space")
        if self.h_x > self.t_log_m + 1e-9:
            raise ValueError("entropy exceeds T ln M")
        if self.i_tilde < 0 or self.h_x < -1e-12 or self.log_q > 1e-12:
            raise ValueError("negative information, entropy or positive log q")


def loose_fano_bound(inputs: FanoInputs, tol: float = FANO_TOL) -> tuple[float, float]:
    """Solve ``H(X) - I <= H(p) + p ln((M^T - N)/N) + ln N`` for the smallest ``p``.

    Returns ``(pe_star, 1 - pe_star)``; ``(1, 0)`` when nothing is feasible.
    """
    L = _log_ratio_outside(inputs.t_log_m, inputs.log_ns)
    deficit = inputs.h_x - inputs.i_tilde - inputs.log_ns

    def g(p):
        return binary_entropy(p) + p * L - deficit

    peak = 1.0 / (1.0 + math.exp(-L)) if L > -700 else 0.0
    pe = _smallest_feasible(g, peak, tol)
    if pe is None:
        return 1.0, 0.0
    return pe, 1.0 - pe


def tight_fano_bound(i_tilde: float, log_q: float, tol: float = FANO_TOL) -> tuple[float, float]:
    """Solve ``-I <= H(p) + (1 - p) ln q`` for the smallest ``p``."""
    if log_q > 0 or i_tilde < 0:
        raise ValueError("need log_q <= 0 and i_tilde >= 0")

    def g(p):
        return binary_entropy(p) + (1.0 - p) * log_q + i_tilde

    peak = 1.0 / (1.0 + math.exp(log_q))
    pe = _smallest_feasible(g, peak, tol)
    if pe is None:
        return 1.0, 0.0
    return pe, 1.0 - pe


# -- report ----------------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    """All quantities in nats."""

    h_x: float
    i_tilde: float
    log_ns: float
    log_q: float
    loose_ub: float
    tight_ub: float
    pe_loose: float
    pe_tight: float
    dp_eps: float | None = None

    @property
    def loose_vacuous(self) -> bool:
        return self.loose_ub >= 1.0

    @property
    def tight_vacuous(self) -> bool:
        return self.tight_ub >= 1.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["loose_vacuous"] = self.loose_vacuous
        d["tight_vacuous"] = self.tight_vacuous
        return d


def bound_report(
    prior: MarkovPrior,
    scen: Scenario,
    mech: Mechanism,
    s: int,
    cache: PowerCache | None = None,
    delta: float = 1e-5,
) -> BoundReport:
    """Both privacy-loss upper bounds for one individual and schedule."""
    T = scen.T
    scen.check(prior.M)
    h_x = prior_entropy(prior, T)
    if mech.kind == GAUSSIAN:
        i_tilde = mi_bound_gaussian(prior, scen.c, mech.sigma)
        eps = dp_epsilon(mech.sigma, delta, T)
    else:
        i_tilde = mi_bound_raw(prior, scen.c)
        eps = None
    log_ns = hamming_ball_logsize(T, prior.M, s)
    t_log_m = T * math.log(prior.M)
    if cache is None and s > 0:
        cache = matrix_powers(prior.P, max(T, 2))
    log_q = ball_prob_bound(prior, cache, T, s)
    inputs = FanoInputs(min(h_x, t_log_m), i_tilde, min(log_ns, t_log_m), t_log_m, log_q)
    try:
        pe_loose, loose = loose_fano_bound(inputs)
    except DegenerateSpace:
        pe_loose, loose = 0.0, 1.0
    pe_tight, tight = tight_fano_bound(i_tilde, log_q)
    return BoundReport(h_x, i_tilde, log_ns, log_q, loose, tight, pe_loose, pe_tight, eps)

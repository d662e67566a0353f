"""Brute-force references for small instances.

These enumerate trajectories directly and share no code with the dynamic
programs they check.  They are exponential in ``T`` and guarded by size
caps.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import TooLarge
from .estimators import Estimate
from .mechanism import Mechanism, emission_logprob


def _check(count: int, cap: int) -> None:
    if count > cap:
        raise TooLarge(f"{count} configurations exceed the cap of {cap}")


def _ln(p: float) -> float:
    return math.log(p) if p > 0 else -math.inf


def joint_log_prob(prior, x) -> float:
    """``log Pr[X = x]`` term by term."""
    total = _ln(float(prior.pi[x[0]]))
    for a, b in zip(x, x[1:]):
        total += _ln(float(prior.P[a][b]))
    return total


def enumerate_joint(prior, T: int, cap: int = 10**6) -> tuple[list[tuple[int, ...]], list[float]]:
    """Every trajectory with its probability, in lexicographic order."""
    _check(prior.M**T, cap)
    trajs = list(itertools.product(range(prior.M), repeat=T))
    probs = []
    for x in trajs:
        p = float(prior.pi[x[0]])
        for a, b in zip(x, x[1:]):
            p *= float(prior.P[a][b])
        probs.append(p)
    return trajs, probs


def _pick(scored, tol: float = 1e-12):
    """Best-scoring trajectory; near-ties prefer the smallest last location, then the one before."""
    best = max(s for _, s in scored)
    if best == -math.inf:
        return None, best
    slack = tol * max(1.0, abs(best))
    ties = [x for x, s in scored if s >= best - slack]
    x = min(ties, key=lambda t: t[::-1])
    return x, dict(scored)[x]


def brute_posterior_argmax(prior, obs, scen, mech, cap: int = 10**6) -> Estimate:
    """Enumerate ``argmax_x prod_t Pr[Y_t | X_t] Pr[X]``."""
    T = scen.T
    _check(prior.M**T, cap)
    scored = []
    for x in itertools.product(range(prior.M), repeat=T):
        s = joint_log_prob(prior, x)
        for t in range(T):
            s += emission_logprob(mech, float(obs[t]), x[t], scen.c[t], scen.others[t])
        scored.append((x, s))
    x, s = _pick(scored)
    if x is None:
        raise ValueError("observations impossible under the prior")
    return Estimate(np.array(x, dtype=np.int64), s)


def brute_prior_argmax(prior, T: int, cap: int = 10**6) -> Estimate:
    _check(prior.M**T, cap)
    scored = [(x, joint_log_prob(prior, x)) for x in itertools.product(range(prior.M), repeat=T)]
    x, s = _pick(scored)
    return Estimate(np.array(x, dtype=np.int64), s)


def brute_entropy(prior, T: int, cap: int = 10**6) -> float:
    _, probs = enumerate_joint(prior, T, cap)
    return -math.fsum(p * math.log(p) for p in probs if p > 0)


def brute_constant_success(prior, l: int, T: int, s: int, cap: int = 10**6) -> float:
    trajs, probs = enumerate_joint(prior, T, cap)
    return math.fsum(p for x, p in zip(trajs, probs) if sum(v != l for v in x) <= s)


def brute_ball_prob(prior, T: int, s: int, cap: int = 10**5) -> float:
    """``max_xhat Pr[d(X, xhat) <= s]`` over every centre."""
    trajs, probs = enumerate_joint(prior, T, cap)
    best = 0.0
    for centre in trajs:
        mass = math.fsum(p for x, p in zip(trajs, probs) if sum(a != b for a, b in zip(x, centre)) <= s)
        best = max(best, mass)
    return min(best, 1.0)


def brute_max_subset_marginal(prior, T: int, m: int, cap: int = 10**6) -> float:
    """Log of ``max`` over ``m`` distinct steps and values of their joint probability."""
    if not 1 <= m <= T:
        raise ValueError("need 1 <= m <= T")
    _check(math.comb(T, m) * prior.M**m, cap)
    trajs, probs = enumerate_joint(prior, T, cap)
    best = 0.0
    for steps in itertools.combinations(range(T), m):
        marg: dict[tuple[int, ...], list[float]] = {}
        for x, p in zip(trajs, probs):
            marg.setdefault(tuple(x[t] for t in steps), []).append(p)
        best = max(best, max(math.fsum(v) for v in marg.values()))
    return _ln(best)


def brute_map_loss_raw(prior, scen, s: int, cap: int = 10**5) -> float:
    """Exact MAP success probability under exact counts.

    Each trajectory fixes the released counts; the MAP guess for those
    counts is found by enumeration as well.
    """
    raw = Mechanism.raw()
    trajs, probs = enumerate_joint(prior, scen.T, cap)
    guesses: dict[tuple[int, ...], np.ndarray] = {}
    total = []
    for x, p in zip(trajs, probs):
        if p == 0:
            continue
        key = tuple(int(a == c) for a, c in zip(x, scen.c))
        if key not in guesses:
            y = np.array(key, dtype=float) + np.array(scen.others, dtype=float)
            guesses[key] = brute_posterior_argmax(prior, y, scen, raw, cap).traj
        if sum(a != b for a, b in zip(x, guesses[key])) <= s:
            total.append(p)
    return math.fsum(total)

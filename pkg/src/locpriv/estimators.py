"""Adversarial reconstruction estimators.

The MAP and maximum a priori estimators are Viterbi recursions in log
space.  Ties go to the smallest location index at every argmax, including
the back-pointers, so the decoded path is the optimum whose last location
is smallest, then whose second-to-last is smallest, and so on.  Scores
within a relative ``TIE_TOL`` of the best count as tied, so that equal
path probabilities summed in a different order still tie.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InconsistentObservation
from .markov import MarkovPrior
from .mechanism import Mechanism, Scenario, emission_table

TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Estimate:
    traj: np.ndarray
    log_score: float


def _log(a) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.asarray(a, dtype=float))


def _first_max(a: np.ndarray, axis: int = 0) -> np.ndarray:
    """Smallest index whose value is within ``TIE_TOL`` of the maximum."""
    best = a.max(axis=axis, keepdims=True)
    slack = TIE_TOL * np.maximum(1.0, np.abs(np.where(np.isfinite(best), best, 0.0)))
    return np.argmax(a >= best - slack, axis=axis)


def _viterbi(log_pi: np.ndarray, log_P: np.ndarray, emissions: np.ndarray) -> Estimate:
    T, M = emissions.shape
    back = np.zeros((T, M), dtype=np.int64)
    f = log_pi + emissions[0]
    for t in range(1, T):
        if not np.isfinite(f).any():
            break
        cand = f[:, None] + log_P
        back[t] = _first_max(cand, axis=0)
        f = cand[back[t], np.arange(M)] + emissions[t]
    if not np.isfinite(f).any():
        raise InconsistentObservation("every trajectory has zero posterior mass")
    path = np.empty(T, dtype=np.int64)
    path[-1] = int(_first_max(f))
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return Estimate(path, float(f[path[-1]]))


def map_estimate(prior: MarkovPrior, obs, scen: Scenario, mech: Mechanism) -> Estimate:
    """Most probable trajectory given the released counts.

    ``log_score`` is ``sum_t log Pr[Y_t | X_t] + log Pr[X]`` for the
    returned path.  Runs in ``O(T M^2)`` time.
    """
    obs = np.asarray(obs, dtype=float)
    if obs.shape != (scen.T,):
        raise DimensionMismatch(f"{obs.shape[0] if obs.ndim else 0} observations for T={scen.T}")
    em = emission_table(mech, obs, scen, prior.M)
    return _viterbi(_log(prior.pi), _log(prior.P), em)


def prior_estimate(prior: MarkovPrior, T: int) -> Estimate:
    """``argmax_x Pr[X = x]``, ignoring any observations."""
    if T < 1:
        raise ValueError("T must be at least 1")
    return _viterbi(_log(prior.pi), _log(prior.P), np.zeros((T, prior.M)))


def constant_estimate(l: int, T: int) -> Estimate:
    """Always guess location ``l``.  The score carries no meaning and is 0."""
    if l < 0 or T < 1:
        raise ValueError("need l >= 0 and T >= 1")
    return Estimate(np.full(T, l, dtype=np.int64), 0.0)


def hamming(a, b) -> np.ndarray:
    """Hamming distance along the last axis."""
    return np.count_nonzero(np.asarray(a) != np.asarray(b), axis=-1)


def constant_success_exact(prior: MarkovPrior, l: int, T: int, s: int) -> float:
    """Exact ``Pr[#{t : X_t != l} <= s]`` by a forward pass over (location, errors)."""
    if not 0 <= l < prior.M:
        raise ValueError(f"location {l} outside [0, {prior.M})")
    if s < 0:
        return 0.0
    if s >= T:
        return 1.0
    miss = np.ones(prior.M, dtype=bool)
    miss[l] = False
    # alpha[x, e]: mass of prefixes ending at x with e mismatches so far
    alpha = np.zeros((prior.M, s + 1))
    alpha[l, 0] = prior.pi[l]
    if s >= 1:
        alpha[miss, 1] = prior.pi[miss]
    for _ in range(1, T):
        moved = prior.P.T @ alpha
        nxt = np.zeros_like(alpha)
        nxt[l] = moved[l]
        nxt[miss, 1:] = moved[miss, :-1]
        alpha = nxt
    return float(min(1.0, alpha.sum()))

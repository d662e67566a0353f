"""Markov-chain location priors.

A target's locations ``X_1 .. X_T`` over ``M`` discrete places form a
first-order chain with initial distribution ``pi`` and row-stochastic
transition matrix ``P``.  Everything here works in nats.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import entr

from . import rng
from .errors import (
    DimensionMismatch,
    EigenFailure,
    NegativeEntry,
    NoConvergence,
    NotStochastic,
)

STATIONARY_TOL = 1e-6


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MarkovPrior:
    """The adversary's knowledge of one target: ``pi`` and ``P``.

    Construct through :func:`validate_prior`, which checks the invariants
    and sets ``stationary``.
    """

    pi: np.ndarray
    P: np.ndarray
    stationary: bool

    @property
    def M(self) -> int:
        return self.pi.shape[0]

    def to_dict(self) -> dict:
        return {"m": self.M, "pi": self.pi.tolist(), "p": self.P.tolist()}

    @classmethod
    def from_dict(cls, d: dict, tol: float = 1e-9) -> "MarkovPrior":
        prior = validate_prior(d["pi"], d["p"], tol=tol)
        if prior.M != int(d["m"]):
            raise DimensionMismatch(f"m={d['m']} but pi has {prior.M} entries")
        return prior

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MarkovPrior":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class PowerCache:
    """``powers[k]`` is ``P**k`` for ``k = 0 .. T-1`` (``powers[0]`` is the identity)."""

    powers: np.ndarray

    @property
    def max_power(self) -> int:
        return self.powers.shape[0] - 1

    def __getitem__(self, k: int) -> np.ndarray:
        return self.powers[k]


def validate_prior(pi, P, tol: float = 1e-9) -> MarkovPrior:
    """Check ``pi`` and ``P`` and wrap them in a :class:`MarkovPrior`.

    Raises
    ------
    DimensionMismatch
        ``pi`` is not a vector or ``P`` is not ``M x M``.
    NegativeEntry
        Any entry below zero (beyond ``-tol``).
    NotStochastic
        ``pi`` or a row of ``P`` does not sum to one within ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    pi = np.asarray(pi, dtype=float)
    P = np.asarray(P, dtype=float)
    if pi.ndim != 1 or pi.size == 0:
        raise DimensionMismatch(f"pi must be a non-empty vector, got shape {pi.shape}")
    M = pi.shape[0]
    if P.shape != (M, M):
        raise DimensionMismatch(f"P must have shape {(M, M)}, got {P.shape}")
    if not (np.all(np.isfinite(pi)) and np.all(np.isfinite(P))):
        raise NotStochastic("non-finite entries")
    if pi.min() < -tol or P.min() < -tol:
        raise NegativeEntry("probabilities must be non-negative")
    if abs(pi.sum() - 1.0) > tol:
        raise NotStochastic(f"pi sums to {pi.sum():.12g}")
    row_err = np.abs(P.sum(axis=1) - 1.0)
    if row_err.max() > tol:
        bad = int(np.argmax(row_err))
        raise NotStochastic(f"row {bad} of P sums to {P[bad].sum():.12g}")
    if pi.max() > 1 + tol or P.max() > 1 + tol:
        raise NotStochastic("entries above one")
    pi = np.clip(pi, 0.0, 1.0)
    P = np.clip(P, 0.0, 1.0)
    stationary = bool(np.max(np.abs(pi @ P - pi)) <= STATIONARY_TOL)
    return MarkovPrior(_readonly(pi), _readonly(P), stationary)


def stationary_distribution(P, tol: float = 1e-10, max_iter: int = 100_000) -> np.ndarray:
    """Stationary vector of ``P`` by power iteration from the uniform vector.

    The returned candidate is the average of the last two iterates, so a
    period-2 oscillation still settles.  Convergence means
    ``max|cP - c| <= tol`` for that candidate.
    """
    P = np.asarray(P, dtype=float)
    M = P.shape[0]
    v0 = np.full(M, 1.0 / M)
    v1 = v0 @ P
    for _ in range(max_iter):
        v2 = v1 @ P
        # (c P - c) for c = (v0 + v1) / 2 collapses to (v2 - v0) / 2
        if 0.5 * np.max(np.abs(v2 - v0)) <= tol:
            c = 0.5 * (v0 + v1)
            return c / c.sum()
        v0, v1 = v1, v2
    raise NoConvergence(f"power iteration did not converge in {max_iter} iterations")


def sample_from_uniforms(prior: MarkovPrior, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling of trajectories, one row of ``u`` per trajectory."""
    u = np.atleast_2d(u)
    n, T = u.shape
    cdf_pi = _padded_cdf(prior.pi)
    cdf_P = np.vstack([_padded_cdf(row) for row in prior.P])
    x = np.empty((n, T), dtype=np.int64)
    x[:, 0] = np.searchsorted(cdf_pi, u[:, 0], side="right")
    for t in range(1, T):
        x[:, t] = (cdf_P[x[:, t - 1]] <= u[:, t, None]).sum(axis=1)
    return x


def _padded_cdf(p: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(p)
    cdf = cdf / cdf[-1]
    # states after the last positive-mass one are unreachable
    last = int(np.flatnonzero(p > 0)[-1])
    cdf[last:] = 2.0
    return cdf


def sample_trajectory(prior: MarkovPrior, T: int, seed: int) -> np.ndarray:
    """Draw ``X_1 ~ pi``, ``X_t | X_{t-1} ~ P[X_{t-1}]``.  Deterministic in ``seed``."""
    if T < 1:
        raise ValueError("T must be at least 1")
    u = rng.derive(seed, 0, rng.TRAJECTORY_STREAM).random(T)
    return sample_from_uniforms(prior, u)[0]


def matrix_powers(P, T: int) -> PowerCache:
    """Cache ``P**0 .. P**(T-1)`` by sequential multiplication."""
    if T < 2:
        raise ValueError("T must be at least 2")
    P = np.asarray(P, dtype=float)
    M = P.shape[0]
    powers = np.empty((T, M, M))
    powers[0] = np.eye(M)
    for k in range(1, T):
        powers[k] = powers[k - 1] @ P
    powers.setflags(write=False)
    return PowerCache(powers)


def marginals(prior: MarkovPrior, T: int) -> np.ndarray:
    """``(T, M)`` array of ``Pr[X_t = m]``; rows equal ``pi`` for stationary priors."""
    out = np.empty((T, prior.M))
    out[0] = prior.pi
    for t in range(1, T):
        out[t] = prior.pi if prior.stationary else out[t - 1] @ prior.P
    return out


def entropy(p) -> float:
    return float(entr(np.asarray(p, dtype=float)).sum())


def prior_entropy(prior: MarkovPrior, T: int) -> float:
    """Joint entropy ``H(X_1..X_T)`` via the chain rule for Markov chains."""
    if T < 1:
        raise ValueError("T must be at least 1")
    row_h = entr(prior.P).sum(axis=1)
    mu = marginals(prior, T)
    return entropy(prior.pi) + float(sum(mu[t - 1] @ row_h for t in range(1, T)))


def spectral_gap(P) -> float:
    """``1 - |lambda_2|`` where ``lambda_2`` has the second-largest modulus."""
    P = np.asarray(P, dtype=float)
    if P.shape[0] == 1:
        return 1.0
    try:
        eig = np.linalg.eigvals(P)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc
    mods = np.sort(np.abs(eig))[::-1]
    return float(np.clip(1.0 - mods[1], 0.0, 1.0))


def synthetic_prior(M: int, tau: float) -> MarkovPrior:
    """Line-graph chain with ``P[i, j]`` proportional to ``exp(-|i - j| / (tau * M))``.

    The initial distribution is the stationary vector of ``P``.
    """
    if M < 1 or tau <= 0:
        raise ValueError("need M >= 1 and tau > 0")
    idx = np.arange(M)
    kernel = np.exp(-np.abs(idx[:, None] - idx[None, :]) / (tau * M))
    P = kernel / kernel.sum(axis=1, keepdims=True)
    pi = stationary_distribution(P)
    prior = validate_prior(pi, P)
    if not prior.stationary:
        warnings.warn("synthetic prior failed the stationarity check", RuntimeWarning)
    return prior

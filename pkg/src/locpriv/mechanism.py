"""Count-release mechanisms and what the adversary can infer from them.

At step ``t`` a single sensor at ``c_t`` publishes the number of people
there.  The adversary knows every non-target individual's location, so the
only unknown part of the count is the indicator ``1[X_t = c_t]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DimensionMismatch

RAW = "raw"
GAUSSIAN = "gaussian"

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Scenario:
    """Sensor schedule plus the known contribution of everyone but the target.

    ``others[t]`` counts non-target individuals at ``c[t]``; synthetic runs
    leave it at zero since the adversary subtracts it anyway.
    """

    c: tuple[int, ...]
    others: tuple[int, ...] = field(default=())
    n: int = 1

    def __post_init__(self):
        c = tuple(int(x) for x in self.c)
        others = tuple(int(x) for x in self.others) if self.others else (0,) * len(c)
        if not c:
            raise ValueError("schedule must cover at least one step")
        if len(others) != len(c):
            raise DimensionMismatch("others must have one entry per step")
        if min(c) < 0 or min(others) < 0:
            raise ValueError("negative location or count")
        n = max(int(self.n), max(others) + 1)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "others", others)
        object.__setattr__(self, "n", n)

    @property
    def T(self) -> int:
        return len(self.c)

    def check(self, M: int) -> None:
        if max(self.c) >= M:
            raise DimensionMismatch(f"sensor location {max(self.c)} outside [0, {M})")

    def to_dict(self) -> dict:
        return {"c": list(self.c), "others": list(self.others), "n": self.n}

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(tuple(d["c"]), tuple(d.get("others", ())), int(d.get("n", 1)))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Mechanism:
    kind: str = RAW
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in (RAW, GAUSSIAN):
            raise ValueError(f"unknown mechanism {self.kind!r}")
        if self.kind == GAUSSIAN:
            if self.sigma is None or not self.sigma > 0:
                raise ValueError("Gaussian mechanism needs sigma > 0")
            object.__setattr__(self, "sigma", float(self.sigma))
        elif self.sigma is not None:
            object.__setattr__(self, "sigma", None)

    @classmethod
    def raw(cls) -> "Mechanism":
        return cls(RAW)

    @classmethod
    def gaussian(cls, sigma: float) -> "Mechanism":
        return cls(GAUSSIAN, sigma)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sigma": self.sigma}

    def __str__(self) -> str:
        return self.kind if self.kind == RAW else f"gaussian(sigma={self.sigma:g})"


def random_schedule(M: int, T: int, seed: int) -> tuple[int, ...]:
    """Sensor locations drawn uniformly at random, one per step."""
    g = rng.derive(seed, 0, rng.SCHEDULE_STREAM)
    return tuple(int(v) for v in g.integers(0, M, size=T))


def observe(traj, scen: Scenario, mech: Mechanism, seed: int) -> np.ndarray:
    """Released counts for one trajectory.  Noise comes from the noise stream of ``seed``."""
    traj = np.asarray(traj)
    if traj.shape != (scen.T,):
        raise DimensionMismatch(f"trajectory length {traj.shape} vs T={scen.T}")
    y = np.asarray(scen.others, dtype=float) + (traj == np.asarray(scen.c))
    if mech.kind == GAUSSIAN:
        y = y + mech.sigma * rng.derive(seed, 0, rng.NOISE_STREAM).standard_normal(scen.T)
    return y


def emission_logprob(mech: Mechanism, y_t: float, x_t: int, c_t: int, others_t: int) -> float:
    """``log Pr[Y_t = y_t | X_t = x_t]`` (a log-density for the Gaussian mechanism)."""
    mean = others_t + (1 if x_t == c_t else 0)
    if mech.kind == RAW:
        return 0.0 if y_t == mean else -math.inf
    z = (y_t - mean) / mech.sigma
    return -0.5 * z * z - _LOG_SQRT_2PI - math.log(mech.sigma)


def _emission(mech: Mechanism, y: np.ndarray, mean: np.ndarray) -> np.ndarray:
    if mech.kind == RAW:
        return np.where(y == mean, 0.0, -np.inf)
    z = (y - mean) / mech.sigma
    return -0.5 * z * z - _LOG_SQRT_2PI - math.log(mech.sigma)


def emission_table(mech: Mechanism, y, scen: Scenario, M: int) -> np.ndarray:
    """``(T, M)`` table of emission log-probabilities for every step and location."""
    y = np.asarray(y, dtype=float)
    if y.shape != (scen.T,):
        raise DimensionMismatch(f"observation length {y.shape} vs T={scen.T}")
    scen.check(M)
    others = np.asarray(scen.others, dtype=float)
    table = np.repeat(_emission(mech, y, others)[:, None], M, axis=1)
    table[np.arange(scen.T), list(scen.c)] = _emission(mech, y, others + 1.0)
    return table


def dp_epsilon(sigma: float, delta: float, T: int) -> float:
    """Epsilon of the Gaussian mechanism composed over ``T`` releases."""
    if not sigma > 0 or not 0 < delta < 1:
        raise ValueError("need sigma > 0 and 0 < delta < 1")
    return math.sqrt(2.0 * math.log(1.25 / delta) * T) / sigma

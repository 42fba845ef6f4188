"""Random environments and log-moment-generating functions of weight laws.

An environment is an array of i.i.d. disorder weights indexed by (time step,
lattice site).  Values are produced by a counter-based stream keyed per site,
so identical (seed, spec) always yield bit-identical arrays and a sub-box is
the restriction of the full box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

import numpy as np

from . import _rng
from .errors import DimensionError, DomainError, ParameterError

STREAM_ENV = 0x45
STREAM_OU = 0x4F

_KINDS = ("gaussian", "bernoulli_pm1", "uniform", "exponential")


@dataclass(frozen=True)
class DistSpec:
    """A weight law for disorder variables.

    * ``gaussian``: params ``mean``, ``sd`` (sd > 0).
    * ``bernoulli_pm1``: value −1 with probability ``p``, +1 otherwise
      (0 < p < 1).
    * ``uniform``: on [``a``, ``b``] with a < b.
    * ``exponential``: rate ``rate`` > 0 on [0, ∞).

    Degenerate laws (p ∈ {0,1}, a = b, sd = 0) are rejected: an almost-sure
    constant carries no disorder.
    """

    kind: str
    params: Mapping[str, float]

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ParameterError(f"unknown distribution kind {self.kind!r}")
        p = dict(self.params)
        object.__setattr__(self, "params", p)
        try:
            if self.kind == "gaussian":
                if not (p["sd"] > 0 and math.isfinite(p["sd"]) and math.isfinite(p["mean"])):
                    raise ParameterError("gaussian requires finite mean and sd > 0")
            elif self.kind == "bernoulli_pm1":
                if not (0.0 < p["p"] < 1.0):
                    raise ParameterError("bernoulli_pm1 requires 0 < p < 1 (degenerate law rejected)")
            elif self.kind == "uniform":
                if not (p["a"] < p["b"] and math.isfinite(p["a"]) and math.isfinite(p["b"])):
                    raise ParameterError("uniform requires a < b")
            elif self.kind == "exponential":
                if not (p["rate"] > 0 and math.isfinite(p["rate"])):
                    raise ParameterError("exponential requires rate > 0")
        except KeyError as e:
            raise ParameterError(f"missing parameter {e} for kind {self.kind!r}") from None

    # -- constructors ------------------------------------------------------

    @classmethod
    def gaussian(cls, mean: float = 0.0, sd: float = 1.0) -> "DistSpec":
        return cls("gaussian", {"mean": float(mean), "sd": float(sd)})

    @classmethod
    def bernoulli_pm1(cls, p: float) -> "DistSpec":
        return cls("bernoulli_pm1", {"p": float(p)})

    @classmethod
    def uniform(cls, a: float, b: float) -> "DistSpec":
        return cls("uniform", {"a": float(a), "b": float(b)})

    @classmethod
    def exponential(cls, rate: float = 1.0) -> "DistSpec":
        return cls("exponential", {"rate": float(rate)})

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_json(cls, obj: Mapping) -> "DistSpec":
        return cls(str(obj["kind"]), dict(obj["params"]))

    # -- basic law properties ---------------------------------------------

    @property
    def is_continuous(self) -> bool:
        return self.kind != "bernoulli_pm1"

    def mean(self) -> float:
        p = self.params
        if self.kind == "gaussian":
            return p["mean"]
        if self.kind == "bernoulli_pm1":
            return 1.0 - 2.0 * p["p"]
        if self.kind == "uniform":
            return 0.5 * (p["a"] + p["b"])
        return 1.0 / p["rate"]

    def essinf(self) -> float:
        p = self.params
        return {
            "gaussian": -math.inf,
            "bernoulli_pm1": -1.0,
            "uniform": p.get("a", 0.0),
            "exponential": 0.0,
        }[self.kind]

    def esssup(self) -> float:
        p = self.params
        return {
            "gaussian": math.inf,
            "bernoulli_pm1": 1.0,
            "uniform": p.get("b", 0.0),
            "exponential": math.inf,
        }[self.kind]

    def atom(self, x: float) -> float:
        """Point mass at x (zero for the continuous kinds)."""
        if self.kind == "bernoulli_pm1":
            if x == -1.0:
                return self.params["p"]
            if x == 1.0:
                return 1.0 - self.params["p"]
        return 0.0

    def scipy_dist(self):
        """Frozen scipy.stats law (continuous kinds only)."""
        from scipy import stats

        p = self.params
        if self.kind == "gaussian":
            return stats.norm(loc=p["mean"], scale=p["sd"])
        if self.kind == "uniform":
            return stats.uniform(loc=p["a"], scale=p["b"] - p["a"])
        if self.kind == "exponential":
            return stats.expon(scale=1.0 / p["rate"])
        raise DomainError("bernoulli_pm1 has no density")

    # -- sampling ----------------------------------------------------------

    def from_uniforms(self, u: np.ndarray) -> np.ndarray:
        """Map Uniform(0,1) variates to this law (inverse CDF)."""
        p = self.params
        if self.kind == "gaussian":
            from scipy.special import ndtri

            return p["mean"] + p["sd"] * ndtri(u)
        if self.kind == "bernoulli_pm1":
            return np.where(u < p["p"], -1.0, 1.0)
        if self.kind == "uniform":
            return p["a"] + (p["b"] - p["a"]) * u
        return -np.log1p(-u) / p["rate"]


def log_mgf(dist: DistSpec, beta: float) -> float:
    """λ(β) = log E exp(β ω) for a weight ω with law ``dist``.

    Closed forms for every supported kind; raises DomainError where the
    expectation is infinite (exponential law with β ≥ rate).
    """
    if beta == 0.0:
        return 0.0
    p = dist.params
    if dist.kind == "gaussian":
        return p["mean"] * beta + 0.5 * (p["sd"] * beta) ** 2
    if dist.kind == "bernoulli_pm1":
        # log(p e^{−β} + (1−p) e^{β})
        return float(np.logaddexp(math.log(p["p"]) - beta, math.log1p(-p["p"]) + beta))
    if dist.kind == "uniform":
        c = beta * (p["b"] - p["a"])
        return beta * p["a"] + _log_expm1_over(c)
    # exponential
    if beta >= p["rate"]:
        raise DomainError(f"log_mgf infinite: beta={beta} >= rate={p['rate']}")
    return -math.log1p(-beta / p["rate"])


def _log_expm1_over(c: float) -> float:
    """log((e^c − 1)/c), stable for c of any sign and size."""
    if abs(c) < 1e-5:
        # series: (e^c−1)/c = 1 + c/2 + c²/6 + c³/24
        return math.log1p(c / 2 + c * c / 6 + c**3 / 24)
    if c > 0:
        if c > 700.0:
            return c + math.log1p(-math.exp(-c)) - math.log(c)
        return math.log(math.expm1(c)) - math.log(c)
    return math.log(-math.expm1(c)) - math.log(-c)


@dataclass(frozen=True)
class WalkKernel:
    """Step distribution K of the reference walk on Z^d (finite support)."""

    d: int
    steps: Tuple[Tuple[int, ...], ...]
    probs: Tuple[float, ...]

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ParameterError("only d in {1, 2} is supported")
        if len(self.steps) != len(self.probs) or not self.steps:
            raise ParameterError("steps and probs must be equal-length and nonempty")
        if any(len(s) != self.d for s in self.steps):
            raise DimensionError("step vectors must have length d")
        if len(set(self.steps)) != len(self.steps):
            raise ParameterError("duplicate step vectors")
        pr = np.asarray(self.probs, dtype=float)
        if np.any(pr < 0):
            raise ParameterError("step probabilities must be nonnegative")
        if abs(pr.sum() - 1.0) > 1e-12:
            raise ParameterError("step probabilities must sum to 1")
        if pr.max() >= 1.0:
            raise ParameterError("a deterministic walk (max K = 1) is not allowed")

    @classmethod
    def srw(cls, d: int) -> "WalkKernel":
        steps, probs = [], []
        for axis in range(d):
            for sign in (-1, 1):
                z = [0] * d
                z[axis] = sign
                steps.append(tuple(z))
                probs.append(1.0 / (2 * d))
        return cls(d, tuple(steps), tuple(probs))

    @property
    def max_step(self) -> int:
        """ℓ∞ radius of the step support; the reachable cone grows by this."""
        return max(max(abs(c) for c in s) for s in self.steps)

    def offsets(self) -> np.ndarray:
        return np.asarray(self.steps, dtype=np.int64).reshape(len(self.steps), self.d)

    def values(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=np.float64)

    def flipped(self) -> "WalkKernel":
        return WalkKernel(self.d, tuple(tuple(-c for c in s) for s in self.steps), self.probs)


@dataclass(frozen=True)
class Environment:
    """I.i.d. disorder weights ω(i, x), i = 1..n, x in the centered box.

    ``weights[i-1]`` is the slab at time i, an array over [−radius, radius]^d
    with the origin at index ``radius``.  Immutable after construction.
    """

    d: int
    n: int
    radius: int
    seed: int
    dist: DistSpec
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        expected = (self.n,) + (2 * self.radius + 1,) * self.d
        if self.weights.shape != expected:
            raise DimensionError(f"weights shape {self.weights.shape} != {expected}")
        if not np.all(np.isfinite(self.weights)):
            raise ParameterError("environment weights must be finite")
        self.weights.setflags(write=False)

    def slab(self, i: int, radius: Optional[int] = None) -> np.ndarray:
        """Weights at time i (1-based), optionally restricted to a sub-box."""
        if not 1 <= i <= self.n:
            raise IndexError(f"time index {i} outside 1..{self.n}")
        w = self.weights[i - 1]
        if radius is None or radius == self.radius:
            return w
        if radius > self.radius:
            raise DimensionError("requested radius exceeds the environment box")
        lo, hi = self.radius - radius, self.radius + radius + 1
        return w[(slice(lo, hi),) * self.d]

    def weight(self, i: int, x) -> float:
        idx = tuple(int(c) + self.radius for c in (x if self.d == 2 else (x,)))
        return float(self.weights[i - 1][idx])


def sample_environment(
    dist: DistSpec, d: int, n: int, seed: int, walk: Optional[WalkKernel] = None
) -> Environment:
    """Draw the environment for an n-step walk in dimension d.

    The box is [−n·s, n·s]^d where s is the walk's maximal step (s = 1 for
    the default simple random walk), so every reachable site is covered.
    """
    if d not in (1, 2):
        raise ParameterError("only d in {1, 2} is supported")
    if n < 1:
        raise ParameterError("horizon n must be >= 1")
    walk = walk if walk is not None else WalkKernel.srw(d)
    if walk.d != d:
        raise DimensionError("walk dimension does not match d")
    radius = n * walk.max_step
    coords = np.arange(-radius, radius + 1, dtype=np.int64)
    times = np.arange(1, n + 1, dtype=np.int64)
    if d == 1:
        u = _rng.uniforms(seed, STREAM_ENV, times[:, None], coords[None, :])
    else:
        u = _rng.uniforms(
            seed,
            STREAM_ENV,
            times[:, None, None],
            coords[None, :, None],
            coords[None, None, :],
        )
    return Environment(d, n, radius, seed, dist, dist.from_uniforms(u))

"""Exact transfer-matrix computations for lattice polymers in random media.

For a walk of length n with step kernel K in an environment ω, the Gibbs
measure reweights paths by exp(β Σ_i ω(i, σ_i)).  The endpoint mass function
evolves by one multiply-and-spread step per time unit,

    f_i(x) ∝ Σ_y f_{i-1}(y) K(x − y) exp(β ω(i, x)),

and the per-step normalizers c_i = log Σ_x (·) telescope to the log partition
function: log Z_n = Σ c_i.  Storing the normalizers keeps everything in log
space, so no quantity here overflows at large n or β.

Intermediate-time marginals come from the standard forward/backward product,
mirroring the endpoint recursion run from the far end.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels, _rng
from .env import DistSpec, Environment, WalkKernel, log_mgf, sample_environment
from .errors import DimensionError, ParameterError, UnsupportedError


@dataclass(frozen=True)
class LatticePMF:
    """A finite nonnegative mass function on Z^d with total mass ≤ 1."""

    d: int
    atoms: dict  # tuple coordinate -> mass

    def __post_init__(self):
        total = 0.0
        for x, m in self.atoms.items():
            if len(x) != self.d:
                raise DimensionError(f"atom {x} does not have dimension {self.d}")
            if m < 0:
                raise ParameterError(f"negative mass at {x}")
            total += m
        if total > 1.0 + 1e-12:
            raise ParameterError(f"total mass {total} exceeds 1")

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.atoms.values()))

    @property
    def is_probability(self) -> bool:
        return abs(self.total_mass - 1.0) <= 1e-12

    def __len__(self):
        return len(self.atoms)

    @classmethod
    def from_dense(cls, arr: np.ndarray, drop_below: float = 0.0) -> "LatticePMF":
        """Convert a centered box array to sparse atoms (origin at the center)."""
        d = arr.ndim
        r = (arr.shape[0] - 1) // 2
        atoms = {}
        for idx in zip(*np.nonzero(arr > drop_below)):
            atoms[tuple(int(i) - r for i in idx)] = float(arr[idx])
        return cls(d, atoms)


def delta_pmf(d: int, x: Optional[Tuple[int, ...]] = None) -> LatticePMF:
    return LatticePMF(d, {tuple(x) if x is not None else (0,) * d: 1.0})


@dataclass
class PolymerRun:
    """Forward pass of a polymer: endpoint pmfs, normalizers, and log Z.

    ``fs[i]`` is the endpoint pmf at time i on the centered box of radius
    i · walk.max_step; ``c[i-1]`` is the i-th log normalizer; ``log_z`` is
    their sum.  Backward data are attached lazily by ``ith_point_marginals``.
    """

    env: Environment
    beta: float
    walk: WalkKernel
    c: np.ndarray
    fs: List[np.ndarray]
    log_z: float
    _marginals: Optional[List[np.ndarray]] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.fs) - 1

    @property
    def d(self) -> int:
        return self.walk.d

    def radius_at(self, i: int) -> int:
        return i * self.walk.max_step

    def endpoint_pmf(self, i: Optional[int] = None) -> LatticePMF:
        i = self.n if i is None else i
        return LatticePMF.from_dense(self.fs[i])

    def log_partition(self, endpoint: Optional[Tuple[int, ...]] = None) -> float:
        """log Z_n, or the point-to-point log Z_n(β, x) when an endpoint is given."""
        if endpoint is None:
            return self.log_z
        f = self.fs[self.n]
        r = self.radius_at(self.n)
        idx = tuple(int(c) + r for c in endpoint)
        if any(not 0 <= k < f.shape[0] for k in idx):
            return -math.inf
        mass = f[idx]
        return self.log_z + math.log(mass) if mass > 0 else -math.inf


def forward_measures(env: Environment, beta: float, walk: Optional[WalkKernel] = None) -> PolymerRun:
    """Run the endpoint recursion through the whole environment."""
    walk = walk if walk is not None else WalkKernel.srw(env.d)
    if walk.d != env.d:
        raise DimensionError("walk dimension does not match environment")
    s = walk.max_step
    if env.radius < env.n * s:
        raise DimensionError("environment box too small for this walk's reach")
    if not math.isfinite(beta):
        raise ParameterError("beta must be finite")
    kvals, koffs = walk.values(), walk.offsets()
    f = np.ones((1,) * env.d)
    fs = [f]
    c = np.empty(env.n)
    for i in range(1, env.n + 1):
        r = i * s
        conv = _kernels.shift_kernel_sum(f, kvals, koffs, r)
        a = beta * env.slab(i, radius=r)
        reach = conv > 0
        shift = float(a[reach].max())
        g = conv * np.exp(a - shift)
        tot = float(g.sum())
        c[i - 1] = shift + math.log(tot)
        f = g / tot
        fs.append(f)
    return PolymerRun(env, float(beta), walk, c, fs, float(math.fsum(c)))


def free_energy(run: PolymerRun) -> float:
    """F_n(β) = (1/n) log Z_n(β)."""
    return run.log_z / run.n


def ith_point_marginals(run: PolymerRun) -> List[LatticePMF]:
    """Marginal laws of the walk's position at each time 0..n under the
    length-n Gibbs measure, via the forward/backward product."""
    dense = _marginal_arrays(run)
    return [LatticePMF.from_dense(m) for m in dense]


def _marginal_arrays(run: PolymerRun) -> List[np.ndarray]:
    if run._marginals is not None:
        return run._marginals
    env, beta, walk = run.env, run.beta, run.walk
    s = walk.max_step
    kvals = walk.values()
    koffs_flipped = -walk.offsets()
    n = run.n
    b = np.ones_like(run.fs[n])
    out = [None] * (n + 1)
    out[n] = run.fs[n].copy()
    for i in range(n - 1, -1, -1):
        a = beta * env.slab(i + 1, radius=(i + 1) * s)
        live = b > 0
        shift = float(a[live].max()) if live.any() else 0.0
        q = b * np.exp(a - shift)
        b = _kernels.shift_kernel_sum(q, kvals, koffs_flipped, i * s)
        b /= b.sum()
        m = run.fs[i] * b
        out[i] = m / m.sum()
    run._marginals = out
    return out


def replica_overlap(run: PolymerRun) -> float:
    """Expected fraction of time two independent samples share a site.

    At each time i the two copies collide with probability Σ_x m_i(x)²,
    which depends only on the marginal, so the average over i is exact.
    """
    dense = _marginal_arrays(run)
    return float(math.fsum(float((m * m).sum()) for m in dense[1:]) / run.n)


def normalized_partition(run: PolymerRun) -> float:
    """W_n(β) = Z_n(β) e^{−n λ(β)}; a mean-one quantity over environments."""
    lam = log_mgf(run.env.dist, run.beta)
    return math.exp(run.log_z - run.n * lam)


def ou_flow(env: Environment, t: float, seed2: int) -> Environment:
    """Relax a standard-gaussian environment by time t along the stationary
    Ornstein–Uhlenbeck dynamics: g_t = e^{−t} g + sqrt(1 − e^{−2t}) h with h
    fresh i.i.d. standard normals keyed by ``seed2``.  Marginals are preserved
    and corr(g_0, g_t) = e^{−t} per site."""
    if env.dist.kind != "gaussian" or env.dist.params["mean"] != 0.0 or env.dist.params["sd"] != 1.0:
        raise UnsupportedError("ou_flow requires a standard gaussian environment")
    if t < 0:
        raise ParameterError("t must be nonnegative")
    if t == 0.0:
        return env
    r = env.radius
    coords = np.arange(-r, r + 1, dtype=np.int64)
    times = np.arange(1, env.n + 1, dtype=np.int64)
    if env.d == 1:
        u = _rng.uniforms(seed2, _STREAM_OU, times[:, None], coords[None, :])
    else:
        u = _rng.uniforms(
            seed2, _STREAM_OU, times[:, None, None], coords[None, :, None], coords[None, None, :]
        )
    from scipy.special import ndtri

    fresh = ndtri(u)
    mixed = math.exp(-t) * env.weights + math.sqrt(-math.expm1(-2.0 * t)) * fresh
    return Environment(env.d, env.n, env.radius, seed2, env.dist, mixed)


_STREAM_OU = 0x4F55


@dataclass(frozen=True)
class OverlapDerivativeCheck:
    """Two estimates of the same quantity: β(1 − E overlap) vs dF/dβ."""

    lhs: float
    rhs: float
    se_lhs: float
    se_rhs: float
    overlap_mean: float
    n_seeds: int


def overlap_derivative_check(
    dist: DistSpec,
    d: int,
    n: int,
    beta: float,
    dbeta: float,
    seeds: Sequence[int],
    walk: Optional[WalkKernel] = None,
) -> OverlapDerivativeCheck:
    """Monte Carlo check that β(1 − E⟨overlap⟩) matches the β-derivative of
    the mean free energy, using common random numbers across β values."""
    if dist.kind != "gaussian":
        raise UnsupportedError("the identity is stated for gaussian disorder")
    if dbeta <= 0:
        raise ParameterError("dbeta must be positive")
    overlaps = np.empty(len(seeds))
    derivs = np.empty(len(seeds))
    for k, seed in enumerate(seeds):
        e = sample_environment(dist, d, n, seed, walk)
        overlaps[k] = replica_overlap(forward_measures(e, beta, walk))
        up = forward_measures(e, beta + dbeta, walk).log_z
        lo = forward_measures(e, beta - dbeta, walk).log_z
        derivs[k] = (up - lo) / (2.0 * dbeta * n)
    m = len(seeds)
    ov_mean = float(overlaps.mean())
    lhs = beta * (1.0 - ov_mean)
    se_lhs = beta * float(overlaps.std(ddof=1)) / math.sqrt(m) if m > 1 else 0.0
    rhs = float(derivs.mean())
    se_rhs = float(derivs.std(ddof=1)) / math.sqrt(m) if m > 1 else 0.0
    return OverlapDerivativeCheck(lhs, rhs, se_lhs, se_rhs, ov_mean, m)


def dump_frames(run: PolymerRun, out_dir: str) -> Tuple[str, str]:
    """Write the endpoint evolution and the intermediate-time marginals as
    CSV frame files (one row per occupied site, frames keyed by the i column).

    Returns the two file paths.  Floats are written with repr so reruns of
    the same configuration are byte-identical.
    """
    os.makedirs(out_dir, exist_ok=True)
    coord_cols = ["x1"] if run.d == 1 else ["x1", "x2"]
    endpoint_path = os.path.join(out_dir, "endpoint_frames.csv")
    ith_path = os.path.join(out_dir, "ith_point_frames.csv")
    _write_frames(endpoint_path, coord_cols, run.fs)
    _write_frames(ith_path, coord_cols, _marginal_arrays(run))
    return endpoint_path, ith_path


def _write_frames(path: str, coord_cols: List[str], frames: Sequence[np.ndarray]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", *coord_cols, "mass"])
        for i, arr in enumerate(frames):
            r = (arr.shape[0] - 1) // 2
            for idx in zip(*np.nonzero(arr)):
                coords = [int(k) - r for k in idx]
                w.writerow([i, *coords, repr(float(arr[idx]))])

"""Partitioned subprobability measures and their comparison metric.

A value here is a finite list of sub-pmfs ("copies"), each living on its own
copy of Z^d, with total mass at most 1.  Two values are equivalent when the
copies can be matched bijectively up to per-copy translation; ``canonicalize``
computes a normal form that is identical exactly on each equivalence class.

The metric ``d_alpha`` compares two values through partial injections between
their supports.  A matching φ with domain A is scored

    α Σ_{u∈A} |f(u) − g(φ(u))| + Σ_{u∉A} f(u)^α + Σ_{u∉φ(A)} g(u)^α + 2^{−deg φ},

where deg φ is the largest scale below which φ preserves displacements
(∞ when φ acts by per-copy translations).  The metric is the infimum over
matchings; ``exact_small`` enumerates them all on small supports, ``upper``
scores a translation-only candidate family and is an upper bound.

The one-step update draws fresh disorder on the neighborhood of the support
and redistributes mass through the walk kernel, with the deficit 1 − ‖f‖
contributing e^{λ(β)} to the normalizer so that total mass 0 and 1 are
preserved classes.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _rng
from .env import DistSpec, WalkKernel, log_mgf
from .errors import ParameterError, SizeError, StatisticsError
from .polymer import LatticePMF, PolymerRun

ATOM_PRUNE = 1e-15

_STREAM_UPDATE = 0x50AA
_STREAM_RFUNC = 0x50AB

Coord = Tuple[int, ...]


@dataclass(frozen=True)
class PSPM:
    """A partitioned subprobability measure: copies of sub-pmfs on Z^d."""

    d: int
    copies: Tuple[Dict[Coord, float], ...]

    def __post_init__(self):
        total = 0.0
        for copy in self.copies:
            if not copy:
                raise ParameterError("empty copies must not be stored")
            for x, m in copy.items():
                if len(x) != self.d:
                    raise ParameterError(f"atom {x} does not have dimension {self.d}")
                if not m > 0.0:
                    raise ParameterError(f"atom mass at {x} must be strictly positive")
                total += m
        if total > 1.0 + 1e-12:
            raise ParameterError(f"total mass {total} exceeds 1")

    @classmethod
    def from_copies(cls, d: int, copies: Sequence[Dict[Coord, float]], prune: float = 0.0) -> "PSPM":
        kept = []
        for copy in copies:
            c = {tuple(x): float(m) for x, m in copy.items() if m > prune}
            if c:
                kept.append(c)
        return cls(d, tuple(kept))

    @classmethod
    def zero(cls, d: int) -> "PSPM":
        return cls(d, ())

    @classmethod
    def from_pmf(cls, pmf: LatticePMF) -> "PSPM":
        """Embed a lattice pmf as a single copy."""
        return cls.from_copies(pmf.d, [dict(pmf.atoms)])

    @property
    def norm(self) -> float:
        return math.fsum(m for copy in self.copies for m in copy.values())

    @property
    def n_atoms(self) -> int:
        return sum(len(c) for c in self.copies)

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "copies": [
                [{"x": list(x), "m": m} for x, m in sorted(copy.items())] for copy in self.copies
            ],
        }

    @classmethod
    def from_json(cls, obj) -> "PSPM":
        if isinstance(obj, str):
            obj = json.loads(obj)
        copies = [{tuple(a["x"]): float(a["m"]) for a in copy} for copy in obj["copies"]]
        return cls.from_copies(int(obj["d"]), copies)


def canonicalize(f: PSPM) -> PSPM:
    """Normal form: each copy translated so its heaviest atom (ties broken
    lexicographically) sits at the origin; copies sorted by mass then by
    their translated atom lists.  Equivalent inputs map to identical output."""
    normalized = []
    for copy in f.copies:
        top = max(copy.values())
        anchor = min(x for x, m in copy.items() if m == top)
        shifted = {tuple(a - b for a, b in zip(x, anchor)): m for x, m in copy.items()}
        normalized.append(shifted)
    normalized.sort(key=lambda c: (-math.fsum(c.values()), sorted(c.items())))
    return PSPM(f.d, tuple(normalized))


@dataclass(frozen=True)
class IsometryMatch:
    """A partial injection between atom addresses, with its maximal degree."""

    pairs: Tuple[Tuple[Tuple[int, Coord], Tuple[int, Coord]], ...]
    degree: float  # math.inf when the matching acts by per-copy translations


def _atom_table(f: PSPM):
    addr, masses = [], []
    for ci, copy in enumerate(f.copies):
        for x in sorted(copy):
            addr.append((ci, x))
            masses.append(copy[x])
    return addr, masses


def _pair_tables(addr):
    """Displacement (or None across copies) and ℓ¹ distance for all pairs."""
    n = len(addr)
    disp = [[None] * n for _ in range(n)]
    dist = [[math.inf] * n for _ in range(n)]
    for i in range(n):
        ci, xi = addr[i]
        for j in range(i + 1, n):
            cj, xj = addr[j]
            if ci == cj:
                d = tuple(a - b for a, b in zip(xi, xj))
                disp[i][j] = disp[j][i] = d
                dist[i][j] = dist[j][i] = sum(abs(c) for c in d)
            else:
                dist[i][j] = dist[j][i] = math.inf
    return disp, dist


def _matching_degree(pairs, disp_f, dist_f, disp_g, dist_g):
    deg = math.inf
    for (i1, p1), (i2, p2) in itertools.combinations(pairs, 2):
        df = disp_f[i1][i2]
        dg = disp_g[p1][p2]
        if df != dg:
            deg = min(deg, min(dist_f[i1][i2], dist_g[p1][p2]))
    return deg


def d_alpha(f: PSPM, g: PSPM, alpha: float, mode: str = "exact_small") -> float:
    """The comparison metric (exact on small supports) or its upper bound."""
    val, _ = d_alpha_match(f, g, alpha, mode)
    return val


def d_alpha_match(
    f: PSPM, g: PSPM, alpha: float, mode: str = "exact_small"
) -> Tuple[float, Optional[IsometryMatch]]:
    if alpha <= 1.0:
        raise ParameterError("alpha must exceed 1")
    if f.d != g.d:
        raise ParameterError("dimension mismatch")
    if mode == "exact_small":
        return _d_alpha_exact(f, g, alpha)
    if mode == "upper":
        return _d_alpha_upper(f, g, alpha), None
    raise ParameterError(f"unknown mode {mode!r}")


_EXACT_ATOM_CAP = 8


def _d_alpha_exact(f: PSPM, g: PSPM, alpha: float):
    addr_f, mass_f = _atom_table(f)
    addr_g, mass_g = _atom_table(g)
    a, b = len(addr_f), len(addr_g)
    if a > _EXACT_ATOM_CAP or b > _EXACT_ATOM_CAP:
        raise SizeError(
            f"exact_small handles supports of at most {_EXACT_ATOM_CAP} atoms "
            f"(got {a} and {b}); use mode='upper'"
        )
    disp_f, dist_f = _pair_tables(addr_f)
    disp_g, dist_g = _pair_tables(addr_g)
    pow_f = [m**alpha for m in mass_f]
    pow_g = [m**alpha for m in mass_g]

    best = math.fsum(pow_f + pow_g)  # empty matching, degree ∞
    best_pairs: Tuple = ()
    best_deg = math.inf
    for k in range(1, min(a, b) + 1):
        for fi in itertools.combinations(range(a), k):
            fset = set(fi)
            unmatched_f = [pow_f[i] for i in range(a) if i not in fset]
            base = math.fsum(unmatched_f)
            if base >= best:
                continue
            for gi in itertools.combinations(range(b), k):
                gset = set(gi)
                unmatched_g = [pow_g[j] for j in range(b) if j not in gset]
                for perm in itertools.permutations(gi):
                    pairs = tuple(zip(fi, perm))
                    deg = _matching_degree(pairs, disp_f, dist_f, disp_g, dist_g)
                    terms = [alpha * abs(mass_f[i] - mass_g[p]) for i, p in pairs]
                    terms += unmatched_f
                    terms += unmatched_g
                    terms.append(2.0**-deg)
                    val = math.fsum(terms)
                    if val < best:
                        best = val
                        best_pairs = pairs
                        best_deg = deg
    match = IsometryMatch(
        tuple((addr_f[i], addr_g[p]) for i, p in best_pairs), best_deg
    )
    return best, match


_TOP_ANCHORS = 5


def _copy_key(copy: Dict[Coord, float]):
    return (-math.fsum(copy.values()), sorted(copy.items()))


def _top_atom(copy: Dict[Coord, float]) -> Coord:
    top = max(copy.values())
    return min(x for x, m in copy.items() if m == top)


def _d_alpha_upper(f: PSPM, g: PSPM, alpha: float) -> float:
    pow_f = [m**alpha for copy in f.copies for m in copy.values()]
    pow_g = [m**alpha for copy in g.copies for m in copy.values()]
    best = math.fsum(pow_f + pow_g)  # empty matching

    atoms_f = sorted(
        ((ci, x, m) for ci, copy in enumerate(f.copies) for x, m in copy.items()),
        key=lambda t: (-t[2], t[0], t[1]),
    )[:_TOP_ANCHORS]
    atoms_g = sorted(
        ((ci, x, m) for ci, copy in enumerate(g.copies) for x, m in copy.items()),
        key=lambda t: (-t[2], t[0], t[1]),
    )[:_TOP_ANCHORS]
    order_f = sorted(range(len(f.copies)), key=lambda ci: _copy_key(f.copies[ci]))
    order_g = sorted(range(len(g.copies)), key=lambda ci: _copy_key(g.copies[ci]))

    for cf0, xf0, _ in atoms_f:
        for cg0, xg0, _ in atoms_g:
            # anchor copies aligned at the chosen atoms; remaining copies
            # greedily paired in mass order, each aligned at its own top atom
            pairing = [(cf0, cg0, tuple(a - b for a, b in zip(xg0, xf0)))]
            rest_f = [c for c in order_f if c != cf0]
            rest_g = [c for c in order_g if c != cg0]
            for cf, cg in zip(rest_f, rest_g):
                tf, tg = _top_atom(f.copies[cf]), _top_atom(g.copies[cg])
                pairing.append((cf, cg, tuple(a - b for a, b in zip(tg, tf))))
            terms = []
            used_f = set()
            used_g = set()
            for cf, cg, delta in pairing:
                gc = g.copies[cg]
                for x, m in f.copies[cf].items():
                    y = tuple(a + b for a, b in zip(x, delta))
                    if y in gc:
                        terms.append(alpha * abs(m - gc[y]))
                        used_g.add((cg, y))
                    else:
                        terms.append(m**alpha)
                used_f.add(cf)
            for ci, copy in enumerate(f.copies):
                if ci not in used_f:
                    terms += [m**alpha for m in copy.values()]
            for ci, copy in enumerate(g.copies):
                for y, m in copy.items():
                    if (ci, y) not in used_g:
                        terms.append(m**alpha)
            best = min(best, math.fsum(terms))
    return best


def update_map_sample(
    f: PSPM, beta: float, walk: WalkKernel, dist: DistSpec, seed: int
) -> PSPM:
    """One random one-step update of f in fresh disorder.

    Mass at u gets Σ_{v∼u} f(v) e^{β ω_u} K(u−v), normalized together with
    the deficit term (1 − ‖f‖) e^{λ(β)}.  Atoms below 1e-15 are pruned.
    """
    if walk.d != f.d:
        raise ParameterError("walk dimension mismatch")
    lam = log_mgf(dist, beta)  # raises DomainError when infinite
    norm = f.norm
    numerators: List[Dict[Coord, float]] = []
    total_terms = [(1.0 - norm) * math.exp(lam)]
    for ci, copy in enumerate(f.copies):
        contrib: Dict[Coord, float] = {}
        for x, m in copy.items():
            for z, kz in zip(walk.steps, walk.probs):
                y = tuple(a + b for a, b in zip(x, z))
                contrib[y] = contrib.get(y, 0.0) + m * kz
        sites = sorted(contrib)
        coords = np.asarray(sites, dtype=np.int64)
        words = [np.full(len(sites), ci, dtype=np.int64)] + [coords[:, k] for k in range(f.d)]
        omega = dist.from_uniforms(_rng.uniforms(seed, _STREAM_UPDATE, *words))
        num = {y: contrib[y] * math.exp(beta * float(w)) for y, w in zip(sites, omega)}
        numerators.append(num)
        total_terms += list(num.values())
    denom = math.fsum(total_terms)
    return PSPM.from_copies(
        f.d, [{y: v / denom for y, v in num.items()} for num in numerators], prune=ATOM_PRUNE
    )


def r_functional(
    f: PSPM,
    beta: float,
    walk: WalkKernel,
    dist: DistSpec,
    n_mc: int,
    seed: int,
) -> Tuple[float, float]:
    """Monte Carlo estimate (mean, standard error) of the expected log of the
    one-step normalizer; the exact value λ(β) is returned for f = 0."""
    lam = log_mgf(dist, beta)
    log_mgf(dist, 2.0 * beta)  # variance control: requires λ(2β) finite too
    if not f.copies:
        return lam, 0.0
    if n_mc < 2:
        raise StatisticsError("n_mc must be at least 2")
    tail = (1.0 - f.norm) * math.exp(lam)
    base = []
    keys = []
    for ci, copy in enumerate(f.copies):
        contrib: Dict[Coord, float] = {}
        for x, m in copy.items():
            for z, kz in zip(walk.steps, walk.probs):
                y = tuple(a + b for a, b in zip(x, z))
                contrib[y] = contrib.get(y, 0.0) + m * kz
        for y in sorted(contrib):
            base.append(contrib[y])
            keys.append((ci, y))
    base = np.asarray(base)
    t_idx = np.arange(n_mc, dtype=np.int64)[:, None]
    copy_ids = np.asarray([k[0] for k in keys], dtype=np.int64)[None, :]
    coord_words = [
        np.asarray([k[1][j] for k in keys], dtype=np.int64)[None, :] for j in range(f.d)
    ]
    u = _rng.uniforms(seed, _STREAM_RFUNC, t_idx, copy_ids, *coord_words)
    omega = dist.from_uniforms(u)
    samples = np.log(np.exp(beta * omega) @ base + tail)
    est = float(samples.mean())
    se = float(samples.std(ddof=1)) / math.sqrt(n_mc)
    return est, se


@dataclass(frozen=True)
class EmpiricalMeasure:
    """A uniformly weighted finite collection of PSPM atoms."""

    atoms: Tuple[PSPM, ...]

    def __post_init__(self):
        if not self.atoms:
            raise ParameterError("empirical measure needs at least one atom")

    @property
    def n(self) -> int:
        return len(self.atoms)


def empirical_from_run(run: PolymerRun) -> EmpiricalMeasure:
    """Empirical measure of the endpoint laws f_0, ..., f_{n−1} of a run,
    each embedded as a canonical single-copy value."""
    atoms = []
    for i in range(run.n):
        pmf = LatticePMF.from_dense(run.fs[i])
        atoms.append(canonicalize(PSPM.from_pmf(pmf)))
    return EmpiricalMeasure(tuple(atoms))


def update_empirical(
    rho: EmpiricalMeasure, beta: float, walk: WalkKernel, dist: DistSpec, seed: int
) -> EmpiricalMeasure:
    """One-sample stochastic image of the empirical measure under the update
    map (one fresh-disorder update per atom)."""
    out = []
    for i, atom in enumerate(rho.atoms):
        sub = _rng.derive_seed(seed, 0x55, i)
        out.append(canonicalize(update_map_sample(atom, beta, walk, dist, sub)))
    return EmpiricalMeasure(tuple(out))


def wasserstein_estimate(
    rho: EmpiricalMeasure, rho2: EmpiricalMeasure, alpha: float, mode: str = "upper"
) -> float:
    """Optimal-assignment transport cost between two uniform empirical
    measures under d_alpha.  With mode='upper' the pairwise costs are upper
    bounds, hence so is the value.  Unequal atom counts are handled by
    duplicating atoms up to the least common multiple."""
    from scipy.optimize import linear_sum_assignment

    a, b = list(rho.atoms), list(rho2.atoms)
    if len(a) != len(b):
        m = math.lcm(len(a), len(b))
        a = a * (m // len(a))
        b = b * (m // len(b))
    n = len(a)
    cost = np.empty((n, n))
    for i, fa in enumerate(a):
        for j, gb in enumerate(b):
            cost[i, j] = d_alpha(fa, gb, alpha, mode=mode)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / n)

"""Finite-horizon localization diagnostics for sequences of lattice pmfs.

Reported quantities: the largest single-site mass, the mass carried by atoms
above a threshold, Cesàro averages of those over a pmf sequence, whether a
(1−δ)-fraction of the mass fits in a set of bounded ℓ¹ diameter, and the mass
near the common neighborhood of all modes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ParameterError
from .polymer import LatticePMF


def max_mass(f: LatticePMF) -> float:
    if not f.atoms:
        raise ParameterError("empty pmf has no maximum mass")
    return max(f.atoms.values())


def atom_mass(f: LatticePMF, eps: float) -> float:
    """Total mass on sites whose individual mass strictly exceeds eps."""
    if eps < 0:
        raise ParameterError("eps must be nonnegative")
    return math.fsum(m for m in f.atoms.values() if m > eps)


def cesaro_apa(pmfs: Sequence[LatticePMF], eps: Sequence[float]) -> float:
    """Arithmetic mean of atom_mass(f_i, eps_i) along the sequence."""
    if len(pmfs) != len(eps):
        raise ParameterError(f"length mismatch: {len(pmfs)} pmfs vs {len(eps)} thresholds")
    if not pmfs:
        raise ParameterError("empty sequence")
    return math.fsum(atom_mass(f, e) for f, e in zip(pmfs, eps)) / len(pmfs)


def default_eps_sequence(n: int) -> List[float]:
    """Slowly vanishing thresholds eps_i = 1/log(i+2).

    The diagnostics accept any sequence tending to zero; this default is a
    convention of this library, not a canonical choice.
    """
    return [1.0 / math.log(i + 2) for i in range(n)]


def geometric_localization(f: LatticePMF, delta: float, K: int, mode: str = "exact") -> bool:
    """Does some subset of the support with ℓ¹ diameter ≤ K carry mass > 1−δ?

    exact mode: for d ≤ 2 the optimal subset is the support's intersection
    with an ℓ¹-diameter-K window, so a sliding-window sweep over anchored
    windows is exhaustive.  (In d = 2 the rotation u = x1+x2, v = x1−x2 turns
    ℓ¹ balls into axis boxes: pairwise ℓ¹ distance ≤ K is exactly containment
    in a K×K box in (u, v).)

    certificate mode: sound but not complete — tests only ℓ¹ balls of radius
    floor(K/2) centered at support points.
    """
    if not 0 < delta < 1:
        raise ParameterError("delta must be in (0, 1)")
    if K < 0:
        raise ParameterError("K must be nonnegative")
    if mode not in ("exact", "certificate"):
        raise ParameterError(f"unknown mode {mode!r}")
    if not f.atoms:
        return False
    need = 1.0 - delta
    if mode == "certificate":
        rad = K // 2
        pts = list(f.atoms)
        for c in pts:
            mass = math.fsum(m for x, m in f.atoms.items() if _l1(x, c) <= rad)
            if mass > need:
                return True
        return False
    if f.d == 1:
        xs = sorted((x[0], m) for x, m in f.atoms.items())
        coords = [x for x, _ in xs]
        masses = [m for _, m in xs]
        pre = np.concatenate([[0.0], np.cumsum(masses)])
        j = 0
        for i in range(len(xs)):
            if j < i:
                j = i
            while j + 1 < len(xs) and coords[j + 1] - coords[i] <= K:
                j += 1
            if pre[j + 1] - pre[i] > need:
                return True
        return False
    # d == 2: in rotated coordinates u = x1+x2, v = x1-x2, pairwise ℓ¹
    # distance <= K is containment in a (K+1)x(K+1) box, so the best subset
    # is the heaviest box window, found by a prefix-sum sweep on the grid
    pts = np.array([(x[0] + x[1], x[0] - x[1]) for x in f.atoms], dtype=np.int64)
    masses = np.fromiter(f.atoms.values(), dtype=float, count=len(f.atoms))
    lo = pts.min(axis=0)
    span = pts.max(axis=0) - lo + 1
    grid = np.zeros(span)
    grid[pts[:, 0] - lo[0], pts[:, 1] - lo[1]] = masses
    pre = np.zeros((span[0] + 1, span[1] + 1))
    pre[1:, 1:] = grid.cumsum(axis=0).cumsum(axis=1)
    w = min(K + 1, int(span[0])), min(K + 1, int(span[1]))
    windows = (
        pre[w[0] :, w[1] :]
        - pre[: span[0] - w[0] + 1, w[1] :]
        - pre[w[0] :, : span[1] - w[1] + 1]
        + pre[: span[0] - w[0] + 1, : span[1] - w[1] + 1]
    )
    return bool(windows.max() > need)


def _l1(x: Tuple[int, ...], y: Tuple[int, ...]) -> int:
    return sum(abs(a - b) for a, b in zip(x, y))


def favorite_region(
    f: LatticePMF, K: int, tie_tol: float = 1e-12
) -> Tuple[frozenset, float]:
    """Lattice points within ℓ¹ distance K of *every* mode, and their f-mass.

    Modes are sites within ``tie_tol`` of the maximal mass.  The region has
    diameter ≤ 2K and may be empty when modes are far apart.
    """
    if K < 0 or tie_tol < 0:
        raise ParameterError("K and tie_tol must be nonnegative")
    if not f.atoms:
        return frozenset(), 0.0
    top = max_mass(f)
    modes = [x for x, m in f.atoms.items() if m >= top - tie_tol]
    anchor = modes[0]
    region = []
    for offset in _l1_ball_offsets(f.d, K):
        x = tuple(a + o for a, o in zip(anchor, offset))
        if all(_l1(x, m) <= K for m in modes):
            region.append(x)
    mass = math.fsum(f.atoms.get(x, 0.0) for x in region)
    return frozenset(region), mass


def _l1_ball_offsets(d: int, K: int) -> Iterable[Tuple[int, ...]]:
    if d == 1:
        for a in range(-K, K + 1):
            yield (a,)
    else:
        for a in range(-K, K + 1):
            rest = K - abs(a)
            for b in range(-rest, rest + 1):
                yield (a, b)


@dataclass
class LocalizationReport:
    """Per-index localization statistics for a pmf sequence, plus averages."""

    index: List[int]
    max_masses: List[float]
    eps: List[float]
    atom_masses: List[float]
    geo_localized: List[bool]
    favorite_masses: List[float]
    favorite_sizes: List[int]
    delta: float
    K_geo: int
    K_fav: int

    @property
    def cesaro_max_mass(self) -> float:
        return math.fsum(self.max_masses) / len(self.index)

    @property
    def cesaro_atom_mass(self) -> float:
        return math.fsum(self.atom_masses) / len(self.index)

    @property
    def geo_density(self) -> float:
        return sum(self.geo_localized) / len(self.index)

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "max_mass", "eps", "atom_mass", "geo_localized", "favorite_mass", "favorite_size"])
            for row in zip(
                self.index,
                self.max_masses,
                self.eps,
                self.atom_masses,
                self.geo_localized,
                self.favorite_masses,
                self.favorite_sizes,
            ):
                w.writerow([row[0]] + [repr(v) if isinstance(v, float) else int(v) for v in row[1:]])

    def summary(self) -> dict:
        return {
            "n": len(self.index),
            "delta": self.delta,
            "K_geo": self.K_geo,
            "K_fav": self.K_fav,
            "cesaro_max_mass": self.cesaro_max_mass,
            "cesaro_atom_mass": self.cesaro_atom_mass,
            "geo_density": self.geo_density,
        }

    def to_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def localization_report(
    pmfs: Sequence[LatticePMF],
    eps: Optional[Sequence[float]] = None,
    delta: float = 0.1,
    K_geo: int = 4,
    K_fav: int = 2,
    tie_tol: float = 1e-12,
) -> LocalizationReport:
    eps = list(eps) if eps is not None else default_eps_sequence(len(pmfs))
    if len(eps) != len(pmfs):
        raise ParameterError("eps sequence length must match the pmf sequence")
    rows = LocalizationReport([], [], [], [], [], [], [], delta, K_geo, K_fav)
    for i, f in enumerate(pmfs):
        rows.index.append(i)
        rows.max_masses.append(max_mass(f))
        rows.eps.append(eps[i])
        rows.atom_masses.append(atom_mass(f, eps[i]))
        rows.geo_localized.append(geometric_localization(f, delta, K_geo, mode="exact"))
        region, mass = favorite_region(f, K_fav, tie_tol)
        rows.favorite_masses.append(mass)
        rows.favorite_sizes.append(len(region))
    return rows

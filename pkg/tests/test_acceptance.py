"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test prints a single PASS/FAIL line through the shared reporter (also
echoed in the terminal summary).  Seeds are fixed; all statistics are
deterministic via the counter-based sampling streams.
"""

import math
import random
import warnings

import numpy as np
from conftest import record_criterion
from oracles import (
    dp_logz_enumeration,
    fpp_enumeration,
    lpp_enumeration,
    polymer_enumeration,
)

from quenchlab.env import DistSpec, WalkKernel, sample_environment
from quenchlab import growth, msk, polymer, pspm

GAUSS = DistSpec.gaussian()
EXPO = DistSpec.exponential(1.0)
UNIF = DistSpec.uniform(0.0, 1.0)


def check(name, passed, detail):
    record_criterion(name, bool(passed), detail)
    assert passed, f"{name}: {detail}"


def test_c01_brute_force_equivalence():
    betas = [0.0, 0.5, 1.0, 3.0]
    worst = 0.0
    for i in range(50):
        d, nmax = (1, 6) if i % 2 == 0 else (2, 4)
        n = 2 + i % (nmax - 1)
        beta = betas[i % 4]
        walk = WalkKernel.srw(d)
        env = sample_environment(GAUSS, d, n, 1000 + i)
        run = polymer.forward_measures(env, beta, walk)
        log_z, endpoint, marg = polymer_enumeration(env, beta, walk)
        worst = max(worst, abs(run.log_z - log_z))
        got_end = run.endpoint_pmf().atoms
        for x in set(got_end) | set(endpoint):
            worst = max(worst, abs(got_end.get(x, 0.0) - endpoint.get(x, 0.0)))
        ms = polymer.ith_point_marginals(run)
        for k in range(n + 1):
            got = ms[k].atoms
            for x in set(got) | set(marg[k]):
                worst = max(worst, abs(got.get(x, 0.0) - marg[k].get(x, 0.0)))
    check(
        "C1 brute-force equivalence",
        worst <= 1e-10,
        f"max |transfer-matrix - enumeration| = {worst:.2e} over 50 instances (tol 1e-10)",
    )


def test_c02_annealed_bound():
    vals = np.array(
        [
            polymer.free_energy(polymer.forward_measures(sample_environment(GAUSS, 1, 50, s), 1.0))
            for s in range(2000, 2200)
        ]
    )
    mean = float(vals.mean())
    se = float(vals.std(ddof=1)) / math.sqrt(vals.size)
    margin = 0.5 - mean
    check(
        "C2 annealed bound",
        margin >= 3 * se,
        f"mean F_50 = {mean:.4f} vs annealed 0.5, margin {margin:.4f} >= 3*SE = {3*se:.4f}",
    )


def test_c03_martingale_mean():
    vals = np.array(
        [
            polymer.normalized_partition(
                polymer.forward_measures(sample_environment(GAUSS, 1, 20, s), 0.3)
            )
            for s in range(3000, 5000)
        ]
    )
    mean = float(vals.mean())
    se = float(vals.std(ddof=1)) / math.sqrt(vals.size)
    check(
        "C3 martingale mean",
        abs(mean - 1.0) <= 3 * se,
        f"mean W_20 = {mean:.5f}, |mean - 1| = {abs(mean-1):.5f} <= 3*SE = {3*se:.5f}",
    )


def test_c04_overlap_derivative_identity():
    res = polymer.overlap_derivative_check(GAUSS, 1, 64, 1.0, 0.05, seeds=range(7000, 7500))
    allowed = 3 * (res.se_lhs + res.se_rhs) + 0.1 * abs(res.rhs)
    diff = abs(res.lhs - res.rhs)
    check(
        "C4 overlap-derivative identity",
        diff <= allowed,
        f"|beta(1-E overlap) - dF/dbeta| = {diff:.4f} <= {allowed:.4f} (500 CRN seeds)",
    )


def _random_small_pspm(rng):
    n_atoms = rng.randint(1, 5)
    n_copies = rng.randint(1, 2)
    total = rng.uniform(0.3, 1.0)
    copies, remaining = [], n_atoms
    for c in range(n_copies):
        k = rng.randint(1, remaining) if c < n_copies - 1 else remaining
        remaining -= k
        coords = set()
        while len(coords) < k:
            coords.add((rng.randint(-6, 6),))
        raw = [rng.uniform(0.05, 1.0) for _ in range(k)]
        s = sum(raw) * n_copies / total
        copies.append({x: v / s for x, v in zip(sorted(coords), raw)})
        if remaining == 0:
            break
    return pspm.PSPM.from_copies(1, copies)


def test_c05_metric_axioms():
    rng = random.Random(505)
    alpha = 1.5
    sym_exact = True
    tri_worst = 0.0
    zero_ok = True
    for _ in range(200):
        f, g, h = (_random_small_pspm(rng) for _ in range(3))
        dfg = pspm.d_alpha(f, g, alpha)
        if dfg != pspm.d_alpha(g, f, alpha):
            sym_exact = False
        tri_worst = max(tri_worst, dfg + pspm.d_alpha(g, h, alpha) - pspm.d_alpha(f, h, alpha))
        shift = rng.randint(-5, 5)
        moved = pspm.PSPM.from_copies(
            1, [{(x[0] + shift,): m for x, m in c.items()} for c in reversed(f.copies)]
        )
        if pspm.d_alpha(f, moved, alpha) != 0.0:
            zero_ok = False
    tri_ok = tri_worst >= -1e-12  # d(f,g)+d(g,h)-d(f,h) >= -tol
    check(
        "C5 metric axioms",
        sym_exact and tri_ok and zero_ok,
        f"symmetry exact: {sym_exact}; triangle slack >= {-1e-12:.0e}: {tri_ok}; "
        f"zero on equivalent pairs: {zero_ok} (200 triples)",
    )


def test_c06_update_map_mass_classes():
    walk = WalkKernel.srw(1)
    rng = random.Random(606)
    worst = 0.0
    for trial in range(100):
        f = _random_small_pspm(rng)
        scale = 1.0 / f.norm
        f1 = pspm.PSPM.from_copies(1, [{x: m * scale for x, m in c.items()} for c in f.copies])
        out = pspm.update_map_sample(f1, 0.8, walk, GAUSS, seed=trial)
        worst = max(worst, abs(out.norm - 1.0))
    zeros_ok = all(
        pspm.update_map_sample(pspm.PSPM.zero(1), 1.0, walk, GAUSS, seed=t).norm == 0.0
        for t in range(10)
    )
    check(
        "C6 update-map mass classes",
        worst <= 1e-12 and zeros_ok,
        f"max |norm - 1| = {worst:.2e} over 100 probability inputs; zero stays zero: {zeros_ok}",
    )


def test_c07_sk_threshold_reduction():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # unit-variance matrix is singular
        model = msk.two_species(0.5, 1.0, 1.0, 0.5, 0.0)
        got = msk.uniqueness_threshold(model)
    check(
        "C7 single-species threshold reduction",
        abs(got - 0.5) <= 1e-12,
        f"beta0^2 = {got!r} vs 1/2 (tol 1e-12)",
    )


def test_c08_hessian_formula():
    from test_msk import _fd_hessian_of_zeta_derivative

    quad = msk.Quadrature.make()
    rng = random.Random(808)
    worst = 0.0
    for _ in range(5):
        model = msk.two_species(
            rng.uniform(0.3, 0.7),
            rng.uniform(1.3, 2.2),
            rng.uniform(1.3, 2.2),
            rng.uniform(0.5, 1.2),
            0.5,
        )
        point, _ = msk.rs_fixed_point(model, quad, tol=1e-12)
        closed = msk.hessian_v(model, point, quad)
        fd = _fd_hessian_of_zeta_derivative(model, point.q, quad)
        worst = max(worst, float(np.linalg.norm(fd - closed) / np.linalg.norm(closed)))
    check(
        "C8 closed-form Hessian",
        worst <= 1e-4,
        f"max relative diff vs double finite differences = {worst:.2e} over 5 models (tol 1e-4)",
    )


def test_c09_rs_1rsb_consistency():
    quad = msk.Quadrature.make()
    rng = random.Random(909)
    worst_rs = 0.0
    for _ in range(20):
        model = msk.two_species(
            rng.uniform(0.3, 0.7),
            rng.uniform(1.3, 2.2),
            rng.uniform(1.3, 2.2),
            rng.uniform(0.3, 1.2),
            rng.uniform(0.1, 1.0),
        )
        q = np.array([rng.uniform(0, 1), rng.uniform(0, 1)])
        p = q + np.array([rng.uniform(0, 1 - q[0]), rng.uniform(0, 1 - q[1])])
        worst_rs = max(
            worst_rs,
            abs(msk.parisi_1rsb(model, q, p, 1.0, quad) - msk.rs_free_energy(model, q, quad)),
        )
    model = msk.two_species(0.5, 1.7, 1.3, 1.0, 0.5)
    q = np.array([0.25, 0.3])
    p = np.array([0.5, 0.65])
    zeta = 0.73
    params = msk.ParisiParams(
        np.array([0.0, zeta, 1.0]), np.vstack([np.zeros(2), q, p, np.ones(2)])
    )
    worst_k1 = abs(
        msk.parisi_general(model, params, quad) - msk.parisi_1rsb(model, q, p, zeta, quad)
    )
    check(
        "C9 one-level consistency",
        worst_rs <= 1e-10 and worst_k1 <= 1e-10,
        f"|zeta=1 - single-atom| <= {worst_rs:.2e} (20 instances); |k=1 - one-level| = {worst_k1:.2e} (tol 1e-10)",
    )


def test_c10_symmetry_breaking_witness():
    quad = msk.Quadrature.make()
    crossing = msk.at_crossing_beta_sq(0.5, 2.0, 2.0, 0.5, quad)
    hot = msk.two_species(0.5, 2.0, 2.0, math.sqrt(1.5 * crossing), 0.5)
    wit = msk.verify_symmetry_breaking(hot, quad)
    cold = msk.two_species(0.5, 2.0, 2.0, math.sqrt(0.5 * crossing), 0.5)
    none_below = msk.verify_symmetry_breaking(cold, quad) is None
    gap = wit.gap if wit is not None else float("nan")
    check(
        "C10 symmetry-breaking witness",
        wit is not None and gap > 1e-8 and none_below,
        f"gap at 1.5x threshold = {gap:.3e} (> 1e-8); none at 0.5x: {none_below}",
    )


def test_c11_growth_oracles():
    worst_fpp = 0.0
    for seed in range(4):
        f = growth.sample_field("edge", EXPO, (3, 3), 1100 + seed)
        t, _ = growth.fpp_passage(f, (0, 0), (2, 2))
        worst_fpp = max(worst_fpp, abs(t - fpp_enumeration(f.eh, f.ev, (0, 0), (2, 2))))
    worst_lpp = 0.0
    for seed in range(4):
        f = growth.sample_field("vertex", GAUSS, (4, 4), 1200 + seed)
        t, _ = growth.lpp_passage(f, (0, 0), (3, 3))
        worst_lpp = max(worst_lpp, abs(t - lpp_enumeration(f.vertex, (0, 0), (3, 3))))
    worst_dp = 0.0
    for seed in range(4):
        f = growth.sample_field("vertex", GAUSS, (6, 6), 1300 + seed)
        worst_dp = max(
            worst_dp, abs(growth.dp_free_energy(f, 1.1, 4) - dp_logz_enumeration(f.vertex, 1.1, 4))
        )
    check(
        "C11 growth oracles",
        worst_fpp == 0.0 and worst_lpp <= 1e-12 and worst_dp <= 1e-10,
        f"fpp exact diff {worst_fpp:.1e}; lpp diff {worst_lpp:.1e} (<= 1e-12); "
        f"directed logZ diff {worst_dp:.1e} (<= 1e-10)",
    )


def test_c12_coupling_invariants():
    cfg = growth.FluctConfig("fpp", EXPO, (12,), replicas=30, seed=12)
    stats = growth.fluctuation_experiment(cfg)
    gaps_ok = bool(np.all(stats.gaps(12) >= 0.0))
    target = 2.0 * math.sqrt(2.0) / 3.0
    worst_aff = max(
        abs(growth.hellinger_affinity(dist, 1, 1.0) - target) for dist in (EXPO, UNIF)
    )
    check(
        "C12 coupling invariants",
        gaps_ok and worst_aff <= 1e-6,
        f"all min-coupling gaps >= 0: {gaps_ok}; |affinity - 2*sqrt(2)/3| = {worst_aff:.2e} (tol 1e-6)",
    )


def test_c13_fluctuation_growth():
    cfg = growth.FluctConfig("fpp", EXPO, (64, 128, 256), replicas=200, seed=20)
    stats = growth.fluctuation_experiment(cfg)
    ratios = [stats.shorth[n] / math.sqrt(math.log(n)) for n in cfg.n_list]
    positive = all(stats.shorth[n] > 0 for n in cfg.n_list)
    inversions = [(a - b) / a for a, b in zip(ratios, ratios[1:]) if b < a]
    monotone_ok = len(inversions) <= 1 and all(v <= 0.15 for v in inversions)
    check(
        "C13 fluctuation growth",
        positive and monotone_ok,
        f"shorth/sqrt(log n) = {[round(r, 4) for r in ratios]}; "
        f"positive: {positive}; <=1 inversion of <=15%: {monotone_ok}",
    )

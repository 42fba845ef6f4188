import math

import numpy as np
import pytest
from oracles import dp_logz_enumeration, fpp_enumeration, lpp_enumeration, lpp_paths

from quenchlab.env import DistSpec
from quenchlab.errors import ParameterError, StatisticsError, UnsupportedError
from quenchlab.growth import (
    FluctConfig,
    couple,
    dp_free_energy,
    eps_radial,
    fluctuation_experiment,
    fpp_passage,
    hellinger_affinity,
    hellinger_tv,
    lpp_passage,
    percolation_guards,
    sample_field,
    shorth_width,
)

EXPO = DistSpec.exponential(1.0)
UNIF = DistSpec.uniform(0.0, 1.0)
GAUSS = DistSpec.gaussian()


class TestFPP:
    def test_unit_weights_l1_metric(self):
        nx = ny = 6
        eh = np.ones((nx - 1, ny))
        ev = np.ones((nx, ny - 1))
        for dst in ((3, 4), (5, 0), (2, 2)):
            t, path = fpp_passage((eh, ev), (0, 0), dst)
            assert t == dst[0] + dst[1]
            assert len(path) == t + 1

    def test_matches_enumeration_3x3(self):
        for seed in range(6):
            f = sample_field("edge", EXPO, (3, 3), seed)
            t, path = fpp_passage(f, (0, 0), (2, 2))
            assert t == pytest.approx(fpp_enumeration(f.eh, f.ev, (0, 0), (2, 2)), abs=0)
            # the geodesic achieves the claimed time
            acc = 0.0
            for a, b in zip(path, path[1:]):
                (x1, y1), (x2, y2) = sorted((a, b))
                acc += f.eh[x1, y1] if x2 == x1 + 1 else f.ev[x1, y1]
            assert acc == pytest.approx(t, abs=1e-12)

    def test_symmetry(self):
        f = sample_field("edge", UNIF, (5, 5), 3)
        for pair in (((0, 0), (4, 4)), ((1, 3), (4, 0))):
            t1, _ = fpp_passage(f, *pair, with_path=False)
            t2, _ = fpp_passage(f, pair[1], pair[0], with_path=False)
            assert t1 == pytest.approx(t2, abs=1e-12)

    def test_triangle_inequality(self):
        rng = np.random.default_rng(0)
        f = sample_field("edge", EXPO, (8, 8), 11)
        for _ in range(100):
            pts = [tuple(rng.integers(0, 8, 2)) for _ in range(3)]
            x, y, z = pts
            txz = fpp_passage(f, x, z, with_path=False)[0]
            txy = fpp_passage(f, x, y, with_path=False)[0]
            tyz = fpp_passage(f, y, z, with_path=False)[0]
            assert txz <= txy + tyz + 1e-9

    def test_negative_weights_rejected(self):
        with pytest.raises(ParameterError):
            sample_field("edge", GAUSS, (4, 4), 0)

    def test_deterministic_tiebreak(self):
        eh = np.ones((2, 3))
        ev = np.ones((3, 2))
        _, p1 = fpp_passage((eh, ev), (0, 0), (2, 2))
        _, p2 = fpp_passage((eh, ev), (0, 0), (2, 2))
        assert p1 == p2


class TestLPP:
    def test_single_row_excludes_source(self):
        f = sample_field("vertex", GAUSS, (6, 3), 5)
        t, path = lpp_passage(f, (0, 0), (5, 0))
        assert t == pytest.approx(f.vertex[1:6, 0].sum(), abs=1e-12)
        assert path == [(k, 0) for k in range(6)]

    def test_matches_enumeration_4x4(self):
        assert len(lpp_paths(3, 3)) == 20
        for seed in range(5):
            f = sample_field("vertex", GAUSS, (4, 4), seed)
            t, path = lpp_passage(f, (0, 0), (3, 3))
            # summation association differs between the DP and the oracle,
            # so "exact" means agreement to the last couple of ulps
            assert t == pytest.approx(lpp_enumeration(f.vertex, (0, 0), (3, 3)), abs=1e-12)
            acc = sum(f.vertex[v] for v in path[1:])
            assert acc == pytest.approx(t, abs=1e-12)

    def test_monotone_in_single_weight(self):
        f = sample_field("vertex", GAUSS, (5, 5), 7)
        base, _ = lpp_passage(f, (0, 0), (4, 4), with_path=False)
        for bump_site in ((1, 2), (3, 3), (4, 0)):
            x = f.vertex.copy()
            x[bump_site] += 1.5
            bumped, _ = lpp_passage(x, (0, 0), (4, 4), with_path=False)
            assert bumped >= base - 1e-12

    def test_superadditivity_along_diagonal(self):
        f = sample_field("vertex", EXPO, (9, 9), 13)
        v = (4, 4)
        t_full, _ = lpp_passage(f, (0, 0), (8, 8), with_path=False)
        t1, _ = lpp_passage(f, (0, 0), v, with_path=False)
        t2, _ = lpp_passage(f, v, (8, 8), with_path=False)
        assert t_full >= t1 + t2 - 1e-12

    def test_direction_validation(self):
        f = sample_field("vertex", GAUSS, (4, 4), 1)
        with pytest.raises(ParameterError):
            lpp_passage(f, (2, 2), (1, 3))


class TestDPFreeEnergy:
    def test_beta_zero_counts_paths(self):
        f = sample_field("vertex", GAUSS, (8, 8), 2)
        for n in (1, 3, 6):
            assert dp_free_energy(f, 0.0, n) == pytest.approx(n * math.log(2), abs=1e-12)

    def test_matches_enumeration_n4(self):
        for seed in range(5):
            f = sample_field("vertex", GAUSS, (6, 6), seed)
            got = dp_free_energy(f, 1.1, 4)
            want = dp_logz_enumeration(f.vertex, 1.1, 4)
            assert got == pytest.approx(want, abs=1e-10)

    def test_zero_temperature_limit(self):
        f = sample_field("vertex", GAUSS, (8, 8), 9)
        beta = 50.0
        n = 6
        logz = dp_free_energy(f, beta, n)
        best = max(
            lpp_passage(f, (0, 0), (a, n - a), with_path=False)[0] for a in range(n + 1)
        )
        assert logz / beta == pytest.approx(best, abs=1e-2)

    def test_convex_in_beta(self):
        f = sample_field("vertex", GAUSS, (12, 12), 4)
        betas = np.linspace(0.0, 2.0, 15)
        vals = [dp_free_energy(f, b, 10) for b in betas]
        assert np.diff(vals, 2).min() >= -1e-8


class TestCoupling:
    def test_zero_eps_identity(self):
        f = sample_field("vertex", GAUSS, (6, 6), 3)
        eps = {"vertex": np.zeros(f.shape)}
        c = couple(f, 2, "min", eps, seed2=9)
        assert np.array_equal(c.tilde["vertex"], f.vertex)

    def test_min_coupling_dominated(self):
        f = sample_field("edge", EXPO, (10, 10), 5)
        eps = {"eh": np.full(f.eh.shape, 0.4), "ev": np.full(f.ev.shape, 0.4)}
        c = couple(f, 3, "min", eps, seed2=1)
        assert np.all(c.tilde["eh"] <= f.eh)
        assert np.all(c.tilde["ev"] <= f.ev)

    def test_max_coupling_dominates(self):
        f = sample_field("vertex", GAUSS, (10, 10), 5)
        eps = {"vertex": np.full(f.shape, 0.3)}
        c = couple(f, 2, "max", eps, seed2=2)
        assert np.all(c.tilde["vertex"] >= f.vertex)

    def test_switch_fraction_binomial(self):
        f = sample_field("vertex", UNIF, (320, 320), 8)
        eps = {"vertex": np.full(f.shape, 0.1)}
        c = couple(f, 1, "min", eps, seed2=3)
        frac = c.switched["vertex"].mean()
        n = f.vertex.size
        assert abs(frac - 0.1) <= 4 * math.sqrt(0.09 / n)

    def test_eps_validation(self):
        f = sample_field("vertex", UNIF, (4, 4), 8)
        with pytest.raises(ParameterError):
            couple(f, 1, "min", {"vertex": np.full(f.shape, 1.0)}, 0)
        with pytest.raises(ParameterError):
            couple(f, 0, "min", {"vertex": np.zeros(f.shape)}, 0)


class TestEpsRadial:
    def test_origin_value_and_linearity(self):
        f = sample_field("vertex", UNIF, (8, 8), 0)
        e1 = eps_radial(f, 64, 0.5)["vertex"]
        e2 = eps_radial(f, 64, 1.0)["vertex"]
        assert e1[0, 0] == pytest.approx(0.5 / math.sqrt(math.log(64)), abs=1e-15)
        assert np.allclose(e2, 2 * e1)

    def test_sum_eps_sq_bounded_in_n(self):
        # sum over the radius-n ball of the squared profile stays bounded
        sums = []
        for n in (64, 128, 256, 512, 1024):
            f = sample_field("vertex", UNIF, (n + 1, n + 1), 0)
            e = eps_radial(f, n, 0.5)["vertex"]
            ax = np.arange(n + 1)[:, None] + np.arange(n + 1)[None, :]
            sums.append(float((e[ax <= n] ** 2).sum()))
        assert all(b <= a * 1.02 for a, b in zip(sums, sums[1:]))

    def test_edge_field_uses_closer_endpoint(self):
        f = sample_field("edge", EXPO, (5, 5), 0, origin=(-2, -2))
        e = eps_radial(f, 27, 1.0)
        scale = 1.0 / math.sqrt(math.log(27))
        # edge from (0,0) to (1,0): distance 0
        assert e["eh"][2, 2] == pytest.approx(scale, abs=1e-15)


class TestHellinger:
    def test_eps_zero(self):
        assert hellinger_affinity(EXPO, 1, 0.0) == 1.0
        _, bound = hellinger_tv(EXPO, 1, [0.0, 0.0])
        assert bound == 0.0

    @pytest.mark.parametrize("dist", [EXPO, UNIF, GAUSS])
    def test_full_switch_single_copy_value(self, dist):
        # distribution-free value 2*sqrt(2)/3 for m=1, eps=1
        got = hellinger_affinity(dist, 1, 1.0)
        assert got == pytest.approx(2 * math.sqrt(2) / 3, abs=1e-6)

    def test_small_eps_quadratic_deficit(self):
        cs = []
        for eps in (0.2, 0.1, 0.05, 0.025):
            rho = hellinger_affinity(EXPO, 1, eps)
            cs.append((1.0 - rho) / eps**2)
        for a, b in zip(cs, cs[1:]):
            assert abs(a - b) <= 0.2 * abs(a)

    def test_discrete_unsupported(self):
        with pytest.raises(UnsupportedError):
            hellinger_affinity(DistSpec.bernoulli_pm1(0.4), 1, 0.5)

    def test_bound_monotone_in_each_eps(self):
        _, b1 = hellinger_tv(UNIF, 1, [0.1, 0.1, 0.1])
        _, b2 = hellinger_tv(UNIF, 1, [0.1, 0.3, 0.1])
        assert 0.0 <= b1 <= b2 <= 1.0


class TestShorth:
    def test_known_sample(self):
        x = np.array([0.0, 0.1, 0.2, 5.0, 5.05, 5.1, 5.15, 9.0])
        # shortest window covering 4 of 8 points: [5.0, 5.15]
        assert shorth_width(x) == pytest.approx(0.15, abs=1e-12)

    def test_scale_equivariance(self):
        x = np.random.default_rng(1).standard_normal(200)
        assert shorth_width(3.0 * x) == pytest.approx(3.0 * shorth_width(x), rel=1e-12)


class TestFluctuationExperiment:
    def test_replica_guard(self):
        with pytest.raises(StatisticsError):
            FluctConfig("fpp", EXPO, (8,), replicas=19)

    def test_min_coupling_gaps_nonnegative_fpp(self):
        cfg = FluctConfig("fpp", EXPO, (8, 12), replicas=20, seed=5)
        stats = fluctuation_experiment(cfg)
        for n in cfg.n_list:
            assert np.all(stats.gaps(n) >= -1e-12)
            assert stats.shorth[n] > 0
            assert 0.0 <= stats.tv_bound[n] <= 1.0

    def test_max_coupling_gaps_nonnegative_lpp(self):
        cfg = FluctConfig("lpp", UNIF, (8,), replicas=20, mode="max", seed=6)
        stats = fluctuation_experiment(cfg)
        assert np.all(stats.gaps(8) >= -1e-12)

    def test_polymer_observable(self):
        cfg = FluctConfig("polymer", UNIF, (6,), replicas=20, mode="min", beta=0.8, seed=7)
        stats = fluctuation_experiment(cfg)
        assert np.all(stats.gaps(6) >= -1e-12)  # log-sum-exp is monotone in weights

    def test_csv_output(self, tmp_path):
        cfg = FluctConfig("lpp", EXPO, (6,), replicas=20, mode="max", seed=8)
        stats = fluctuation_experiment(cfg)
        raw, summary = stats.write_csv(str(tmp_path))
        lines = open(raw).read().strip().splitlines()
        assert lines[0] == "model,n,replica,T,T_tilde,gap"
        assert len(lines) == 1 + 20
        slines = open(summary).read().strip().splitlines()
        assert slines[0] == "n,shorth,iqr,tv_bound,sum_eps_sq"
        assert len(slines) == 2

    def test_percolation_guard_warns(self):
        with pytest.warns(UserWarning):
            percolation_guards(DistSpec.bernoulli_pm1(0.8), "fpp")
        with pytest.warns(UserWarning):
            percolation_guards(DistSpec.bernoulli_pm1(0.2), "lpp")

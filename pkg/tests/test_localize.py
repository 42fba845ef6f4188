import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quenchlab.env import DistSpec, sample_environment
from quenchlab.errors import ParameterError
from quenchlab.localize import (
    atom_mass,
    cesaro_apa,
    default_eps_sequence,
    favorite_region,
    geometric_localization,
    localization_report,
    max_mass,
)
from quenchlab.polymer import LatticePMF, delta_pmf, forward_measures, ith_point_marginals


def pmf1(d):
    return LatticePMF(1, {(k,): v for k, v in d.items()})


@st.composite
def small_pmfs(draw, d=1, max_atoms=6):
    n_atoms = draw(st.integers(1, max_atoms))
    coords = draw(
        st.lists(
            st.tuples(*[st.integers(-8, 8)] * d),
            min_size=n_atoms,
            max_size=n_atoms,
            unique=True,
        )
    )
    raw = draw(st.lists(st.floats(0.01, 1.0), min_size=n_atoms, max_size=n_atoms))
    tot = sum(raw)
    scale = draw(st.floats(0.2, 1.0)) / tot
    return LatticePMF(d, {c: v * scale for c, v in zip(coords, raw)})


class TestMaxAndAtomMass:
    def test_point_mass(self):
        assert max_mass(delta_pmf(1)) == 1.0

    def test_uniform_four_points(self):
        f = pmf1({0: 0.25, 1: 0.25, 2: 0.25, 3: 0.25})
        assert max_mass(f) == 0.25

    def test_srw_central_binomial(self):
        env = sample_environment(DistSpec.gaussian(), 1, 10, 3)
        run = forward_measures(env, 0.0)
        assert max_mass(run.endpoint_pmf()) == pytest.approx(math.comb(10, 5) / 2**10, abs=1e-14)
        assert max_mass(run.endpoint_pmf()) == pytest.approx(0.24609375, abs=1e-12)

    def test_empty_pmf_error(self):
        with pytest.raises(ParameterError):
            max_mass(LatticePMF(1, {}))

    def test_atom_mass_cases(self):
        f = pmf1({0: 0.6, 1: 0.3, 2: 0.1})
        assert atom_mass(f, 0.2) == pytest.approx(0.9, abs=1e-15)
        assert atom_mass(f, max_mass(f)) == 0.0  # strict inequality
        assert atom_mass(f, 0.0) == pytest.approx(1.0, abs=1e-15)

    @given(small_pmfs())
    @settings(max_examples=100, deadline=None)
    def test_atom_mass_monotone_and_right_continuous(self, f):
        grid = sorted(set(f.atoms.values())) + [0.0, 0.5, 1.0]
        vals = [atom_mass(f, e) for e in sorted(grid)]
        assert all(a >= b - 1e-15 for a, b in zip(vals, vals[1:]))
        # stepwise: constant on [v, w) for consecutive distinct masses v < w
        # (skip pairs of adjacent doubles, where (v, w) holds no float)
        import math as _math

        distinct = sorted(set(f.atoms.values()))
        for v, w in zip(distinct, distinct[1:] + [distinct[-1] + 1.0]):
            probe = _math.nextafter(v, w)
            if probe < w:
                assert atom_mass(f, v) == pytest.approx(atom_mass(f, probe), abs=1e-12)


class TestCesaro:
    def test_all_eps_above_max(self):
        fs = [pmf1({0: 0.5, 1: 0.5}), pmf1({0: 1.0})]
        assert cesaro_apa(fs, [1.0, 1.0]) == 0.0

    def test_zero_eps_probability_pmfs(self):
        fs = [pmf1({0: 0.5, 1: 0.5}), pmf1({0: 1.0})]
        assert cesaro_apa(fs, [0.0, 0.0]) == pytest.approx(1.0, abs=1e-15)

    def test_mean_of_two(self):
        fs = [pmf1({0: 0.9, 5: 0.1}), pmf1({0: 0.5, 1: 0.25, 2: 0.25})]
        assert cesaro_apa(fs, [0.5, 0.3]) == pytest.approx((0.9 + 0.5) / 2, abs=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ParameterError):
            cesaro_apa([pmf1({0: 1.0})], [0.1, 0.2])

    def test_default_eps_vanishes_slowly(self):
        eps = default_eps_sequence(1000)
        assert eps[0] == pytest.approx(1 / math.log(2))
        assert all(a >= b for a, b in zip(eps, eps[1:]))
        assert eps[-1] < 0.15


class TestGeometricLocalization:
    def test_point_mass(self):
        assert geometric_localization(delta_pmf(1), 0.5, 0) is True
        assert geometric_localization(delta_pmf(2), 0.01, 0) is True

    def test_uniform_window_enumeration(self):
        # uniform on {-5..5}: any diameter-3 window holds at most 4/11 < 0.9
        f = pmf1({k: 1 / 11 for k in range(-5, 6)})
        assert geometric_localization(f, 0.1, 3) is False
        assert geometric_localization(f, 0.7, 3) is True  # 4/11 > 0.3

    def test_far_outlier(self):
        f = pmf1({0: 0.5, 1: 0.45, 100: 0.05})
        assert geometric_localization(f, 0.1, 1) is True

    def test_exact_matches_subset_enumeration_d2(self):
        f = LatticePMF(2, {(0, 0): 0.3, (1, 1): 0.3, (2, 0): 0.2, (0, 3): 0.2})
        for K in range(0, 7):
            for delta in (0.15, 0.35, 0.55, 0.75):
                want = _subset_oracle(f, delta, K)
                assert geometric_localization(f, delta, K) is want, (K, delta)

    @given(small_pmfs(d=2, max_atoms=5), st.integers(0, 6))
    @settings(max_examples=150, deadline=None)
    def test_exact_matches_subset_enumeration_random(self, f, K):
        assert geometric_localization(f, 0.4, K) is _subset_oracle(f, 0.4, K)

    @given(small_pmfs(d=1, max_atoms=6), st.integers(0, 6))
    @settings(max_examples=200, deadline=None)
    def test_certificate_implies_exact(self, f, K):
        if geometric_localization(f, 0.3, K, mode="certificate"):
            assert geometric_localization(f, 0.3, K, mode="exact")

    def test_parameter_validation(self):
        with pytest.raises(ParameterError):
            geometric_localization(delta_pmf(1), 0.0, 1)
        with pytest.raises(ParameterError):
            geometric_localization(delta_pmf(1), 0.5, -1)
        with pytest.raises(ParameterError):
            geometric_localization(delta_pmf(1), 0.5, 1, mode="fast")


def _subset_oracle(f, delta, K):
    atoms = list(f.atoms.items())
    for r in range(1, len(atoms) + 1):
        for sub in itertools.combinations(atoms, r):
            coords = [x for x, _ in sub]
            diam = max(
                (sum(abs(a - b) for a, b in zip(p, q)) for p in coords for q in coords),
                default=0,
            )
            if diam <= K and math.fsum(m for _, m in sub) > 1 - delta:
                return True
    return False


class TestFavoriteRegion:
    def test_single_mode_k0(self):
        f = pmf1({3: 0.7, 0: 0.3})
        region, mass = favorite_region(f, 0)
        assert region == frozenset({(3,)})
        assert mass == 0.7

    def test_distant_modes_empty(self):
        f = pmf1({0: 0.5, 10: 0.5})
        region, mass = favorite_region(f, 2)
        assert region == frozenset()
        assert mass == 0.0

    def test_between_two_modes(self):
        f = pmf1({0: 0.4, 2: 0.4, 1: 0.2})
        region, mass = favorite_region(f, 1, tie_tol=0.0)
        assert region == frozenset({(1,)})
        assert mass == pytest.approx(0.2)

    @given(small_pmfs(d=2, max_atoms=5), st.integers(0, 4))
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_K(self, f, K):
        r1, m1 = favorite_region(f, K)
        r2, m2 = favorite_region(f, K + 1)
        assert r1 <= r2
        assert m2 >= m1 - 1e-15
        assert m1 <= 1 + 1e-12
        if r1:
            diam = max(sum(abs(a - b) for a, b in zip(p, q)) for p in r1 for q in r1)
            assert diam <= 2 * K


class TestReport:
    def test_report_on_polymer_run(self, tmp_path):
        env = sample_environment(DistSpec.gaussian(), 1, 12, 5)
        run = forward_measures(env, 2.0)
        ms = ith_point_marginals(run)
        rep = localization_report(ms, delta=0.5, K_geo=2, K_fav=1)
        assert rep.index == list(range(13))
        assert all(0 <= m <= 1 for m in rep.max_masses)
        assert all(0 <= m <= 1 for m in rep.atom_masses)
        assert rep.cesaro_atom_mass == pytest.approx(
            sum(rep.atom_masses) / 13, abs=1e-12
        )
        csv_path = tmp_path / "report.csv"
        json_path = tmp_path / "report.json"
        rep.to_csv(str(csv_path))
        rep.to_json(str(json_path))
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0].startswith("i,max_mass,eps,atom_mass")
        assert len(lines) == 14
        assert "cesaro_max_mass" in json_path.read_text()

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambres import _search
from ambres.decoder import (
    AmbiguityModel,
    Separability,
    babai_nearest_plane,
    canonical_representative,
    closest_lattice_point,
    conditional_decision,
    enumerate_within_radius,
    map_decision,
    truncated_posterior,
)
from ambres.errors import CapacityExceeded, DimensionMismatch
from ambres.lattice import SpdForm, lll_reduce
from conftest import box_closest, box_distances, int_box, random_spd


def gnss_like_form(p: int, seed: int) -> SpdForm:
    """Correlated SPD with a dominant common direction, loosely like float
    ambiguity information."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    a = rng.standard_normal((p, p + 2))
    m = a @ a.T + 0.5 * np.eye(p)
    common = np.ones((p, 1)) / np.sqrt(p)
    return SpdForm(4.0 * (m + 30.0 * common @ common.T))


class TestBabai:
    def test_diagonal_rounding(self):
        r = lll_reduce(SpdForm(np.diag([4.0, 9.0])))
        assert np.array_equal(babai_nearest_plane(r, [0.4, -1.6]), [0, -2])

    def test_integral_fixed_point(self):
        r = lll_reduce(random_spd(4, seed=0))
        nu = np.array([2.0, -1.0, 0.0, 5.0])
        assert np.array_equal(babai_nearest_plane(r, nu), nu.astype(np.int64))

    def test_suboptimal_somewhere_but_closest_is_not(self):
        # nearest-plane rounding must fail on some float solutions of a skewed
        # 2-D form while the full search still matches the exhaustive oracle
        m = SpdForm([[1.0, 0.9], [0.9, 1.0]])
        r = lll_reduce(m)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(5)))
        mismatches = 0
        for _ in range(300):
            nu = rng.uniform(-1.5, 1.5, size=2)
            best, d2, interior = box_closest(m.entries, nu, radius=4)
            got, got_d2 = closest_lattice_point(r, nu)
            assert got_d2 == pytest.approx(d2, rel=1e-9, abs=1e-12)
            bab = babai_nearest_plane(r, nu)
            db = float((bab - nu) @ m.entries @ (bab - nu))
            assert db >= got_d2 - 1e-12  # never beats the closest point
            if db > got_d2 + 1e-9:
                mismatches += 1
        assert mismatches > 0

    def test_dimension_mismatch(self):
        r = lll_reduce(SpdForm(np.eye(2)))
        with pytest.raises(DimensionMismatch):
            babai_nearest_plane(r, [0.1, 0.2, 0.3])


class TestClosestPoint:
    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
    def test_diagonal_is_rounding(self, nu):
        r = lll_reduce(SpdForm(np.diag([1.0, 4.0, 0.25])))
        got, _ = closest_lattice_point(r, nu)
        want = np.floor(np.asarray(nu) + 0.5)
        d_got = float((got - np.asarray(nu)) @ r.original.entries @ (got - np.asarray(nu)))
        d_want = float((want - np.asarray(nu)) @ r.original.entries @ (want - np.asarray(nu)))
        assert d_got == pytest.approx(d_want, rel=1e-12, abs=1e-12)

    def test_hexagonal_midpoint(self):
        m = SpdForm([[2.0, 1.0], [1.0, 2.0]])
        r = lll_reduce(m)
        nu = np.array([0.5, 0.0])
        _, d2 = closest_lattice_point(r, nu)
        _, want, _ = box_closest(m.entries, nu, radius=3)
        assert d2 == pytest.approx(want, rel=1e-12)

    def test_seeded_p8_against_box_oracle(self):
        m = gnss_like_form(8, seed=12)
        r = lll_reduce(m)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(77)))
        checked = 0
        for _ in range(1000):
            nu = rng.uniform(-2.0, 2.0, size=8)
            oracle, d2, interior = box_closest(m.entries, nu, radius=2)
            if not interior:
                continue
            got, got_d2 = closest_lattice_point(r, nu)
            assert got_d2 == pytest.approx(d2, rel=1e-9)
            assert np.array_equal(got, oracle)
            checked += 1
        assert checked > 900

    def test_radius_sequence_strictly_decreasing(self):
        m = gnss_like_form(6, seed=3)
        r = lll_reduce(m)
        nup = r.to_reduced_coords(np.full(6, 0.37))
        radii = np.zeros(64)
        _, _, _, nrad, status = _search.closest_kernel(r.search_factor, nup,
                                                       False, 10**7, radii)
        assert status == 0
        seq = radii[:min(nrad, 64)]
        assert np.all(np.diff(seq) < 0) or len(seq) == 1


class TestEnumerate:
    def test_unit_ball_z2(self):
        r = lll_reduce(SpdForm(np.eye(2)))
        pts = enumerate_within_radius(r, [0.0, 0.0], 1.0)
        got = {tuple(p) for p, _ in pts}
        assert got == {(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)}

    def test_small_radius_only_origin(self):
        r = lll_reduce(SpdForm(np.eye(2)))
        pts = enumerate_within_radius(r, [0.0, 0.0], 0.5)
        assert [tuple(p) for p, _ in pts] == [(0, 0)]

    def test_hexagonal_seven_points(self):
        r = lll_reduce(SpdForm([[2.0, 1.0], [1.0, 2.0]]))
        pts = enumerate_within_radius(r, [0.0, 0.0], np.sqrt(2.0 + 1e-9))
        assert len(pts) == 7

    def test_sorted_ascending(self):
        r = lll_reduce(random_spd(3, seed=8))
        pts = enumerate_within_radius(r, [0.2, -0.4, 0.1], 3.0)
        d = [x for _, x in pts]
        assert d == sorted(d)

    def test_capacity_exceeded(self):
        r = lll_reduce(SpdForm(np.eye(2)))
        with pytest.raises(CapacityExceeded):
            enumerate_within_radius(r, [0.0, 0.0], 50.0, cap=10)


def theta_masses_1d(a2: float, nu: float, span: int = 30):
    n = np.arange(-span, span + 1)
    w = np.exp(-0.5 * a2 * (n - nu) ** 2)
    return n, w / w.sum()


class TestTruncatedPosterior:
    def test_on_lattice_point_mass_near_one(self):
        m = AmbiguityModel(SpdForm(np.diag([25.0, 36.0])))
        post = truncated_posterior(m, [1.0, -2.0], c=50.0)
        assert post[0][1] == pytest.approx(1.0, abs=1e-6)
        assert np.array_equal(post[0][0], [1, -2])

    def test_one_dim_symmetry_and_oracle(self):
        m = AmbiguityModel(SpdForm([[4.0]]))
        post = truncated_posterior(m, [0.5])
        assert abs(post[0][1] - post[1][1]) < 1e-9
        n, w = theta_masses_1d(4.0, 0.5)
        assert post[0][1] == pytest.approx(w[n == 0][0], rel=1e-9)

    def test_truncation_insensitive(self):
        m = AmbiguityModel(gnss_like_form(4, seed=21))
        nu = [0.3, -0.2, 0.45, 0.1]
        p30 = truncated_posterior(m, nu, c=30.0)
        p60 = truncated_posterior(m, nu, c=60.0)
        assert p30[0][1] == pytest.approx(p60[0][1], abs=1e-9)

    def test_masses_sum_to_one(self):
        m = AmbiguityModel(gnss_like_form(3, seed=2))
        post = truncated_posterior(m, [0.4, 0.4, -0.3])
        assert sum(w for _, w in post) == pytest.approx(1.0, abs=1e-12)
        assert all(w >= 0 for _, w in post)


def marginal_oracle(m: np.ndarray, n0_dir: np.ndarray, nu: np.ndarray,
                    box: int = 2, n0_span: int = 10):
    """Exhaustive marginal posterior over classes, summing the common increment."""
    p = m.shape[0]
    reps = int_box(p, box)
    masses = {}
    for rep in reps:
        total = 0.0
        for t in range(-n0_span, n0_span + 1):
            v = rep + t * n0_dir
            diff = v - nu
            total += np.exp(-0.5 * float(diff @ m @ diff))
        key = tuple(int(x) for x in rep)
        masses[key] = total
    return masses


class TestMapDecision:
    def test_separable_equals_closest(self):
        form = gnss_like_form(4, seed=31)
        model = AmbiguityModel(form)
        r = lll_reduce(form)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(1)))
        for _ in range(50):
            nu = rng.uniform(-1.0, 1.0, size=4)
            out = map_decision(model, nu)
            closest, _ = closest_lattice_point(r, nu)
            assert np.array_equal(out.chosen, closest)
            assert out.chosen is not None

    def test_nonseparable_matches_exhaustive_marginal(self):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(4)))
        a = rng.standard_normal((4, 6))
        m = SpdForm(2.0 * (a @ a.T + 0.3 * np.eye(4)))
        n0 = np.array([[1, 1, 1, 1]])
        model = AmbiguityModel(m, p0=1, n0_basis=n0,
                               separability=Separability.NONSEPARABLE)
        for trial in range(20):
            nu = rng.uniform(-1.0, 1.0, size=4)
            out = map_decision(model, nu)
            oracle = marginal_oracle(m.entries, n0[0], nu)
            best_key = max(oracle, key=lambda k: oracle[k])
            got = canonical_representative(model, out.chosen)
            want = canonical_representative(model, np.array(best_key))
            assert np.array_equal(got, want), (trial, out.chosen, best_key)

    def test_midpoint_confidence_half(self):
        model = AmbiguityModel(SpdForm(np.diag([36.0, 36.0])))
        out = map_decision(model, [0.5, 0.0])
        assert out.confidence == pytest.approx(0.5, abs=1e-6)

    def test_never_rejects(self):
        model = AmbiguityModel(SpdForm(np.diag([0.09, 0.09])))
        out = map_decision(model, [0.49, 0.51])
        assert out.chosen is not None


class TestConditionalDecision:
    def test_zero_threshold_equals_map(self):
        model = AmbiguityModel(gnss_like_form(3, seed=9))
        nu = [0.2, 0.4, -0.1]
        a = conditional_decision(model, nu, 0.0)
        b = map_decision(model, nu)
        assert np.array_equal(a.chosen, b.chosen)
        assert a.confidence == b.confidence

    def test_impossible_threshold_rejects_at_midpoint(self):
        model = AmbiguityModel(SpdForm([[25.0]]))
        out = conditional_decision(model, [0.5], 1.0 - 1e-300)
        assert out.chosen is None
        assert out.confidence == pytest.approx(0.5, abs=1e-5)

    def test_accept_flag_matches_posterior(self):
        model = AmbiguityModel(gnss_like_form(4, seed=13))
        dec_h = 0.9
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(3)))
        from ambres.decoder import _decoder_for
        h0 = _decoder_for(model).h0()
        for _ in range(50):
            nu = rng.uniform(-0.6, 0.6, size=4)
            out = conditional_decision(model, nu, dec_h)
            post = truncated_posterior(model, nu)
            conf = min(1.0, post[0][1] / h0)
            assert (out.chosen is not None) == (conf >= dec_h)

    def test_outcome_respects_threshold_invariant(self):
        model = AmbiguityModel(gnss_like_form(3, seed=5))
        out = conditional_decision(model, [0.1, 0.1, 0.1], 0.7)
        if out.chosen is not None:
            assert out.confidence >= 0.7


class TestInvariants:
    def test_exhaustive_equivalence_small_dims(self):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(10)))
        for p in (2, 3, 4):
            m = random_spd(p, seed=50 + p, scale=4.0)
            r = lll_reduce(m)
            for _ in range(200):
                nu = rng.uniform(-2, 2, size=p)
                oracle, d2, interior = box_closest(m.entries, nu, radius=3)
                if not interior:
                    continue
                got, got_d2 = closest_lattice_point(r, nu)
                assert np.array_equal(got, oracle)

    def test_unimodular_argmax_invariance(self):
        form = gnss_like_form(3, seed=17)
        model = AmbiguityModel(form)
        z = np.array([[1, 0, 1], [0, 1, -1], [0, 0, 1]], dtype=np.int64)
        zi = np.linalg.inv(z).astype(np.int64)
        m2 = SpdForm(zi.T.astype(float) @ form.entries @ zi.astype(float))
        model2 = AmbiguityModel(m2)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(2)))
        for _ in range(30):
            nu = rng.uniform(-1, 1, size=3)
            a = map_decision(model, nu).chosen
            b = map_decision(model2, z.astype(float) @ nu).chosen
            assert np.array_equal(z @ a, b)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_babai_never_beats_closest(self, seed):
        m = random_spd(3, seed=seed % 1000, scale=2.0)
        r = lll_reduce(m)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        nu = rng.uniform(-2, 2, size=3)
        bab = babai_nearest_plane(r, nu)
        _, d2 = closest_lattice_point(r, nu)
        db = float((bab - nu) @ m.entries @ (bab - nu))
        assert db >= d2 - 1e-12

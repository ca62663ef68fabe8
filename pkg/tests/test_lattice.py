import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ambres.errors import (
    DimensionMismatch,
    NotPositiveDefinite,
    UnimodularOverflow,
    ValidationError,
)
from ambres.lattice import (
    CholeskyFactor,
    SpdForm,
    UnimodularTransform,
    cholesky,
    complexity_estimate,
    lll_reduce,
    quadratic_form,
    read_matrix,
    search_factor,
    write_matrix,
)
from conftest import random_spd


class TestSpdForm:
    def test_symmetrizes_and_records_residual(self):
        m = SpdForm([[1.0, 0.5 + 1e-12], [0.5, 1.0]])
        assert m.entries[0, 1] == m.entries[1, 0]
        assert m.sym_residual < 1e-11

    def test_rejects_asymmetric(self):
        with pytest.raises(ValidationError):
            SpdForm([[1.0, 0.2], [0.1, 1.0]])

    def test_rejects_nonsquare(self):
        with pytest.raises(DimensionMismatch):
            SpdForm(np.ones((2, 3)))


class TestCholesky:
    def test_identity(self):
        f = cholesky(SpdForm(np.eye(3)))
        assert np.allclose(f.entries, np.eye(3))

    def test_diagonal_square_roots(self):
        f = cholesky(SpdForm(np.diag([4.0, 9.0])))
        assert np.allclose(f.entries, np.diag([2.0, 3.0]))

    def test_reconstruction_oracle_p8(self):
        m = random_spd(8, seed=42)
        f = cholesky(m)
        resid = np.max(np.abs(f.entries @ f.entries.T - m.entries))
        assert resid / np.max(np.abs(m.entries)) < 1e-10

    def test_singular_rejected(self):
        bad = np.ones((3, 3))
        with pytest.raises(NotPositiveDefinite):
            cholesky(SpdForm(bad))

    def test_near_singular_pivot_rejected(self):
        m = np.diag([1.0, 1e-14])
        with pytest.raises(NotPositiveDefinite):
            cholesky(SpdForm(m))

    def test_factor_requires_positive_diagonal(self):
        with pytest.raises(NotPositiveDefinite):
            CholeskyFactor([[1.0, 0.0], [0.5, -2.0]])


class TestSearchFactor:
    def test_prefix_property(self):
        m = random_spd(5, seed=7)
        a = search_factor(m)
        assert np.allclose(np.triu(a, 1), 0.0)
        assert np.allclose(a.T @ a, m.entries)


class TestQuadraticForm:
    def test_identity(self):
        assert quadratic_form(SpdForm(np.eye(2)), [3.0, 4.0]) == pytest.approx(25.0)

    def test_zero_vector(self):
        assert quadratic_form(random_spd(4, 1), np.zeros(4)) == 0.0

    def test_diagonal(self):
        assert quadratic_form(SpdForm(np.diag([2.0, 3.0])), [1.0, 1.0]) == pytest.approx(5.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            quadratic_form(SpdForm(np.eye(2)), [1.0, 2.0, 3.0])


def gauss_reduce_2d(m: np.ndarray) -> np.ndarray:
    """Lagrange-Gauss reduction oracle for binary quadratic forms."""
    g = m.astype(float).copy()
    u = np.eye(2, dtype=np.int64)
    for _ in range(100):
        if g[0, 0] > g[1, 1]:
            g = g[::-1, ::-1].copy()
            u = u[:, ::-1].copy()
        r = round(g[0, 1] / g[0, 0])
        if r == 0:
            break
        t = np.array([[1, -r], [0, 1]], dtype=np.int64)
        u = u @ t
        g = t.T.astype(float) @ g @ t.astype(float)
    return g


class TestLllReduce:
    def test_identity_stays_identity(self):
        r = lll_reduce(SpdForm(np.eye(4)))
        assert np.array_equal(r.transform.entries, np.eye(4, dtype=np.int64))

    def test_two_dim_matches_lagrange_gauss(self):
        m = SpdForm([[1.0, 0.99], [0.99, 1.0]])
        r = lll_reduce(m)
        oracle = gauss_reduce_2d(m.entries)
        got = sorted([r.reduced.entries[0, 0], r.reduced.entries[1, 1]])
        want = sorted([oracle[0, 0], oracle[1, 1]])
        assert np.allclose(got, want, rtol=1e-12)
        assert abs(r.reduced.entries[0, 1]) == pytest.approx(abs(oracle[0, 1]), rel=1e-9)

    def test_complexity_never_worse(self):
        for seed in range(6):
            m = random_spd(6, seed=seed, spread=2.0)
            r = lll_reduce(m)
            assert complexity_estimate(r) <= complexity_estimate(m) * (1 + 1e-12)

    def test_round_trip_invariant(self):
        m = random_spd(6, seed=3, spread=2.0)
        r = lll_reduce(m)
        z = r.transform.entries.astype(float)
        resid = np.max(np.abs(z.T @ r.reduced.entries @ z - m.entries))
        assert resid / np.max(np.abs(m.entries)) < 1e-9

    def test_determinant_exact(self):
        for seed in range(4):
            r = lll_reduce(random_spd(5, seed=seed, spread=2.0))
            assert r.transform.determinant in (1, -1)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6),
           st.lists(st.integers(-4, 4), min_size=3, max_size=3))
    def test_quadratic_form_invariance(self, seed, vec):
        m = random_spd(3, seed=seed)
        r = lll_reduce(m)
        x = np.array(vec, dtype=float)
        zx = r.transform.entries.astype(float) @ x
        lhs = float(zx @ r.reduced.entries @ zx)
        rhs = quadratic_form(m, x)
        assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)

    def test_block_boundary_structure(self):
        m = random_spd(6, seed=9, spread=2.0)
        r = lll_reduce(m, block_boundary=4)
        z = r.transform.entries
        assert np.all(z[:4, 4:] == 0)

    def test_delta_validation(self):
        with pytest.raises(ValidationError):
            lll_reduce(SpdForm(np.eye(2)), delta=0.2)

    def test_lower_delta_accepted(self):
        r = lll_reduce(random_spd(4, seed=5), delta=0.75)
        assert r.transform.determinant in (1, -1)


class TestUnimodularTransform:
    def test_determinant_validation(self):
        with pytest.raises(ValidationError):
            UnimodularTransform([[2, 0], [0, 1]])

    def test_overflow_detection(self):
        with pytest.raises(UnimodularOverflow):
            UnimodularTransform([[2**63, 0], [0, 1]])

    def test_inverse_exact(self):
        z = UnimodularTransform([[2, 1], [1, 1]])
        assert np.array_equal(z.entries @ z.inverse, np.eye(2, dtype=np.int64))


class TestMatrixIO:
    def test_round_trip(self, tmp_path):
        m = random_spd(4, seed=2)
        path = tmp_path / "m.txt"
        write_matrix(m, path)
        back = read_matrix(path)
        assert np.array_equal(back, m.entries)

    def test_bad_file(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("3\n1 2\n")
        with pytest.raises(ValidationError):
            read_matrix(path)

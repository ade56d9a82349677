import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hybridbf.linalg import frobenius_norm, pca_project, phase_extract, pinv, svd
from conftest import crandn

# singular values of the seeded 4x4 below, from the Faddeev-LeVerrier
# characteristic polynomial of a^H a (independent of any SVD routine)
FROZEN_S = [3.95162806914917, 2.947698827375026, 1.573034871056136, 1.300336096107736]


def _charpoly_singular_values(a):
    g = a.conj().T @ a
    n = g.shape[0]
    m = np.zeros_like(g)
    coeffs = [1.0 + 0j]
    for k in range(1, n + 1):
        m = g @ m + coeffs[-1] * np.eye(n)
        coeffs.append(-np.trace(g @ m) / k)
    return np.sort(np.sqrt(np.abs(np.roots(coeffs).real)))[::-1]


def test_svd_identity():
    np.testing.assert_allclose(svd(np.eye(2)).s, [1, 1])


def test_svd_diagonal_rank_one():
    res = svd(np.diag([3.0, 0.0]))
    np.testing.assert_allclose(res.s, [3, 0], atol=1e-15)
    assert abs(abs(res.u[0, 0]) - 1) < 1e-15
    assert abs(res.v[0, 0] - 1) < 1e-15


def test_svd_eigen_oracle():
    rng = np.random.default_rng(20240501)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    oracle = _charpoly_singular_values(a)
    np.testing.assert_allclose(oracle, FROZEN_S, atol=1e-8)
    np.testing.assert_allclose(svd(a).s, FROZEN_S, atol=1e-8)


def test_svd_phase_convention_is_reproducible(rng):
    a = crandn(rng, 6, 3)
    r1, r2 = svd(a), svd(a * 1.0)
    assert np.array_equal(r1.v, r2.v)
    idx = np.argmax(np.abs(r1.v), axis=0)
    pivots = r1.v[idx, np.arange(3)]
    assert np.all(pivots.imag == 0) and np.all(pivots.real > 0)


def test_svd_rejects_nonfinite():
    with pytest.raises(ValueError):
        svd(np.array([[np.nan, 1.0]]))


shapes = st.tuples(st.integers(1, 6), st.integers(1, 6))
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@st.composite
def complex_matrices(draw):
    shape = draw(shapes)
    re = draw(arrays(np.float64, shape, elements=finite))
    im = draw(arrays(np.float64, shape, elements=finite))
    return re + 1j * im


@settings(max_examples=150, deadline=None)
@given(complex_matrices())
def test_svd_invariants(a):
    res = svd(a)
    k = min(a.shape)
    assert res.s.shape == (k,)
    assert np.all(np.diff(res.s) <= 0) and np.all(res.s >= 0)
    assert np.linalg.norm(res.u.conj().T @ res.u - np.eye(k)) < 1e-10
    assert np.linalg.norm(res.v.conj().T @ res.v - np.eye(k)) < 1e-10
    norm = np.linalg.norm(a)
    if norm > 0:
        assert np.linalg.norm(a - res.reconstruct()) / norm < 1e-10


def test_pinv_examples():
    np.testing.assert_allclose(pinv(np.eye(3)), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]), atol=1e-15)


def _moore_penrose_errors(a, ap):
    return (np.abs(a @ ap @ a - a).max(), np.abs(ap @ a @ ap - ap).max(),
            np.abs((a @ ap).conj().T - a @ ap).max(),
            np.abs((ap @ a).conj().T - ap @ a).max())


def test_pinv_moore_penrose_random():
    rng = np.random.default_rng(7)
    a = crandn(rng, 3, 5)
    assert max(_moore_penrose_errors(a, pinv(a))) < 1e-9


@settings(max_examples=100, deadline=None)
@given(complex_matrices())
def test_pinv_properties(a):
    s = np.linalg.svd(a, compute_uv=False)
    kept = s[s > 1e-12 * s[0]] if s[0] > 0 else s[:0]
    # rounding in any pseudo-inverse grows with the condition of the kept part
    assume(kept.size == 0 or (kept[0] / kept[-1] < 1e4 and kept[-1] > 1e-3 * s[0]))
    ap = pinv(a)
    na, nap = max(np.linalg.norm(a), 1e-300), max(np.linalg.norm(ap), 1e-300)
    e1, e2, e3, e4 = _moore_penrose_errors(a, ap)
    assert e1 / na < 1e-9 and e2 / nap < 1e-9 and e3 < 1e-9 and e4 < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_pinv_involution_full_rank(m, n, seed):
    a = crandn(np.random.default_rng(seed), m, n)
    if np.linalg.cond(a) > 1e4:
        return
    np.testing.assert_allclose(pinv(pinv(a)), a, atol=1e-8)


def test_pinv_rank_tol_validation():
    with pytest.raises(ValueError):
        pinv(np.eye(2), rank_tol=0.0)


def test_frobenius_norm_examples():
    assert frobenius_norm(np.zeros((2, 2))) == 0
    assert frobenius_norm(np.eye(3)) == pytest.approx(np.sqrt(3), abs=1e-15)
    assert frobenius_norm(np.array([[3 + 4j]])) == pytest.approx(5.0, abs=1e-15)


def test_phase_extract_examples():
    assert phase_extract(np.array([[2.0]]))[0, 0] == 1
    assert phase_extract(np.array([[0.0]]))[0, 0] == 1 + 0j
    np.testing.assert_allclose(phase_extract(np.array([[1 + 1j]])), [[(1 + 1j) / np.sqrt(2)]])


@settings(max_examples=100, deadline=None)
@given(complex_matrices())
def test_phase_extract_unit_modulus(a):
    a[0, 0] = 0
    out = phase_extract(a)
    assert np.all(np.abs(np.abs(out) - 1) < 1e-15)
    assert out[0, 0] == 1


def test_pca_axis_aligned():
    x = np.column_stack([np.arange(6.0), np.zeros(6)])
    proj, var = pca_project(x, 1)
    total = np.var(x, axis=0, ddof=1).sum()
    assert var[0] == pytest.approx(total)
    assert proj.shape == (6, 1)


def test_pca_identical_points():
    proj, var = pca_project(np.ones((5, 3)), 2)
    assert np.all(proj == 0) and np.all(var == 0)


def test_pca_full_rank_round_trip():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((50, 8))
    proj, var = pca_project(x, 8)
    centered = x - x.mean(axis=0)
    # axes recovered from the projections themselves: solve proj @ V^T = centered
    vt, *_ = np.linalg.lstsq(proj, centered, rcond=None)
    np.testing.assert_allclose(proj @ vt, centered, atol=1e-9)
    np.testing.assert_allclose(vt @ vt.T, np.eye(8), atol=1e-9)
    assert np.all(np.diff(var) <= 0)
    assert var.sum() == pytest.approx(np.var(x, axis=0, ddof=1).sum(), abs=1e-9)


def test_pca_bad_k():
    with pytest.raises(ValueError):
        pca_project(np.zeros((3, 2)), 3)
    with pytest.raises(ValueError):
        pca_project(np.zeros((1, 2)), 1)

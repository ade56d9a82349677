"""Dense complex linear algebra used by every other module.

All routines work in double precision. The SVD is LAPACK's (through numpy)
with a fixed per-column phase convention so results are reproducible.
"""
from dataclasses import dataclass

import numpy as np

from ._validation import check_complex_matrix, check_count, check_real_matrix
from .exceptions import NumericalError


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``a = u @ diag(s) @ v.conj().T`` with k = min(m, n).

    Attributes
    ----------
    u : ndarray, shape (m, k)
    s : ndarray, shape (k,)
        Non-negative, descending.
    v : ndarray, shape (n, k)
        Each column has its largest-modulus entry real and positive.
    """

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self):
        return (self.u * self.s) @ self.v.conj().T


def _canonical_phase(u, v):
    # largest-modulus entry of each v column made real-positive; u follows
    # so that u diag(s) v^H is unchanged
    idx = np.argmax(np.abs(v), axis=0)
    pivot = v[idx, np.arange(v.shape[1])]
    mag = np.abs(pivot)
    rot = np.where(mag > 0, pivot / np.where(mag > 0, mag, 1.0), 1.0)
    cols = np.arange(v.shape[1])
    u, v = u * rot.conj(), v * rot.conj()
    v[idx, cols] = mag  # exactly real, not merely to rounding
    return u, v


def svd(a):
    """Thin singular value decomposition of a complex matrix.

    Parameters
    ----------
    a : array_like, shape (m, n)

    Returns
    -------
    SvdResult

    Raises
    ------
    NumericalError
        If LAPACK fails to converge.
    """
    a = check_complex_matrix(a)
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    u, v = _canonical_phase(u, vh.conj().T)
    return SvdResult(u=u, s=s, v=v)


def pinv(a, rank_tol=None):
    """Moore-Penrose pseudo-inverse.

    Singular values at or below ``rank_tol`` are treated as zero. The default
    tolerance is ``1e-12 * max(s)``.
    """
    a = check_complex_matrix(a)
    res = svd(a)
    smax = res.s[0] if res.s.size else 0.0
    if rank_tol is None:
        rank_tol = 1e-12 * smax
    elif rank_tol <= 0:
        raise ValueError(f"rank_tol must be > 0, got {rank_tol}")
    keep = res.s > rank_tol
    inv_s = np.zeros_like(res.s)
    inv_s[keep] = 1.0 / res.s[keep]
    return (res.v * inv_s) @ res.u.conj().T


def frobenius_norm(a):
    a = np.asarray(a)
    return float(np.linalg.norm(a.reshape(-1)))


def phase_extract(a):
    """Entrywise projection onto the unit circle.

    Zero entries map to ``1 + 0j`` so the output is always unit-modulus.
    """
    a = np.asarray(a, dtype=np.complex128)
    # via the angle, so subnormal entries cannot overflow a division
    out = np.exp(1j * np.angle(a))
    out[a == 0] = 1.0
    return out


def pca_project(x, k):
    """Project rows of ``x`` on the top-``k`` principal axes.

    Parameters
    ----------
    x : array_like, shape (n_samples, d)
    k : int
        Number of components, ``1 <= k <= min(n_samples, d)``.

    Returns
    -------
    projections : ndarray, shape (n_samples, k)
    explained_variance : ndarray, shape (k,)
        Sample-covariance eigenvalues (``ddof=1``), descending.
    """
    x = check_real_matrix(x, "x", min_rows=2)
    n, d = x.shape
    k = check_count(k, "k")
    if k > min(n, d):
        raise ValueError(f"k must be <= min(n_samples, d) = {min(n, d)}, got {k}")
    centered = x - x.mean(axis=0)
    u, s, vt = np.linalg.svd(centered, full_matrices=False)
    # deterministic sign: largest-magnitude loading positive
    signs = np.sign(vt[np.arange(vt.shape[0]), np.argmax(np.abs(vt), axis=1)])
    signs[signs == 0] = 1.0
    vt = vt * signs[:, None]
    proj = centered @ vt[:k].T
    var = s[:k] ** 2 / (n - 1)
    return proj, var

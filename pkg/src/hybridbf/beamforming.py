"""Fully digital SVD precoding, PE-AltMin hybrid factorization and rate evaluation."""
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import (check_complex_batch, check_complex_matrix, check_count,
                          check_positive)
from .exceptions import DegenerateInputError
from .linalg import frobenius_norm, phase_extract, svd


@dataclass
class PrecoderSet:
    """Hybrid precoder with its fully digital target and the receive combiner."""

    f_opt: np.ndarray
    f_rf: np.ndarray
    f_bb: np.ndarray
    w: np.ndarray

    @property
    def dims(self):
        n_t, n_rf = self.f_rf.shape
        return n_t, self.w.shape[0], n_rf, self.f_bb.shape[1]

    @property
    def hybrid(self):
        return self.f_rf @ self.f_bb

    def check_constraints(self, modulus_tol=1e-12, power_tol=1e-9):
        """Raise ``AssertionError`` unless the unit-modulus and power constraints hold."""
        n_t, _, n_rf, n_s = self.dims
        if not n_s <= n_rf <= n_t:
            raise AssertionError(f"need N_s <= N_RF <= N_t, got {n_s}, {n_rf}, {n_t}")
        mod_err = np.max(np.abs(np.abs(self.f_rf) - 1.0))
        if mod_err >= modulus_tol:
            raise AssertionError(f"|F_RF| deviates from 1 by {mod_err:.3e}")
        pow_err = abs(frobenius_norm(self.hybrid) ** 2 - n_s)
        if pow_err >= power_tol:
            raise AssertionError(f"||F_RF F_BB||_F^2 off N_s by {pow_err:.3e}")


@dataclass
class AltMinTrace:
    residuals: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False


def optimal_precoder(h, n_s):
    """SVD precoder and combiner of channel ``h`` (shape ``(N_r, N_t)``).

    Returns
    -------
    f_opt : ndarray, shape (N_t, n_s)
        Leading right singular vectors.
    w : ndarray, shape (N_r, n_s)
        Leading left singular vectors.
    s : ndarray, shape (n_s,)
    """
    h = check_complex_matrix(h, "h")
    n_s = check_count(n_s, "n_s")
    if n_s > min(h.shape):
        raise ValueError(f"n_s={n_s} exceeds min(N_r, N_t)={min(h.shape)}")
    res = svd(h)
    return res.v[:, :n_s], res.u[:, :n_s], res.s[:n_s]


def _baseband_step(f_opt, f_rf):
    # best F_BB of the form alpha * Q, Q^H Q = I: Q from the polar factor of
    # F_RF^H F_opt, alpha the least-squares magnitude
    u, _, vh = np.linalg.svd(f_rf.conj().T @ f_opt, full_matrices=False)
    q = u @ vh
    fq = f_rf @ q
    denom = np.vdot(fq, fq).real
    alpha = np.vdot(fq, f_opt).real / denom if denom > 0 else 0.0
    return alpha * q


def pe_altmin(f_opt, n_rf, tol=1e-6, max_iter=200, seed=None):
    """Phase-extraction alternating minimisation for ``F_opt ~ F_RF F_BB``.

    Alternates ``F_RF <- phase(F_opt F_BB^H)`` with a semi-unitary
    Procrustes update of ``F_BB``, starting from random analog phases. An
    iteration whose residual does not improve by at least ``tol`` ends the
    run, and a worsening step is discarded, so the recorded residuals never
    increase.

    Parameters
    ----------
    f_opt : array_like, shape (N_t, N_s)
    n_rf : int
        RF chains, ``N_s <= n_rf <= N_t``.
    tol : float
        Absolute improvement threshold on the Frobenius residual.
    max_iter : int
    seed : int or numpy Generator, optional
        Source of the initial phases.

    Returns
    -------
    f_rf : ndarray, shape (N_t, n_rf)
    f_bb : ndarray, shape (n_rf, N_s)
        Not power normalised; see :func:`normalize_power`.
    trace : AltMinTrace
    """
    f_opt = check_complex_matrix(f_opt, "f_opt")
    n_t, n_s = f_opt.shape
    n_rf = check_count(n_rf, "n_rf")
    if not n_s <= n_rf <= n_t:
        raise ValueError(f"need N_s <= n_rf <= N_t, got {n_s}, {n_rf}, {n_t}")
    tol = check_positive(tol, "tol")
    max_iter = check_count(max_iter, "max_iter")
    rng = np.random.default_rng(seed)

    f_rf = np.exp(2j * np.pi * rng.random((n_t, n_rf)))
    f_bb = _baseband_step(f_opt, f_rf)
    trace = AltMinTrace(residuals=[frobenius_norm(f_opt - f_rf @ f_bb)])
    for _ in range(max_iter):
        rf_new = phase_extract(f_opt @ f_bb.conj().T)
        bb_new = _baseband_step(f_opt, rf_new)
        resid = frobenius_norm(f_opt - rf_new @ bb_new)
        trace.iterations += 1
        improvement = trace.residuals[-1] - resid
        if improvement >= 0:
            f_rf, f_bb = rf_new, bb_new
            trace.residuals.append(resid)
        if improvement < tol:
            trace.converged = True
            break
    return f_rf, f_bb, trace


def normalize_power(f_rf, f_bb, n_s):
    """Scale ``f_bb`` so that ``||F_RF F_BB||_F^2 == n_s``."""
    f_rf = np.asarray(f_rf, dtype=np.complex128)
    f_bb = np.asarray(f_bb, dtype=np.complex128)
    norm = frobenius_norm(f_rf @ f_bb)
    if not norm > 0:
        raise DegenerateInputError("F_RF F_BB is zero; cannot normalise power")
    out = np.sqrt(n_s) * f_bb / norm
    # one refinement step absorbs the rounding of the first division
    return out * (np.sqrt(n_s) / frobenius_norm(f_rf @ out))


def spectral_efficiency(h, v_t, w_t, snr_linear, n_s=None):
    """Achievable rate in bit/s/Hz for precoder ``v_t`` and combiner ``w_t``.

    ``log2 det(I + snr / N_s * W^H H V V^H H^H W)``, evaluated through the
    eigenvalues of the Hermitian part. The expression assumes ``w_t`` has
    orthonormal columns (no noise-whitening term).
    """
    h = check_complex_matrix(h, "h")
    v_t = check_complex_matrix(v_t, "v_t")
    w_t = check_complex_matrix(w_t, "w_t")
    n_r, n_t = h.shape
    if v_t.shape[0] != n_t or w_t.shape[0] != n_r:
        raise ValueError(
            f"dimension mismatch: h {h.shape}, v_t {v_t.shape}, w_t {w_t.shape}")
    if n_s is None:
        n_s = v_t.shape[1]
    if v_t.shape[1] != n_s or w_t.shape[1] != n_s:
        raise ValueError(f"v_t and w_t must have n_s={n_s} columns")
    if snr_linear < 0:
        raise ValueError("snr_linear must be >= 0")
    g = w_t.conj().T @ h @ v_t
    m = g @ g.conj().T
    m = 0.5 * (m + m.conj().T)
    eig = np.clip(np.linalg.eigvalsh(m), 0.0, None)
    return float(np.sum(np.log2(1.0 + snr_linear / n_s * eig)))


class PEAltMinPrecoder(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`pe_altmin`.

    ``transform`` maps a batch of fully digital precoders to power-normalised
    hybrid precoders ``F_RF F_BB``. The estimator is stateless; ``fit`` only
    validates shapes.

    Parameters
    ----------
    n_rf : int, default=4
    tol : float, default=1e-6
    max_iter : int, default=200
    random_state : int, default=0
        Sample ``i`` of a batch is initialised with seed ``(random_state, i)``.
    """

    def __init__(self, n_rf=4, tol=1e-6, max_iter=200, random_state=0):
        self.n_rf = n_rf
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_complex_batch(X)
        self.n_features_in_ = X.shape[1] * X.shape[2]
        self.shape_in_ = X.shape[1:]
        return self

    def decompose(self, X):
        """Return one :class:`PrecoderSet` (with ``w`` left empty) and trace per sample."""
        X = check_complex_batch(X)
        out = []
        for i, f in enumerate(X):
            rng = np.random.default_rng([int(self.random_state), i])
            f_rf, f_bb, trace = pe_altmin(f, self.n_rf, self.tol, self.max_iter, rng)
            f_bb = normalize_power(f_rf, f_bb, f.shape[1])
            out.append((PrecoderSet(f_opt=f, f_rf=f_rf, f_bb=f_bb,
                                    w=np.zeros((0, f.shape[1]), complex)), trace))
        return out

    def transform(self, X):
        return np.stack([p.hybrid for p, _ in self.decompose(X)])

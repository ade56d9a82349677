"""Imperfect-CSI modelling and positive-pair dataset assembly.

CSI SNR is defined per entry: the injected noise variance is the mean entry
power of the clean precoder divided by ``10**(snr_db/10)``. ``math.inf``
means perfect CSI and returns the input unchanged.
"""
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_complex_batch, check_complex_matrix
from .exceptions import FileFormatError

CSI_FILE_MAGIC = "HBF-CSI"
CSI_FILE_VERSION = 1
INF_SNR = math.inf


@dataclass
class CsiSample:
    clean: np.ndarray
    view_a: np.ndarray
    view_b: np.ndarray
    csi_snr_db: float
    source_seed: int
    fingerprint: str = ""


@dataclass
class ContrastiveDataset:
    samples: list
    split: str = "train"

    def __post_init__(self):
        if not self.samples:
            raise ValueError("dataset must contain at least one sample")
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be 'train' or 'test', got {self.split!r}")

    def __len__(self):
        return len(self.samples)

    @property
    def fingerprints(self):
        return {s.fingerprint for s in self.samples}

    def clean(self):
        return np.stack([s.clean for s in self.samples])

    def views(self):
        return (np.stack([s.view_a for s in self.samples]),
                np.stack([s.view_b for s in self.samples]))


def check_disjoint(train, test):
    """Raise ``ValueError`` if any channel fingerprint appears in both splits."""
    shared = train.fingerprints & test.fingerprints - {""}
    if shared:
        raise ValueError(f"{len(shared)} channel(s) shared between train and test, "
                         f"e.g. {sorted(shared)[0]}")


def noise_variance(f_opt, csi_snr_db):
    f_opt = np.asarray(f_opt)
    p_sig = np.vdot(f_opt, f_opt).real / f_opt.size
    return p_sig / 10 ** (csi_snr_db / 10)


def inject_csi_noise(f_opt, csi_snr_db, seed=None):
    """Return ``f_opt + N`` with i.i.d. circular complex Gaussian ``N``.

    Parameters
    ----------
    f_opt : array_like, shape (N_t, N_s)
    csi_snr_db : float
        Per-entry SNR in dB, or ``math.inf`` for no noise.
    seed : int, sequence of int or numpy Generator
    """
    f_opt = check_complex_matrix(f_opt, "f_opt")
    if math.isinf(csi_snr_db) and csi_snr_db > 0:
        return f_opt.copy()
    if math.isnan(csi_snr_db) or math.isinf(csi_snr_db):
        raise ValueError(f"csi_snr_db must be finite or +inf, got {csi_snr_db}")
    rng = np.random.default_rng(seed)
    sigma = math.sqrt(noise_variance(f_opt, csi_snr_db) / 2)
    noise = rng.standard_normal(f_opt.shape) + 1j * rng.standard_normal(f_opt.shape)
    return f_opt + sigma * noise


def make_pairs(f_opt_batch, csi_snr_db, seed=None, fingerprints=None):
    """Two independent noisy views of every clean precoder in the batch.

    Sample ``i`` draws its views from ``default_rng([seed, i])`` so the result
    does not depend on how the batch is split up.
    """
    batch = check_complex_batch(f_opt_batch, "f_opt_batch")
    seed = 0 if seed is None else int(seed)
    out = []
    for i, f in enumerate(batch):
        rng = np.random.default_rng([seed, i])
        out.append(CsiSample(
            clean=f,
            view_a=inject_csi_noise(f, csi_snr_db, rng),
            view_b=inject_csi_noise(f, csi_snr_db, rng),
            csi_snr_db=float(csi_snr_db),
            source_seed=seed,
            fingerprint="" if fingerprints is None else fingerprints[i]))
    return out


class CsiNoise(TransformerMixin, BaseEstimator):
    """Corrupt precoders with AWGN at a fixed per-entry CSI SNR.

    Parameters
    ----------
    csi_snr_db : float, default=20.0
    random_state : int, default=0
    """

    def __init__(self, csi_snr_db=20.0, random_state=0):
        self.csi_snr_db = csi_snr_db
        self.random_state = random_state

    def fit(self, X, y=None):
        check_complex_batch(X)
        return self

    def transform(self, X):
        X = check_complex_batch(X)
        return np.stack([inject_csi_noise(f, self.csi_snr_db,
                                          [int(self.random_state), i])
                         for i, f in enumerate(X)])


def _fmt_matrix(m):
    flat = np.column_stack([m.real.ravel(), m.imag.ravel()]).ravel()
    return [format(v, ".17g") for v in flat]


def _fmt_snr(snr):
    return "inf" if math.isinf(snr) else format(snr, ".17g")


def export_dataset(dataset, path):
    """Write a :class:`ContrastiveDataset` as line-oriented text.

    Header ``HBF-CSI <version> <N_t> <N_s> <csi_snr_db> <count> <split>``;
    each record is ``<seed> <fingerprint>`` followed by clean, view_a and
    view_b entries (re, im pairs, row-major).
    """
    n_t, n_s = dataset.samples[0].clean.shape
    snr = dataset.samples[0].csi_snr_db
    lines = [f"{CSI_FILE_MAGIC} {CSI_FILE_VERSION} {n_t} {n_s} {_fmt_snr(snr)} "
             f"{len(dataset)} {dataset.split}"]
    for s in dataset.samples:
        lines.append(" ".join([str(int(s.source_seed)), s.fingerprint or "-"]
                              + _fmt_matrix(s.clean) + _fmt_matrix(s.view_a)
                              + _fmt_matrix(s.view_b)))
    Path(path).write_text("\n".join(lines) + "\n")


def import_dataset(path):
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise FileFormatError(f"{path} is empty")
    head = lines[0].split()
    if len(head) != 7 or head[0] != CSI_FILE_MAGIC:
        raise FileFormatError(f"missing or malformed {CSI_FILE_MAGIC} header")
    try:
        version, n_t, n_s, count = int(head[1]), int(head[2]), int(head[3]), int(head[5])
        snr, split = float(head[4]), head[6]
    except ValueError as exc:
        raise FileFormatError(f"bad header: {exc}") from None
    if version != CSI_FILE_VERSION:
        raise FileFormatError(f"unsupported version {version}")
    if n_t < 1 or n_s < 1 or count < 1:
        raise FileFormatError("header dimensions and count must be positive")
    body = lines[1:]
    if len(body) != count:
        raise FileFormatError(f"header declares {count} records, found {len(body)}")
    per = 2 * n_t * n_s
    samples = []
    for i, line in enumerate(body):
        fields = line.split()
        if len(fields) != 2 + 3 * per:
            raise FileFormatError(f"expected {2 + 3 * per} fields, got {len(fields)}",
                                  record=i)
        try:
            vals = np.array([float(v) for v in fields[2:]])
            seed = int(fields[0])
        except ValueError as exc:
            raise FileFormatError(str(exc), record=i) from None
        if not np.all(np.isfinite(vals)):
            raise FileFormatError("non-finite entry", record=i)
        mats = [(c[0::2] + 1j * c[1::2]).reshape(n_t, n_s)
                for c in np.split(vals, 3)]
        samples.append(CsiSample(clean=mats[0], view_a=mats[1], view_b=mats[2],
                                 csi_snr_db=snr, source_seed=seed,
                                 fingerprint="" if fields[1] == "-" else fields[1]))
    return ContrastiveDataset(samples=samples, split=split)

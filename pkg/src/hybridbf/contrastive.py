"""Self-supervised contrastive hybrid precoding.

Pipeline
--------
1. Phase and magnitude of a (noisy) fully digital precoder are encoded by two
   dense branches, concatenated and fused into an embedding of size ``d_e``.
2. Pre-training: a projection head maps embeddings to unit vectors of size
   ``d_p`` and the NT-Xent loss pulls the two noisy views of one precoder
   together while pushing other precoders in the batch away.
3. Fine-tuning: a prediction head maps embeddings to the magnitude and phase
   of ``F_BB``. The analog precoder is recovered as
   ``F_RF = F_opt pinv(F_BB)`` (optionally projected to unit modulus) and the
   loss is ``||F_opt - F_RF F_BB||_F`` with the clean ``F_opt``.
"""
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from . import neural
from ._validation import check_complex_batch, check_count, check_is_fitted, check_positive
from .beamforming import PrecoderSet, normalize_power
from .csi import ContrastiveDataset, inject_csi_noise, make_pairs
from .exceptions import FileFormatError, NumericalError, RankDeficientError
from .linalg import phase_extract, pinv

logger = logging.getLogger(__name__)

SUBNETS = ("phase", "magnitude", "fusion", "projection", "prediction")
ENCODER = ("phase", "magnitude", "fusion")


@dataclass
class ContrastiveNet:
    """Specs and parameters of the full two-stage network."""

    n_t: int
    n_s: int
    n_rf: int
    specs: dict
    params: dict
    arch: dict = field(default_factory=dict)

    @property
    def d_e(self):
        return next(s.fan_out for s in reversed(self.specs["fusion"]) if s.kind == "dense")

    def arrays(self, names=SUBNETS):
        return [a for n in names for a in self.params[n].arrays()]

    def with_arrays(self, arrays, names=SUBNETS):
        params = dict(self.params)
        pos = 0
        for n in names:
            k = len(self.params[n].arrays())
            params[n] = neural.NetworkParams.from_arrays(arrays[pos:pos + k],
                                                         self.params[n].seed)
            pos += k
        return replace(self, params=params)

    def fingerprint(self):
        specs = [s for n in SUBNETS for s in self.specs[n]]
        return neural.spec_fingerprint(specs) + f"-{self.n_t}x{self.n_s}x{self.n_rf}"

    def shapes(self):
        return [a.shape for a in self.arrays()]


def build_network(n_t, n_s, n_rf, d_e=64, d_p=32, branch_sizes=(128, 64),
                  head_sizes=(100, 50), seed=0):
    """Reference dense network for ``N_t x N_s`` inputs and ``N_RF x N_s`` outputs.

    Each branch is ``n_t*n_s -> branch_sizes`` with swish activations, the
    fusion layer maps the concatenated branches to ``d_e``, the projection
    head is ``d_e -> d_e -> d_p`` followed by L2 normalisation and the
    prediction head is ``d_e -> head_sizes -> 2*n_rf*n_s``.
    """
    n_in = n_t * n_s
    branch = neural.mlp([n_in, *branch_sizes], final_activation="swish")
    specs = {
        "phase": branch,
        "magnitude": list(branch),
        "fusion": neural.mlp([2 * branch_sizes[-1], d_e]),
        "projection": neural.mlp([d_e, d_e, d_p]) + [neural.LayerSpec("l2_normalize")],
        "prediction": neural.mlp([d_e, *head_sizes, 2 * n_rf * n_s]),
    }
    ss = np.random.SeedSequence(seed).spawn(len(SUBNETS))
    params = {n: neural.init_params(specs[n], int(s.generate_state(1)[0]))
              for n, s in zip(SUBNETS, ss)}
    arch = dict(n_t=n_t, n_s=n_s, n_rf=n_rf, d_e=d_e, d_p=d_p,
                branch_sizes=tuple(branch_sizes), head_sizes=tuple(head_sizes))
    return ContrastiveNet(n_t, n_s, n_rf, specs, params, arch)


def save_network(path, net, meta=None):
    """Checkpoint ``net``; the architecture is stored so :func:`load_network` can rebuild it."""
    info = {"arch": json.dumps(net.arch, sort_keys=True)}
    info.update(meta or {})
    neural.save_checkpoint(path, net.arrays(), net.fingerprint(), info)


def load_network(path):
    meta = neural.read_checkpoint_meta(path)
    if "arch" not in meta:
        raise FileFormatError("checkpoint lacks architecture metadata")
    arch = json.loads(meta["arch"])
    net = build_network(**arch)
    arrays, meta = neural.load_checkpoint(path, net.shapes(), net.fingerprint())
    return net.with_arrays(arrays), meta


def input_features(f_tilde):
    """Phase and RMS-normalised magnitude of each precoder, flattened row-major."""
    f = check_complex_batch(f_tilde, "f_tilde")
    mag = np.abs(f).reshape(len(f), -1)
    rms = np.sqrt(np.mean(mag ** 2, axis=1, keepdims=True))
    mag = mag / np.where(rms > 0, rms, 1.0)
    return np.angle(f).reshape(len(f), -1), mag


def _check_shape(net, f):
    if f.shape[1:] != (net.n_t, net.n_s):
        raise ValueError(f"network expects {net.n_t}x{net.n_s} precoders, "
                         f"got {f.shape[1]}x{f.shape[2]}")


def _encode(net, f_tilde):
    f = check_complex_batch(f_tilde, "f_tilde")
    _check_shape(net, f)
    ph, mag = input_features(f)
    p = net.params
    hp, cp = neural.forward(net.specs["phase"], p["phase"], ph)
    hm, cm = neural.forward(net.specs["magnitude"], p["magnitude"], mag)
    emb, cf = neural.forward(net.specs["fusion"], p["fusion"],
                             np.concatenate([hp, hm], axis=1))
    return emb, (cp, cm, cf, hp.shape[1])


def _encode_backward(net, caches, g_emb):
    cp, cm, cf, split = caches
    p = net.params
    gf, g_cat = neural.backward(net.specs["fusion"], p["fusion"], cf, g_emb)
    gp, _ = neural.backward(net.specs["phase"], p["phase"], cp, g_cat[:, :split])
    gm, _ = neural.backward(net.specs["magnitude"], p["magnitude"], cm, g_cat[:, split:])
    return {"phase": gp, "magnitude": gm, "fusion": gf}


def encode(net, f_tilde):
    """Embedding(s) of size ``d_e``; a single matrix gives a 1-D result."""
    emb, _ = _encode(net, f_tilde)
    return emb[0] if np.ndim(f_tilde) == 2 else emb


def project(net, embedding):
    """Unit-norm projection head output."""
    out, _ = neural.forward(net.specs["projection"], net.params["projection"], embedding)
    return out


def contrastive_pair_loss(u, v, negatives, tau=0.1):
    """Single-anchor temperature-scaled loss with ``W = {v} + negatives``."""
    u = np.asarray(u, dtype=float)
    cands = np.vstack([np.atleast_2d(v)] + ([np.atleast_2d(negatives)]
                                             if len(negatives) else []))
    logits = cands @ u / tau
    m = logits.max()
    return float(m + np.log(np.sum(np.exp(logits - m))) - logits[0])


def pair_index_for(n_pairs):
    """Row ``i`` (view a of sample i) is paired with row ``n_pairs + i``."""
    idx = np.arange(2 * n_pairs)
    return np.concatenate([idx[n_pairs:], idx[:n_pairs]])


def ntxent_loss(projections, pair_index, tau=0.1):
    """Mean NT-Xent loss over all ``2N`` anchors and its gradient.

    For anchor ``i`` the candidate set is every other row, so it contains
    the positive ``pair_index[i]`` and ``2N - 2`` negatives.

    Returns
    -------
    loss : float
    grad : ndarray, same shape as ``projections``
    """
    z = np.asarray(projections, dtype=np.float64)
    pair_index = np.asarray(pair_index)
    n = z.shape[0]
    if pair_index.shape != (n,) or np.any(pair_index[pair_index] != np.arange(n)) \
            or np.any(pair_index == np.arange(n)):
        raise ValueError("pair_index must be a fixed-point-free involution")
    tau = check_positive(tau, "tau")
    logits = z @ z.T / tau
    np.fill_diagonal(logits, -np.inf)
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    denom = e.sum(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(denom[:, 0])
    pos = logits[np.arange(n), pair_index]
    loss = float(np.mean(lse - pos))
    g_logits = e / denom
    g_logits[np.arange(n), pair_index] -= 1.0
    g_logits /= n
    grad = (g_logits + g_logits.T) @ z / tau
    return loss, grad


def _head_to_fbb(net, out):
    k = net.n_rf * net.n_s
    scale = 1.0 / math.sqrt(net.n_t)
    mag = neural.softplus(out[:, :k]).reshape(-1, net.n_rf, net.n_s) * scale
    phase = out[:, k:].reshape(-1, net.n_rf, net.n_s)
    return mag, phase


def predict_fbb(net, f_tilde):
    """Magnitude (>= 0) and phase of the predicted baseband precoder.

    Magnitudes are ``softplus(.) / sqrt(N_t)``, which matches the entry scale
    of unit-power precoders.
    """
    emb, _ = _encode(net, f_tilde)
    out, _ = neural.forward(net.specs["prediction"], net.params["prediction"], emb)
    mag, phase = _head_to_fbb(net, out)
    if np.ndim(f_tilde) == 2:
        return mag[0], phase[0]
    return mag, phase


def assemble_fbb(magnitude, phase):
    return magnitude * np.exp(1j * phase)


def _batched_pinv(b, rank_tol):
    # full column rank assumed; (B^H B)^-1 B^H
    s = np.linalg.svd(b, compute_uv=False)
    bad = s[:, -1] <= rank_tol * s[:, 0]
    gram = np.conj(np.swapaxes(b, 1, 2)) @ b
    gram_inv = np.linalg.inv(np.where(bad[:, None, None], np.eye(b.shape[2]), gram))
    return gram_inv @ np.conj(np.swapaxes(b, 1, 2)), gram_inv, bad


def selfsup_loss(f_opt, f_bb, project_unit_modulus=True, rank_tol=1e-8, reduce=True,
                 f_rf_source=None):
    """Factorisation loss ``||F_opt - F_RF F_BB||_F`` with ``F_RF`` from the pseudo-inverse.

    Parameters
    ----------
    f_opt : ndarray, shape (B, N_t, N_s) or (N_t, N_s)
        Clean precoders anchoring the loss.
    f_bb : ndarray, shape (B, N_RF, N_s) or (N_RF, N_s)
        Predicted baseband precoders (full column rank).
    project_unit_modulus : bool
        Apply entrywise phase extraction to ``F_opt pinv(F_BB)``. Without it
        ``F_RF F_BB = F_opt`` whenever ``F_BB`` has full column rank, so the
        loss is identically zero.
    rank_tol : float
        Relative singular-value threshold for the rank test.
    reduce : bool
        Return the batch mean (True) or per-sample losses.
    f_rf_source : ndarray, optional
        Matrix multiplied by ``pinv(F_BB)`` to form ``F_RF``; defaults to
        ``f_opt``. Passing the noisy network input reproduces the inference
        path while the residual stays anchored on the clean precoder.

    Returns
    -------
    loss : float or ndarray
    grad : ndarray
        ``dL/dRe(F_BB) + 1j dL/dIm(F_BB)``, same shape as ``f_bb``.

    Raises
    ------
    RankDeficientError
        If any ``F_BB`` is rank deficient.
    """
    single = np.ndim(f_bb) == 2
    f = np.asarray(f_opt, dtype=np.complex128).reshape((-1,) + np.shape(f_opt)[-2:])
    b = np.asarray(f_bb, dtype=np.complex128).reshape((-1,) + np.shape(f_bb)[-2:])
    if b.shape[1] < b.shape[2]:
        raise ValueError("F_BB needs N_RF >= N_s")
    src = f if f_rf_source is None else \
        np.asarray(f_rf_source, dtype=np.complex128).reshape(f.shape)
    p, gram_inv, bad = _batched_pinv(b, rank_tol)
    if np.any(bad):
        raise RankDeficientError(
            f"predicted F_BB is rank deficient for sample(s) {np.flatnonzero(bad).tolist()}")
    a = src @ p
    if project_unit_modulus:
        mag_a = np.abs(a)
        r = phase_extract(a)
    else:
        r = a
    e = f - r @ b
    losses = np.sqrt(np.sum(np.abs(e) ** 2, axis=(1, 2)))
    n = len(b) if reduce else 1
    g_e = e / np.where(losses > 0, losses, 1.0)[:, None, None] / n
    rh = np.conj(np.swapaxes(r, 1, 2))
    g_b = -rh @ g_e
    g_r = -g_e @ np.conj(np.swapaxes(b, 1, 2))
    if project_unit_modulus:
        g_a = (g_r - r * np.real(np.conj(r) * g_r)) / np.where(mag_a > 0, mag_a, np.inf)
    else:
        g_a = g_r
    g_p = np.conj(np.swapaxes(src, 1, 2)) @ g_a
    ph = np.conj(np.swapaxes(p, 1, 2))
    gph = np.conj(np.swapaxes(g_p, 1, 2))
    resid = np.eye(b.shape[1]) - b @ p
    g_b = g_b - ph @ g_p @ ph + resid @ gph @ gram_inv
    loss = float(losses.mean()) if reduce else losses
    if single:
        return (loss if reduce else losses[0]), g_b[0]
    return loss, g_b


def polar_to_head_grad(net, out, g_fbb):
    """Chain ``dL/dF_BB`` back to the raw prediction-head output."""
    k = net.n_rf * net.n_s
    mag, phase = _head_to_fbb(net, out)
    unit = np.exp(1j * phase)
    g_mag = np.real(g_fbb * np.conj(unit))
    g_phase = np.imag(np.conj(mag * unit) * g_fbb)
    sig = 0.5 * (1 + np.tanh(0.5 * out[:, :k]))
    g_out = np.empty_like(out)
    g_out[:, :k] = (g_mag.reshape(len(out), -1) * sig) / math.sqrt(net.n_t)
    g_out[:, k:] = g_phase.reshape(len(out), -1)
    return g_out


@dataclass
class TrainConfig:
    """Hyper-parameters for both training stages."""

    batch_size: int = 32
    epochs: int = 30
    finetune_epochs: int = 30
    temperature: float = 0.1
    csi_snr_db: float = 10.0
    learning_rate: float = 1e-3
    finetune_learning_rate: float = 1e-3
    seed: int = 0
    resample_views: bool = True
    freeze_encoder: bool = True
    project_unit_modulus: bool = True
    rf_from_input: bool = True

    def __post_init__(self):
        check_count(self.batch_size, "batch_size", 2)
        check_positive(self.temperature, "temperature")
        check_count(self.epochs, "epochs", 0)
        check_count(self.finetune_epochs, "finetune_epochs", 0)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    out = [order[i:i + batch_size] for i in range(0, n, batch_size)]
    return [b for b in out if len(b) >= 2]


def _epoch_views(dataset, config, epoch):
    if not config.resample_views or epoch == 0:
        return dataset.views()
    clean = dataset.clean()
    pairs = make_pairs(clean, dataset.samples[0].csi_snr_db,
                       seed=(int(config.seed) * 1_000_003 + epoch) % 2**63)
    return (np.stack([s.view_a for s in pairs]), np.stack([s.view_b for s in pairs]))


def pretrain_loss_and_grad(net, view_a, view_b, tau):
    """NT-Xent loss of one batch and gradients for encoder + projection arrays."""
    x = np.concatenate([view_a, view_b])
    emb, enc_caches = _encode(net, x)
    z, pc = neural.forward(net.specs["projection"], net.params["projection"], emb)
    loss, gz = ntxent_loss(z, pair_index_for(len(view_a)), tau)
    gproj, g_emb = neural.backward(net.specs["projection"], net.params["projection"], pc, gz)
    grads = _encode_backward(net, enc_caches, g_emb)
    grads["projection"] = gproj
    return loss, grads


def pretrain(net, dataset, config, callback=None):
    """Contrastive pre-training of encoder and projection head.

    ``callback(epoch, loss, net)``, if given, runs after every epoch.

    Returns
    -------
    net : ContrastiveNet
        New network object with updated encoder and projection parameters.
    history : list of float
        Mean batch loss per epoch.
    """
    if len(dataset) < 2:
        raise ValueError("pre-training needs at least two samples")
    names = ENCODER + ("projection",)
    rng = np.random.default_rng([int(config.seed), 1])
    state = neural.AdamState.zeros_like(net.arrays(names))
    history = []
    for epoch in range(config.epochs):
        va, vb = _epoch_views(dataset, config, epoch)
        losses = []
        for idx in _batches(len(dataset), config.batch_size, rng):
            loss, grads = pretrain_loss_and_grad(net, va[idx], vb[idx], config.temperature)
            if not math.isfinite(loss):
                raise NumericalError(f"pre-training diverged at epoch {epoch} (loss={loss})")
            g = [a for n in names for a in grads[n].arrays()]
            arrays, state = neural.adam_step(net.arrays(names), g, state,
                                             lr=config.learning_rate)
            net = net.with_arrays(arrays, names)
            losses.append(loss)
        history.append(float(np.mean(losses)))
        logger.info("pretrain epoch %d loss %.6f", epoch, history[-1])
        if callback is not None:
            callback(epoch, history[-1], net)
    return net, history


def finetune_loss_and_grad(net, f_noisy, f_clean, project_unit_modulus=True,
                           train_encoder=False, rf_from_input=True):
    emb, enc_caches = _encode(net, f_noisy)
    out, hc = neural.forward(net.specs["prediction"], net.params["prediction"], emb)
    mag, phase = _head_to_fbb(net, out)
    loss, g_fbb = selfsup_loss(f_clean, assemble_fbb(mag, phase), project_unit_modulus,
                               f_rf_source=f_noisy if rf_from_input else None)
    g_out = polar_to_head_grad(net, out, g_fbb)
    ghead, g_emb = neural.backward(net.specs["prediction"], net.params["prediction"],
                                   hc, g_out)
    grads = {"prediction": ghead}
    if train_encoder:
        grads.update(_encode_backward(net, enc_caches, g_emb))
    return loss, grads


def finetune(net, dataset, config, callback=None):
    """Train the prediction head (and optionally the encoder) on the factorisation loss.

    Network inputs are noisy views; the loss is anchored on the clean
    precoders. Batches with a rank-deficient prediction are skipped.
    """
    names = ("prediction",) if config.freeze_encoder else ENCODER + ("prediction",)
    rng = np.random.default_rng([int(config.seed), 2])
    state = neural.AdamState.zeros_like(net.arrays(names))
    clean = dataset.clean()
    history = []
    for epoch in range(config.finetune_epochs):
        va, _ = _epoch_views(dataset, config, epoch)
        losses = []
        for idx in _batches(len(dataset), config.batch_size, rng):
            try:
                loss, grads = finetune_loss_and_grad(
                    net, va[idx], clean[idx], config.project_unit_modulus,
                    train_encoder=not config.freeze_encoder,
                    rf_from_input=config.rf_from_input)
            except RankDeficientError as exc:
                logger.warning("skipping batch in epoch %d: %s", epoch, exc)
                continue
            if not math.isfinite(loss):
                raise NumericalError(f"fine-tuning diverged at epoch {epoch} (loss={loss})")
            g = [a for n in names for a in grads[n].arrays()]
            arrays, state = neural.adam_step(net.arrays(names), g, state,
                                             lr=config.finetune_learning_rate)
            net = net.with_arrays(arrays, names)
            losses.append(loss)
        history.append(float(np.mean(losses)) if losses else math.nan)
        logger.info("finetune epoch %d loss %.6f", epoch, history[-1])
        if callback is not None:
            callback(epoch, history[-1], net)
    return net, history


def infer_precoders(net, f_tilde_opt, n_s=None, w=None):
    """Constraint-satisfying hybrid precoder for one noisy fully digital precoder.

    ``F_RF = phase(F~ pinv(F_BB))`` and ``F_BB`` is rescaled to unit
    total power ``N_s``.
    """
    f = check_complex_batch(f_tilde_opt, "f_tilde_opt")[0]
    n_s = f.shape[1] if n_s is None else n_s
    if n_s != net.n_s:
        raise ValueError(f"network was built for n_s={net.n_s}, got {n_s}")
    mag, phase = predict_fbb(net, f)
    f_bb = assemble_fbb(mag, phase)
    s = np.linalg.svd(f_bb, compute_uv=False)
    if s[-1] <= 1e-8 * s[0]:
        raise RankDeficientError("predicted F_BB is rank deficient")
    f_rf = phase_extract(f @ pinv(f_bb))
    f_bb = normalize_power(f_rf, f_bb, n_s)
    if w is None:
        w = np.zeros((0, n_s), dtype=complex)
    return PrecoderSet(f_opt=f, f_rf=f_rf, f_bb=f_bb, w=w)


def clustering_ratio(net, clean, csi_snr_db, seed=0):
    """Mean intra-pair over mean inter-pair embedding distance.

    Each clean precoder gets two noisy views; intra-pair distances compare the
    two views of the same precoder, inter-pair distances compare views of
    different precoders.
    """
    clean = check_complex_batch(clean, "clean")
    if len(clean) < 2:
        raise ValueError("need at least two precoders")
    pairs = make_pairs(clean, csi_snr_db, seed=seed)
    ea = encode(net, np.stack([p.view_a for p in pairs]))
    eb = encode(net, np.stack([p.view_b for p in pairs]))
    intra = np.linalg.norm(ea - eb, axis=1).mean()
    allv = np.concatenate([ea, eb])
    n = len(clean)
    d = np.linalg.norm(allv[:, None] - allv[None], axis=2)
    owner = np.concatenate([np.arange(n), np.arange(n)])
    mask = owner[:, None] != owner[None]
    return float(intra / d[mask].mean())


class ContrastiveHybridPrecoder(BaseEstimator):
    """Two-stage contrastive network predicting robust hybrid precoders.

    ``fit`` takes clean fully digital precoders, builds noisy positive pairs
    and runs pre-training followed by fine-tuning. ``transform`` returns
    embeddings and ``predict`` returns power-normalised hybrid precoders.

    Parameters
    ----------
    n_rf : int, default=4
    d_e, d_p : int, default=64, 32
        Embedding and projection sizes.
    batch_size, epochs, finetune_epochs : int
    temperature : float, default=0.1
    csi_snr_db : float, default=10.0
        CSI SNR of the training augmentations.
    learning_rate, finetune_learning_rate : float
    freeze_encoder : bool, default=True
    project_unit_modulus : bool, default=True
    random_state : int, default=0
    """

    def __init__(self, n_rf=4, d_e=64, d_p=32, batch_size=32, epochs=30,
                 finetune_epochs=30, temperature=0.1, csi_snr_db=10.0,
                 learning_rate=1e-3, finetune_learning_rate=1e-3,
                 freeze_encoder=True, project_unit_modulus=True, random_state=0):
        self.n_rf = n_rf
        self.d_e = d_e
        self.d_p = d_p
        self.batch_size = batch_size
        self.epochs = epochs
        self.finetune_epochs = finetune_epochs
        self.temperature = temperature
        self.csi_snr_db = csi_snr_db
        self.learning_rate = learning_rate
        self.finetune_learning_rate = finetune_learning_rate
        self.freeze_encoder = freeze_encoder
        self.project_unit_modulus = project_unit_modulus
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(batch_size=self.batch_size, epochs=self.epochs,
                           finetune_epochs=self.finetune_epochs,
                           temperature=self.temperature, csi_snr_db=self.csi_snr_db,
                           learning_rate=self.learning_rate,
                           finetune_learning_rate=self.finetune_learning_rate,
                           seed=self.random_state, freeze_encoder=self.freeze_encoder,
                           project_unit_modulus=self.project_unit_modulus)

    def fit(self, X, y=None):
        X = check_complex_batch(X)
        n, n_t, n_s = X.shape
        config = self._train_config()
        dataset = ContrastiveDataset(make_pairs(X, self.csi_snr_db, seed=self.random_state))
        net = build_network(n_t, n_s, self.n_rf, self.d_e, self.d_p,
                            seed=self.random_state)
        net, self.pretrain_history_ = pretrain(net, dataset, config)
        net, self.finetune_history_ = finetune(net, dataset, config)
        self.net_ = net
        self.n_features_in_ = n_t * n_s
        return self

    def transform(self, X):
        check_is_fitted(self, "net_")
        return encode(self.net_, check_complex_batch(X))

    def predict_precoders(self, X):
        check_is_fitted(self, "net_")
        return [infer_precoders(self.net_, f) for f in check_complex_batch(X)]

    def predict(self, X):
        return np.stack([p.hybrid for p in self.predict_precoders(X)])

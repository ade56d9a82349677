"""Experiment orchestration: data generation, training, SE sweeps, embedding PCA.

Every random draw is derived from one master seed through
``SeedSequence([master, stream, *index])`` so that any output file can be
regenerated from the manifest alone, independent of worker count.
"""
import csv
import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

from . import contrastive as cl
from .beamforming import PrecoderSet, normalize_power, optimal_precoder, pe_altmin, spectral_efficiency
from .channel import PRESETS, ArrayGeometry, export_channels, generate_channels, import_channels
from .csi import (ContrastiveDataset, check_disjoint, export_dataset, import_dataset,
                  inject_csi_noise, make_pairs)
from .exceptions import FileFormatError, NumericalError
from .linalg import pca_project

logger = logging.getLogger(__name__)

METHODS = ("optimal_digital", "pe_altmin", "contrastive_dnn")

# seed streams
_TRAIN_CHANNELS, _TEST_CHANNELS, _CSI_PAIRS, _TRAINING, _EVAL_NOISE, _ALTMIN, _PCA, _NETWORK = range(1, 9)

CHANNELS_TRAIN = "channels_train.txt"
CHANNELS_TEST = "channels_test.txt"
CSI_TRAIN = "csi_train.txt"
CSI_TEST = "csi_test.txt"
MANIFEST = "manifest.json"
CHECKPOINT = "checkpoint.txt"
TRAIN_LOG = "train_log.txt"
RESULTS = "results.csv"
SUMMARY = "summary.json"
PCA_TABLE = "pca.csv"
PCA_SUMMARY = "pca_summary.json"


class HarnessError(ValueError):
    """Invalid configuration or missing inputs; the CLI maps it to exit code 1."""


def derive_seed(master, stream, *index):
    """Unsigned 64-bit seed for a (stream, index...) position under ``master``."""
    state = np.random.SeedSequence([int(master), int(stream), *map(int, index)])
    return int(state.generate_state(1, dtype=np.uint64)[0])


def _parse_list(text):
    return [float(v) for v in text.replace(" ", "").split(",") if v]


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one experiment.

    The on-disk form is a ``key = value`` text file; lists are comma
    separated and ``inf`` denotes perfect CSI.
    """

    preset: str = "desk"
    n_t: int = 64
    n_r: int = 8
    n_rf: int = 4
    n_s: int = 2
    tx_array: str = ""
    rx_array: str = ""
    n_clusters: int = 0
    rays_per_cluster: int = 0
    k_factor_db: float = math.nan
    angle_spread_deg: float = math.nan
    los: str = ""
    snr_grid_db: list = field(default_factory=lambda: [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0])
    csi_snr_grid_db: list = field(default_factory=lambda: [math.inf, 36.0, 30.0, 25.0, 20.0])
    n_train: int = 2000
    n_test: int = 500
    batch_size: int = 32
    epochs: int = 30
    finetune_epochs: int = 30
    temperature: float = 0.1
    train_csi_snr_db: float = 10.0
    learning_rate: float = 1e-3
    finetune_learning_rate: float = 1e-3
    freeze_encoder: bool = True
    project_unit_modulus: bool = True
    rf_from_input: bool = True
    d_e: int = 64
    d_p: int = 32
    altmin_tol: float = 1e-6
    altmin_max_iter: int = 200
    clustering_samples: int = 50
    pca_samples: int = 5
    pca_views: int = 2
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.preset not in PRESETS:
            raise HarnessError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if not self.snr_grid_db or not self.csi_snr_grid_db:
            raise HarnessError("snr_grid_db and csi_snr_grid_db must be non-empty")
        if self.n_train < 1 or self.n_test < 1:
            raise HarnessError("n_train and n_test must be >= 1")
        if not self.n_s <= self.n_rf <= self.n_t or self.n_s > self.n_r:
            raise HarnessError("need n_s <= n_rf <= n_t and n_s <= n_r")
        if not 0 <= int(self.seed) < 2**64:
            raise HarnessError("seed must be an unsigned 64-bit integer")
        try:
            self.channel_config()
        except ValueError as exc:
            raise HarnessError(f"invalid channel configuration: {exc}") from None

    @classmethod
    def from_text(cls, text):
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not sep or key not in types:
                raise HarnessError(f"line {lineno}: unknown or malformed entry {raw!r}")
            kind = types[key]
            try:
                if kind in (int, "int"):
                    values[key] = int(val)
                elif kind in (float, "float"):
                    values[key] = float(val)
                elif kind in (bool, "bool"):
                    values[key] = _parse_bool(val)
                elif kind in (list, "list"):
                    values[key] = _parse_list(val)
                else:
                    values[key] = val
            except ValueError as exc:
                raise HarnessError(f"line {lineno}: {key}: {exc}") from None
        return cls(**values)

    @classmethod
    def from_file(cls, path):
        try:
            return cls.from_text(Path(path).read_text())
        except OSError as exc:
            raise HarnessError(f"cannot read config {path}: {exc}") from None

    def to_text(self):
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ", ".join("inf" if math.isinf(x) else format(x, "g") for x in v)
            elif isinstance(v, bool):
                v = str(v).lower()
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def channel_config(self):
        base = PRESETS[self.preset]

        def geometry(kind, n, default):
            kind = kind or default.kind
            if kind == "URA" and math.isqrt(n) ** 2 != n:
                kind = "ULA"
            return ArrayGeometry(kind, n, default.element_spacing)

        changes = {"tx_geometry": geometry(self.tx_array, self.n_t, base.tx_geometry),
                   "rx_geometry": geometry(self.rx_array, self.n_r, base.rx_geometry)}
        if self.n_clusters:
            changes["n_clusters"] = self.n_clusters
        if self.rays_per_cluster:
            changes["rays_per_cluster"] = self.rays_per_cluster
        if not math.isnan(self.k_factor_db):
            changes["k_factor_db"] = self.k_factor_db
        if not math.isnan(self.angle_spread_deg):
            changes["angle_spread_deg"] = self.angle_spread_deg
        if self.los:
            changes["los"] = _parse_bool(self.los)
        return dataclasses.replace(base, **changes)

    def train_config(self):
        return cl.TrainConfig(
            batch_size=self.batch_size, epochs=self.epochs,
            finetune_epochs=self.finetune_epochs, temperature=self.temperature,
            csi_snr_db=self.train_csi_snr_db, learning_rate=self.learning_rate,
            finetune_learning_rate=self.finetune_learning_rate,
            seed=derive_seed(self.seed, _TRAINING) % 2**63,
            freeze_encoder=self.freeze_encoder,
            project_unit_modulus=self.project_unit_modulus,
            rf_from_input=self.rf_from_input)

    def fresh_network(self):
        return cl.build_network(self.n_t, self.n_s, self.n_rf, self.d_e, self.d_p,
                                seed=derive_seed(self.seed, _NETWORK))


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _require(path, hint):
    if not Path(path).exists():
        raise HarnessError(f"missing {path}; {hint}")
    return path


def _precoders(realizations, n_s):
    return np.stack([optimal_precoder(r.h, n_s)[0] for r in realizations])


def gen_data(config, out_dir):
    """Write channel and CSI datasets plus a manifest recording every seed."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ch = config.channel_config()
    seeds = {
        "train": [derive_seed(config.seed, _TRAIN_CHANNELS, i) for i in range(config.n_train)],
        "test": [derive_seed(config.seed, _TEST_CHANNELS, i) for i in range(config.n_test)],
    }
    datasets = {}
    for split, stream in (("train", CHANNELS_TRAIN), ("test", CHANNELS_TEST)):
        reals = generate_channels(ch, seeds[split])
        export_channels(reals, out / stream)
        f_opt = _precoders(reals, config.n_s)
        gram_err = np.abs(np.conj(np.swapaxes(f_opt, 1, 2)) @ f_opt - np.eye(config.n_s)).max()
        if gram_err > 1e-9:
            raise NumericalError(f"F_opt columns not orthonormal ({gram_err:.2e})")
        pair_seed = derive_seed(config.seed, _CSI_PAIRS, 0 if split == "train" else 1) % 2**63
        samples = make_pairs(f_opt, config.train_csi_snr_db, seed=pair_seed,
                             fingerprints=[r.fingerprint for r in reals])
        datasets[split] = ContrastiveDataset(samples, split)
    check_disjoint(datasets["train"], datasets["test"])
    export_dataset(datasets["train"], out / CSI_TRAIN)
    export_dataset(datasets["test"], out / CSI_TEST)

    files = [CHANNELS_TRAIN, CHANNELS_TEST, CSI_TRAIN, CSI_TEST]
    manifest = {
        "master_seed": int(config.seed),
        "config": config.to_text(),
        "config_digest": config.digest(),
        "channel_fingerprint": ch.fingerprint(),
        "seed_derivation": "numpy SeedSequence([master_seed, stream, index]); "
                           "streams: 1 train channels, 2 test channels, 3 csi pairs, "
                           "4 training, 5 eval noise, 6 pe-altmin init, 7 pca views, "
                           "8 network init",
        "seeds": seeds,
        "files": {f: _sha256(out / f) for f in files},
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return manifest


def train(config, out_dir):
    """Pre-train and fine-tune; writes the checkpoint and a per-epoch log."""
    out = Path(out_dir)
    hint = "run `hybridbf gen-data` with the same --out first"
    train_set = import_dataset(_require(out / CSI_TRAIN, hint))
    test_set = import_dataset(_require(out / CSI_TEST, hint))
    n_t, n_s = train_set.samples[0].clean.shape
    if (n_t, n_s) != (config.n_t, config.n_s):
        raise HarnessError(f"dataset is {n_t}x{n_s} but config says {config.n_t}x{config.n_s}")
    tc = config.train_config()
    held_out = test_set.clean()[:config.clustering_samples]
    ratio_seed = derive_seed(config.seed, _PCA, 1) % 2**63

    def ratio(net):
        if len(held_out) < 2:
            return math.nan
        return cl.clustering_ratio(net, held_out, config.train_csi_snr_db, seed=ratio_seed)

    net = config.fresh_network()
    log = [f"stage=init epoch=0 loss=nan clustering_ratio={ratio(net):.17g}"]

    def on_pretrain(epoch, loss, n):
        log.append(f"stage=pretrain epoch={epoch + 1} loss={loss:.17g} "
                   f"clustering_ratio={ratio(n):.17g}")

    def on_finetune(epoch, loss, n):
        log.append(f"stage=finetune epoch={epoch + 1} loss={loss:.17g}")

    with threadpool_limits(1):
        net, pre_hist = cl.pretrain(net, train_set, tc, callback=on_pretrain)
        net, ft_hist = cl.finetune(net, train_set, tc, callback=on_finetune)
    cl.save_network(out / CHECKPOINT, net, {"master_seed": int(config.seed),
                                            "config_digest": config.digest()})
    (out / TRAIN_LOG).write_text("\n".join(log) + "\n")
    return net, pre_hist, ft_hist


def _polar_factor(f):
    u, _, vh = np.linalg.svd(f, full_matrices=False)
    return u @ vh


def _evaluate_chunk(indices, channels, net, config):
    snrs = 10 ** (np.asarray(config.snr_grid_db) / 10)
    csis = config.csi_snr_grid_db
    se = np.zeros((len(indices), len(METHODS), len(csis), len(snrs)))
    mod_err = pow_err = 0.0
    monotone = True
    with threadpool_limits(1):
        for row, i in enumerate(indices):
            h = channels[i]
            f_opt, w, _ = optimal_precoder(h, config.n_s)
            # common random numbers: one noise draw (scaled per level) and one
            # PE-AltMin start per channel, so retention isolates the CSI effect
            noise_seed = derive_seed(config.seed, _EVAL_NOISE, i)
            init_seed = derive_seed(config.seed, _ALTMIN, i)
            for j, csi in enumerate(csis):
                f_noisy = inject_csi_noise(f_opt, csi, noise_seed)
                f_rf, f_bb, trace = pe_altmin(f_noisy, config.n_rf, config.altmin_tol,
                                              config.altmin_max_iter, init_seed)
                monotone &= bool(np.all(np.diff(trace.residuals) <= 0))
                alt = PrecoderSet(f_noisy, f_rf, normalize_power(f_rf, f_bb, config.n_s), w)
                dnn = cl.infer_precoders(net, f_noisy, config.n_s, w)
                for p in (alt, dnn):
                    mod_err = max(mod_err, float(np.max(np.abs(np.abs(p.f_rf) - 1))))
                    pow_err = max(pow_err, abs(float(np.sum(np.abs(p.hybrid) ** 2)) - config.n_s))
                v_opt = _polar_factor(f_noisy)
                for m, v in enumerate((v_opt, alt.hybrid, dnn.hybrid)):
                    for k, s in enumerate(snrs):
                        se[row, m, j, k] = spectral_efficiency(h, v, w, s, config.n_s)
    return se, mod_err, pow_err, monotone


def evaluate_sweep(config, channels, net, n_jobs=1):
    """SE of every method, CSI level and SNR for each test channel.

    Returns
    -------
    se : ndarray, shape (n_channels, n_methods, n_csi, n_snr)
    stats : dict
        Worst constraint violations and whether all PE-AltMin traces were
        non-increasing.
    """
    n = len(channels)
    n_jobs = max(1, int(n_jobs))
    chunks = [c for c in np.array_split(np.arange(n), min(n, 4 * n_jobs)) if len(c)]
    parts = Parallel(n_jobs=n_jobs)(
        delayed(_evaluate_chunk)(c, channels, net, config) for c in chunks)
    se = np.concatenate([p[0] for p in parts])
    stats = {"max_modulus_error": max(p[1] for p in parts),
             "max_power_error": max(p[2] for p in parts),
             "altmin_traces_non_increasing": all(p[3] for p in parts)}
    return se, stats


def summarize_sweep(se, config):
    """Per-cell mean/std rows. Sums are exact (``math.fsum``) so results do not
    depend on evaluation order."""
    n = se.shape[0]
    rows = []
    mean = np.zeros(se.shape[1:])
    for m, method in enumerate(METHODS):
        for j, csi in enumerate(config.csi_snr_grid_db):
            for k, snr in enumerate(config.snr_grid_db):
                vals = se[:, m, j, k]
                mu = math.fsum(vals) / n
                var = math.fsum((vals - mu) ** 2) / max(n - 1, 1)
                mean[m, j, k] = mu
                rows.append({"method": method, "csi_snr_db": csi, "snr_db": snr,
                             "mean_se": mu, "std_se": math.sqrt(var), "n": n})
    return rows, mean


def sweep_checks(mean, config):
    """Dominance at perfect CSI and monotonicity in SNR for every curve."""
    checks = {"monotone_in_snr": bool(np.all(np.diff(mean, axis=2) >= -1e-12))}
    inf_cols = [j for j, c in enumerate(config.csi_snr_grid_db) if math.isinf(c)]
    if inf_cols:
        j = inf_cols[0]
        checks["optimal_dominates_pe_altmin"] = bool(
            np.all(mean[0, j] >= mean[1, j] - 1e-9))
    return checks


def _fmt_db(x):
    return "inf" if math.isinf(x) else format(x, ".17g")


def write_results(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "csi_snr_db", "snr_db", "mean_se", "std_se", "n"])
        for r in rows:
            writer.writerow([r["method"], _fmt_db(r["csi_snr_db"]), _fmt_db(r["snr_db"]),
                             format(r["mean_se"], ".17g"), format(r["std_se"], ".17g"),
                             r["n"]])


def read_results(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("csi_snr_db", "snr_db", "mean_se", "std_se"):
            r[k] = float(r[k])
        r["n"] = int(r["n"])
    return rows


def headline_metrics(mean, config):
    """Ratios to the fully digital optimum and SE retention under noisy CSI.

    Values are SE averaged over the SNR grid; per-SNR vectors are included too.
    """
    csis = config.csi_snr_grid_db
    out = {}
    inf_j = next((j for j, c in enumerate(csis) if math.isinf(c)), None)
    if inf_j is None:
        return out
    for m, method in enumerate(METHODS[1:], start=1):
        out[f"{method}_over_optimal_perfect_csi"] = (mean[m, inf_j] / mean[0, inf_j]).tolist()
    for m, method in enumerate(METHODS):
        ret = {}
        for j, c in enumerate(csis):
            if j == inf_j:
                continue
            ret[_fmt_db(c)] = {
                "mean": math.fsum(mean[m, j]) / math.fsum(mean[m, inf_j]),
                "per_snr": (mean[m, j] / mean[m, inf_j]).tolist(),
            }
        out[f"{method}_retention"] = ret
    return out


def evaluate(config, out_dir, n_jobs=1):
    """Run the SE sweep and write ``results.csv`` and ``summary.json``."""
    out = Path(out_dir)
    hint = "run `hybridbf gen-data` and `hybridbf train` with the same --out first"
    reals = import_channels(_require(out / CHANNELS_TEST, hint))
    net, meta = cl.load_network(_require(out / CHECKPOINT, hint))
    if reals[0].h.shape != (config.n_r, config.n_t):
        raise HarnessError(f"test channels are {reals[0].h.shape}, "
                           f"config expects {(config.n_r, config.n_t)}")
    if (net.n_t, net.n_s, net.n_rf) != (config.n_t, config.n_s, config.n_rf):
        raise HarnessError("checkpoint dimensions do not match the configuration")
    start = time.perf_counter()
    se, stats = evaluate_sweep(config, [r.h for r in reals], net, n_jobs)
    rows, mean = summarize_sweep(se, config)
    write_results(rows, out / RESULTS)
    manifest_path = out / MANIFEST
    summary = {
        "config": config.to_text(),
        "config_digest": config.digest(),
        "manifest_sha256": _sha256(manifest_path) if manifest_path.exists() else None,
        "checkpoint_sha256": _sha256(out / CHECKPOINT),
        "n_test": len(reals),
        "notes": ["optimal_digital under noisy CSI uses the polar (nearest "
                  "orthonormal) factor of the noisy F_opt",
                  "all methods use the full-digital SVD combiner of the true channel",
                  "CSI SNR is per entry relative to the mean entry power of F_opt"],
        "constraints": stats,
        "checks": sweep_checks(mean, config),
        "headline": headline_metrics(mean, config),
        "eval_seconds": time.perf_counter() - start,
    }
    (out / SUMMARY).write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return rows, summary


def _within_group_spread(points, groups):
    d = []
    for g in np.unique(groups):
        p = points[groups == g]
        diff = p[:, None] - p[None]
        iu = np.triu_indices(len(p), 1)
        d.extend(np.linalg.norm(diff, axis=2)[iu])
    return float(np.mean(d))


def embed_pca(config, out_dir, k=2):
    """PCA coordinates of clean + augmented embeddings before and after training."""
    out = Path(out_dir)
    hint = "run `hybridbf gen-data` and `hybridbf train` with the same --out first"
    test_set = import_dataset(_require(out / CSI_TEST, hint))
    trained, _ = cl.load_network(_require(out / CHECKPOINT, hint))
    n = min(config.pca_samples, len(test_set))
    if n < 2:
        raise HarnessError("embed-pca needs at least two samples")
    clean = test_set.clean()[:n]
    views, sample_ids, view_ids = [], [], []
    for i, f in enumerate(clean):
        views.append(f)
        sample_ids.append(i)
        view_ids.append("clean")
        for v in range(config.pca_views):
            seed = derive_seed(config.seed, _PCA, 0, i, v)
            views.append(inject_csi_noise(f, config.train_csi_snr_db, seed))
            sample_ids.append(i)
            view_ids.append(f"aug{v + 1}")
    views = np.stack(views)
    groups = np.array(sample_ids)
    rows, summary = [], {"k": k, "n_samples": n, "views_per_sample": 1 + config.pca_views}
    for variant, net in (("before", config.fresh_network()), ("after", trained)):
        emb = cl.encode(net, views)
        coords, var = pca_project(emb, k)
        for s, v, c in zip(sample_ids, view_ids, coords):
            rows.append([variant, s, v, *[format(x, ".17g") for x in c]])
        pair_d = np.linalg.norm(coords[:, None] - coords[None], axis=2)
        summary[variant] = {
            "explained_variance": var.tolist(),
            "within_group_spread": _within_group_spread(coords, groups),
            "relative_spread": _within_group_spread(coords, groups)
            / float(pair_d[np.triu_indices(len(coords), 1)].mean()),
        }
    with open(out / PCA_TABLE, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "sample", "view"] + [f"pc{i + 1}" for i in range(k)])
        w.writerows(rows)
    (out / PCA_SUMMARY).write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return rows, summary

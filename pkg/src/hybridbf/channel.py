"""Clustered geometric channel generation and channel dataset I/O.

The generator is a Saleh-Valenzuela style narrowband model with an optional
Ricean line-of-sight path::

    H = sqrt(Nt * Nr / L) * sum_l alpha_l * a_r(phi_l) a_t(theta_l)^H

normalised so that ``E||H||_F^2 = Nt * Nr``. Externally simulated channels
(e.g. exported from a ray tracer or a statistical simulator) can be loaded
with :func:`import_channels`.
"""
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import FileFormatError

CHANNEL_FILE_MAGIC = "HBF-CHANNELS"
CHANNEL_FILE_VERSION = 1


@dataclass(frozen=True)
class ArrayGeometry:
    """Antenna array description.

    ``kind`` is ``"ULA"`` or ``"URA"``; a URA must have a square element count.
    Spacing is in wavelengths.
    """

    kind: str = "URA"
    n_elements: int = 64
    element_spacing: float = 0.5

    def __post_init__(self):
        if self.kind not in ("ULA", "URA"):
            raise ValueError(f"kind must be 'ULA' or 'URA', got {self.kind!r}")
        if int(self.n_elements) != self.n_elements or self.n_elements < 1:
            raise ValueError(f"n_elements must be a positive integer, got {self.n_elements}")
        if self.kind == "URA" and math.isqrt(self.n_elements) ** 2 != self.n_elements:
            raise ValueError(
                f"URA needs a perfect-square element count, got {self.n_elements}")
        if not (self.element_spacing > 0 and math.isfinite(self.element_spacing)):
            raise ValueError("element_spacing must be positive")


@dataclass(frozen=True)
class ChannelConfig:
    tx_geometry: ArrayGeometry = field(default_factory=lambda: ArrayGeometry("URA", 64))
    rx_geometry: ArrayGeometry = field(default_factory=lambda: ArrayGeometry("ULA", 8))
    n_clusters: int = 3
    rays_per_cluster: int = 4
    los: bool = True
    k_factor_db: float = 10.0
    angle_spread_deg: float = 10.0
    carrier_ghz: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 1 or self.rays_per_cluster < 1:
            raise ValueError("n_clusters and rays_per_cluster must be >= 1")
        if not math.isfinite(self.k_factor_db):
            raise ValueError("k_factor_db must be finite")
        if not 0 < self.angle_spread_deg < 90:
            raise ValueError("angle_spread_deg must lie in (0, 90)")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def n_paths(self):
        return self.n_clusters * self.rays_per_cluster + int(self.los)

    def fingerprint(self):
        """Hash of every field except the seed."""
        d = dataclasses.asdict(self)
        d.pop("seed")
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# Urban-macro LOS scenario at 100 GHz with 1024/16 URAs. Cluster counts, K-factor
# and spread are generator defaults, not values taken from the measured model.
PRESETS = {
    "desk": ChannelConfig(),
    "desk-ula": ChannelConfig(tx_geometry=ArrayGeometry("ULA", 64),
                              rx_geometry=ArrayGeometry("ULA", 8)),
    "uma-100ghz-los": ChannelConfig(tx_geometry=ArrayGeometry("URA", 1024),
                                    rx_geometry=ArrayGeometry("URA", 16)),
}


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray
    config_fingerprint: str
    seed: int

    @property
    def fingerprint(self):
        """Identity of this realization, used for train/test split hygiene."""
        return f"{self.config_fingerprint}:{self.seed}"


def array_response(geom, azimuth, elevation=0.0):
    """Unit-norm steering vector of ``geom`` towards (azimuth, elevation).

    ULA element ``n`` is ``exp(j 2 pi d n sin(az)) / sqrt(N)``; elevation is
    ignored. URA elements are indexed (row m, column n) in row-major order
    with phase ``2 pi d (n sin(az) cos(el) + m sin(el))``.
    """
    d = geom.element_spacing
    if geom.kind == "ULA":
        n = np.arange(geom.n_elements)
        phase = 2 * np.pi * d * n * np.sin(azimuth)
    else:
        side = math.isqrt(geom.n_elements)
        m, n = np.divmod(np.arange(geom.n_elements), side)
        phase = 2 * np.pi * d * (n * np.sin(azimuth) * np.cos(elevation)
                                 + m * np.sin(elevation))
    return np.exp(1j * phase) / np.sqrt(geom.n_elements)


def _ray_angles(rng, n_clusters, rays, spread):
    centers = rng.uniform(-np.pi / 2, np.pi / 2, size=n_clusters)
    # Laplacian with standard deviation `spread`
    offsets = rng.laplace(0.0, spread / np.sqrt(2), size=(n_clusters, rays))
    return (centers[:, None] + offsets).ravel()


def _draw_paths(config):
    """Per-path steering matrices and complex gains; the LOS path, if any, is last."""
    rng = np.random.default_rng(int(config.seed))
    spread = np.deg2rad(config.angle_spread_deg)
    c, r = config.n_clusters, config.rays_per_cluster
    n_nlos = c * r
    n_paths = config.n_paths

    aod_az = _ray_angles(rng, c, r, spread)
    aod_el = _ray_angles(rng, c, r, spread) / 3
    aoa_az = _ray_angles(rng, c, r, spread)
    aoa_el = _ray_angles(rng, c, r, spread) / 3
    gains = (rng.standard_normal(n_nlos) + 1j * rng.standard_normal(n_nlos)) / np.sqrt(2)

    if config.los:
        k = 10 ** (config.k_factor_db / 10)
        # expected total path power stays n_paths, so E||H||^2 = Nt * Nr
        gains = gains * np.sqrt(n_paths / ((k + 1) * n_nlos))
        los_gain = np.sqrt(n_paths * k / (k + 1)) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        los_az = rng.uniform(-np.pi / 3, np.pi / 3, size=2)
        los_el = rng.uniform(-np.pi / 12, np.pi / 12, size=2)
        aod_az = np.append(aod_az, los_az[0])
        aod_el = np.append(aod_el, los_el[0])
        aoa_az = np.append(aoa_az, los_az[1])
        aoa_el = np.append(aoa_el, los_el[1])
        gains = np.append(gains, los_gain)

    a_t = np.stack([array_response(config.tx_geometry, az, el)
                    for az, el in zip(aod_az, aod_el)], axis=1)
    a_r = np.stack([array_response(config.rx_geometry, az, el)
                    for az, el in zip(aoa_az, aoa_el)], axis=1)
    scale = np.sqrt(config.tx_geometry.n_elements * config.rx_geometry.n_elements / n_paths)
    return a_r, a_t, gains, scale


def generate_channel(config):
    """Draw one channel realization, fully determined by ``config``."""
    a_r, a_t, gains, scale = _draw_paths(config)
    h = scale * (a_r * gains) @ a_t.conj().T
    return ChannelRealization(h=h, config_fingerprint=config.fingerprint(),
                              seed=int(config.seed))


def los_component(config):
    """Rank-one LOS term of the realization drawn from ``config`` (zero if NLOS)."""
    if not config.los:
        nt, nr = config.tx_geometry.n_elements, config.rx_geometry.n_elements
        return np.zeros((nr, nt), dtype=complex)
    a_r, a_t, gains, scale = _draw_paths(config)
    return scale * gains[-1] * np.outer(a_r[:, -1], a_t[:, -1].conj())


def generate_channels(config, seeds):
    """Realizations of ``config`` for each seed in ``seeds``."""
    return [generate_channel(dataclasses.replace(config, seed=int(s))) for s in seeds]


def _fmt(x):
    return format(x, ".17g")


def export_channels(realizations, path):
    """Write realizations to a line-oriented text file.

    Layout: a header ``HBF-CHANNELS <version> <Nr> <Nt> <count>``, then one
    line per realization ``<seed> <fingerprint> re im re im ...`` with the
    entries of H in row-major order at 17 significant digits.
    """
    realizations = list(realizations)
    if not realizations:
        raise ValueError("cannot export an empty list of realizations")
    nr, nt = realizations[0].h.shape
    lines = [f"{CHANNEL_FILE_MAGIC} {CHANNEL_FILE_VERSION} {nr} {nt} {len(realizations)}"]
    for i, r in enumerate(realizations):
        h = np.asarray(r.h, dtype=np.complex128)
        if h.shape != (nr, nt):
            raise ValueError(f"realization {i} has shape {h.shape}, expected {(nr, nt)}")
        flat = np.column_stack([h.real.ravel(), h.imag.ravel()]).ravel()
        lines.append(" ".join([str(int(r.seed)), r.config_fingerprint]
                              + [_fmt(v) for v in flat]))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_header(line, magic, n_fields):
    parts = line.split()
    if not parts or parts[0] != magic:
        raise FileFormatError(f"missing {magic} header")
    if len(parts) != n_fields:
        raise FileFormatError(f"header needs {n_fields} fields, got {len(parts)}")
    if not parts[1].isdigit() or int(parts[1]) != CHANNEL_FILE_VERSION:
        raise FileFormatError(f"unsupported version {parts[1]}")
    return parts


def import_channels(path):
    """Read a file written by :func:`export_channels` and validate it."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FileFormatError(f"{path} is empty")
    parts = _parse_header(lines[0], CHANNEL_FILE_MAGIC, 5)
    try:
        nr, nt, count = int(parts[2]), int(parts[3]), int(parts[4])
    except ValueError as exc:
        raise FileFormatError(f"bad header: {exc}") from None
    if nr < 1 or nt < 1 or count < 1:
        raise FileFormatError("header dimensions and count must be positive")
    body = lines[1:]
    if len(body) != count:
        raise FileFormatError(f"header declares {count} records, found {len(body)}")
    out = []
    for i, line in enumerate(body):
        fields = line.split()
        if len(fields) != 2 + 2 * nr * nt:
            raise FileFormatError(
                f"expected {2 + 2 * nr * nt} fields for a {nr}x{nt} channel, "
                f"got {len(fields)}", record=i)
        try:
            seed = int(fields[0])
            vals = np.array([float(v) for v in fields[2:]])
        except ValueError as exc:
            raise FileFormatError(str(exc), record=i) from None
        if not np.all(np.isfinite(vals)):
            raise FileFormatError("non-finite entry", record=i)
        h = (vals[0::2] + 1j * vals[1::2]).reshape(nr, nt)
        out.append(ChannelRealization(h=h, config_fingerprint=fields[1], seed=seed))
    return out

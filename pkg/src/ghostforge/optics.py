"""Simulation of a single-pixel (computational ghost imaging) apparatus.

Patterns are projected onto an object seen through a thin turbulent phase
screen; a bucket detector integrates the modulated light.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.linalg import hadamard

from .imaging import BucketSeries, Image, PatternStack, save_image
from .validation import check_choice, check_int, check_real

DEFAULT_SPLIT_RATIO = 173 / 208  # 173 training and 35 test objects

TURBULENCE_MODES = ("none", "gaussian-blur", "phase-screen")
REFRESH_POLICIES = ("per-measurement", "static")
PATTERN_KINDS = ("binary-random", "hadamard")


def turbulence_r0(size, strength):
    """Fried parameter for the qualitative labels weak/medium/strong.

    The mapping is an arbitrary labeling, not a measured calibration.
    """
    divisor = {"weak": 4, "medium": 8, "strong": 16}[strength]
    return size / divisor


@dataclass(frozen=True)
class TurbulenceParams:
    mode: str = "none"
    r0: float = 8.0
    L0: float | None = None
    blur_sigma: float = 1.0
    tilt_sigma: float = 0.0
    refresh: str = "per-measurement"

    def __post_init__(self):
        check_choice(self.mode, "mode", TURBULENCE_MODES)
        check_choice(self.refresh, "refresh", REFRESH_POLICIES)
        check_real(self.r0, "r0", minimum=0.0, strict=True)
        if self.L0 is not None and not float(self.L0) > 0:
            raise ValueError(f"L0 must be positive or inf, got {self.L0}")
        check_real(self.blur_sigma, "blur_sigma", minimum=0.0)
        check_real(self.tilt_sigma, "tilt_sigma", minimum=0.0)

    def outer_scale(self, size):
        return self.L0 if self.L0 is not None else 16.0 * size


@dataclass(frozen=True)
class SimConfig:
    image_size: int = 64
    n_measurements: int = 4096
    pattern_kind: str = "binary-random"
    turbulence: TurbulenceParams = field(default_factory=TurbulenceParams)
    detector_noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        check_int(self.image_size, "image_size", minimum=8)
        check_int(self.n_measurements, "n_measurements", minimum=1)
        check_choice(self.pattern_kind, "pattern_kind", PATTERN_KINDS)
        check_real(self.detector_noise_sigma, "detector_noise_sigma", minimum=0.0)
        check_int(self.seed, "seed")
        if not isinstance(self.turbulence, TurbulenceParams):
            raise TypeError("turbulence must be a TurbulenceParams")
        if self.pattern_kind == "hadamard" and self.n_measurements > self.image_size**2:
            raise ValueError(
                f"hadamard basis has {self.image_size**2} patterns, "
                f"{self.n_measurements} requested"
            )

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        turb = d.pop("turbulence", {})
        if not isinstance(turb, TurbulenceParams):
            turb = TurbulenceParams(**turb)
        return cls(turbulence=turb, **d)


@dataclass(frozen=True, eq=False)
class PhaseScreen:
    phase: np.ndarray

    @property
    def height(self):
        return self.phase.shape[0]

    @property
    def width(self):
        return self.phase.shape[1]


@dataclass
class ManifestEntry:
    clean_path: str
    degraded_path: str
    bucket_path: str
    recon_path: str
    pattern_seed: int
    split: str


@dataclass
class DatasetManifest:
    entries: list
    config: SimConfig
    split_ratio: float
    root: Path | None = None

    def split(self, name):
        return [e for e in self.entries if e.split == name]

    def resolve(self, rel):
        return Path(rel) if self.root is None else self.root / rel

    def to_json(self):
        doc = {
            "config": self.config.to_dict(),
            "split_ratio": self.split_ratio,
            "entries": [asdict(e) for e in self.entries],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path):
        path = Path(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        return cls(
            entries=[ManifestEntry(**e) for e in doc["entries"]],
            config=SimConfig.from_dict(doc["config"]),
            split_ratio=doc["split_ratio"],
            root=path.parent,
        )


# ------------------------------------------------------------------ seeding

def _key(*parts):
    """Fold integer/string parts into a 64-bit key, stable across runs."""
    h = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


def counter_rng(seed, index, stream="pattern"):
    """Counter-based generator for the ``index``-th draw of ``seed``.

    The Philox key comes from (seed, stream); the index occupies the high
    counter word so streams never overlap.
    """
    bitgen = np.random.Philox(key=_key(seed, stream), counter=[0, 0, 0, int(index)])
    return np.random.Generator(bitgen)


# ----------------------------------------------------------------- patterns

def make_patterns(cfg):
    size, n = cfg.image_size, cfg.n_measurements
    if cfg.pattern_kind == "hadamard":
        if size & (size - 1):
            raise ValueError(f"hadamard patterns need a power-of-two size, got {size}")
        h = hadamard(size * size, dtype=np.int8)[:n]
        planes = ((h.astype(np.float64) + 1.0) / 2.0).reshape(n, size, size)
        return PatternStack(planes, binary=True)
    planes = np.empty((n, size, size), dtype=np.float64)
    for i in range(n):
        planes[i] = counter_rng(cfg.seed, i).integers(0, 2, size=(size, size))
    return PatternStack(planes, binary=True)


# ------------------------------------------------------------- phase screens

def von_karman_psd(f2, r0, L0):
    """Phase power spectral density at squared spatial frequency ``f2``."""
    return 0.023 * r0 ** (-5.0 / 3.0) * (f2 + 1.0 / (L0 * L0)) ** (-11.0 / 6.0)


@functools.lru_cache(maxsize=32)
def _screen_amplitude(size, r0, L0, replicas=4):
    # spectrum of a unit-spaced sample of the continuous screen: the PSD
    # periodized over integer frequency shifts (power beyond Nyquist aliases in)
    fx = np.fft.fftfreq(size)
    fxx, fyy = fx[np.newaxis, :], fx[:, np.newaxis]
    psd = np.zeros((size, size))
    with np.errstate(divide="ignore"):
        for m in range(-replicas, replicas + 1):
            for n in range(-replicas, replicas + 1):
                psd += von_karman_psd((fxx + m) ** 2 + (fyy + n) ** 2, r0, L0)
    psd[0, 0] = 0.0  # piston only
    amp = np.sqrt(psd) / size
    amp.setflags(write=False)
    return amp


def make_phase_screen(params, size, seed, subharmonic_levels=5):
    """Von Karman phase screen on a ``size`` x ``size`` grid (unit spacing).

    Frequencies on the FFT grid come from filtered complex noise; nested 3x3
    subharmonic grids add the large-scale power inside the lowest FFT cell.
    ``L0 = inf`` gives the Kolmogorov limit.
    """
    if not params.r0 > 0:
        raise ValueError(f"r0 must be positive, got {params.r0}")
    r0, L0 = float(params.r0), float(params.outer_scale(size))
    rng = np.random.default_rng([_key(seed, "screen"), size])

    amp = _screen_amplitude(size, r0, L0)
    noise = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
    hi = np.real(np.fft.ifft2(noise * amp)) * size * size

    coords = np.arange(size, dtype=np.float64)
    lo = np.zeros((size, size))
    for p in range(1, subharmonic_levels + 1):
        dfp = 1.0 / (size * 3**p)
        wave = np.exp(2j * np.pi * dfp * np.outer((-1, 0, 1), coords))  # (3, size)
        coef = np.zeros((3, 3), dtype=np.complex128)
        for j in (-1, 0, 1):
            for k in (-1, 0, 1):
                if j == 0 and k == 0:
                    continue
                f2 = (k * k + j * j) * dfp * dfp
                a = math.sqrt(von_karman_psd(f2, r0, L0)) * dfp
                coef[j + 1, k + 1] = (rng.standard_normal() + 1j * rng.standard_normal()) * a
        lo += np.real(wave.T @ coef @ wave)
    phase = hi + lo
    phase -= phase.mean()
    phase.setflags(write=False)
    return PhaseScreen(phase)


def structure_function(phase, max_lag):
    """Mean squared phase difference along both grid axes, lags 1..max_lag."""
    phase = np.asarray(phase)
    out = np.empty(max_lag)
    for r in range(1, max_lag + 1):
        dx = phase[:, r:] - phase[:, :-r]
        dy = phase[r:, :] - phase[:-r, :]
        out[r - 1] = 0.5 * (np.mean(dx * dx) + np.mean(dy * dy))
    return out


def kolmogorov_structure(r, r0):
    return 6.88 * (np.asarray(r, dtype=np.float64) / r0) ** (5.0 / 3.0)


# --------------------------------------------------------------- degradation

def circular_pupil(size):
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[:size, :size]
    return ((xx - c) ** 2 + (yy - c) ** 2 <= (size / 4.0) ** 2).astype(np.float64)


def screen_psf(phase):
    """Unit-sum PSF of the pupil under ``phase``, origin at index (0, 0)."""
    phase = np.asarray(phase)
    field_ = circular_pupil(phase.shape[0]) * np.exp(1j * phase)
    psf = np.abs(np.fft.ifft2(field_)) ** 2
    return psf / psf.sum()


def convolve_circular(img, psf):
    return np.real(np.fft.ifft2(np.fft.fft2(img) * np.fft.fft2(psf)))


def _gaussian_blur(img, params, rng):
    out = np.asarray(img, dtype=np.float64)
    if params.blur_sigma > 0:
        out = ndimage.gaussian_filter(out, params.blur_sigma, mode="reflect", truncate=3.0)
    if params.tilt_sigma > 0:
        shift = rng.normal(0.0, params.tilt_sigma, size=2)
        out = ndimage.shift(out, shift, order=1, mode="grid-wrap")
    return out


def degrade_field(img, params, seed, screen=None):
    """Array-level degradation, without clamping."""
    img = np.asarray(img, dtype=np.float64)
    if params.mode == "none":
        return img
    if params.mode == "gaussian-blur":
        return _gaussian_blur(img, params, np.random.default_rng([_key(seed, "tilt")]))
    if img.shape[0] != img.shape[1]:
        raise ValueError(f"phase-screen mode needs a square image, got {img.shape}")
    if screen is None:
        screen = make_phase_screen(params, img.shape[0], seed)
    return convolve_circular(img, screen_psf(screen.phase))


def degrade(img, params, seed):
    """Turbulence-blurred copy of ``img``, clamped to [0, 1]."""
    if not isinstance(img, Image):
        img = Image(img)
    if params.mode == "none":
        return img
    return Image.clipped(degrade_field(img.data, params, seed))


# ---------------------------------------------------------------- detection

def measure(obj, patterns, params, noise_sigma, seed):
    """Simulated bucket readings for each pattern in the stack."""
    data = obj.data if isinstance(obj, Image) else np.asarray(obj, dtype=np.float64)
    if data.shape != patterns.patterns.shape[1:]:
        raise ValueError(
            f"object {data.shape} and patterns {patterns.patterns.shape[1:]} differ in size"
        )
    n = patterns.count
    values = np.empty(n)
    if params.mode == "none":
        values[:] = np.einsum("ijk,jk->i", patterns.patterns, data)
    else:
        if params.refresh == "static":
            scene = np.clip(degrade_field(data, params, _key(seed, "static")), 0.0, 1.0)
            values[:] = np.einsum("ijk,jk->i", patterns.patterns, scene)
        else:
            for i in range(n):
                scene = np.clip(degrade_field(data, params, _key(seed, i)), 0.0, 1.0)
                values[i] = np.sum(scene * patterns.patterns[i])
    if noise_sigma > 0:
        values += np.random.default_rng([_key(seed, "noise")]).normal(0.0, noise_sigma, n)
    return BucketSeries(np.maximum(values, 0.0))


# ------------------------------------------------------------------ objects

def builtin_shapes(count, size, seed):
    """Seeded binary test objects built from rectangles, discs and bars."""
    rng = np.random.default_rng([_key(seed, "shapes")])
    yy, xx = np.mgrid[:size, :size].astype(np.float64)
    out = []
    for _ in range(count):
        img = np.zeros((size, size))
        for _ in range(int(rng.integers(1, 4))):
            kind = rng.integers(0, 3)
            if kind == 0:
                h, w = rng.integers(size // 6, size // 2, size=2)
                y0, x0 = rng.integers(1, size - h), rng.integers(1, size - w)
                img[y0 : y0 + h, x0 : x0 + w] = 1.0
            elif kind == 1:
                rad = rng.uniform(size / 10, size / 4)
                cy, cx = rng.uniform(rad, size - rad, size=2)
                img[(yy - cy) ** 2 + (xx - cx) ** 2 <= rad * rad] = 1.0
            else:
                width = int(rng.integers(2, max(3, size // 8)))
                pos = int(rng.integers(1, size - width))
                start, stop = sorted(rng.integers(1, size - 1, size=2))
                stop = max(stop, start + size // 4)
                if rng.integers(0, 2):
                    img[start:stop, pos : pos + width] = 1.0
                else:
                    img[pos : pos + width, start:stop] = 1.0
        out.append(Image(img))
    return out


# ------------------------------------------------------------------ dataset

def generate_dataset(cfg, objects, out_dir, split_ratio=DEFAULT_SPLIT_RATIO):
    """Write clean/degraded/bucket/reconstruction files and a manifest."""
    from .recon import ReconConfig, reconstruct

    objects = list(objects)
    if not objects:
        raise ValueError("objects must be non-empty")
    if not 0.0 < split_ratio < 1.0:
        raise ValueError(f"split_ratio must lie in (0, 1), got {split_ratio}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    n = len(objects)
    n_train = int(round(split_ratio * n))
    order = np.random.default_rng([_key(cfg.seed, "split")]).permutation(n)
    splits = np.empty(n, dtype=object)
    splits[order[:n_train]] = "train"
    splits[order[n_train:]] = "test"

    entries = []
    for idx, obj in enumerate(objects):
        if not isinstance(obj, Image):
            obj = Image(obj)
        if obj.shape != (cfg.image_size, cfg.image_size):
            raise ValueError(f"object {idx} has shape {obj.shape}, expected {cfg.image_size}^2")
        pattern_seed = _key(cfg.seed, "entry", idx) >> 1
        entry_cfg = replace(cfg, seed=pattern_seed)
        patterns = make_patterns(entry_cfg)
        buckets = measure(obj, patterns, cfg.turbulence, cfg.detector_noise_sigma, pattern_seed)
        degraded = degrade(obj, cfg.turbulence, pattern_seed)
        recon = reconstruct(buckets, patterns, ReconConfig()) if patterns.count >= 2 else degraded

        stem = f"{idx:04d}"
        names = {
            "clean_path": f"{stem}_clean.pgm",
            "degraded_path": f"{stem}_degraded.pgm",
            "bucket_path": f"{stem}_buckets.bin",
            "recon_path": f"{stem}_recon.pgm",
        }
        save_image(obj, out_dir / names["clean_path"])
        save_image(degraded, out_dir / names["degraded_path"])
        buckets.save(out_dir / names["bucket_path"])
        save_image(recon, out_dir / names["recon_path"])
        entries.append(ManifestEntry(pattern_seed=pattern_seed, split=str(splits[idx]), **names))

    manifest = DatasetManifest(entries, cfg, float(split_ratio), root=out_dir)
    (out_dir / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return manifest

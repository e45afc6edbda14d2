"""Images, measurement containers, P5 graymap I/O and quality metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .validation import check_same_shape, check_unit_field

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


class ImageFormatError(ValueError):
    """Base class for P5 decoding failures; carries the failing byte offset."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class MalformedHeaderError(ImageFormatError):
    pass


class TruncatedPayloadError(ImageFormatError):
    pass


class UnsupportedFormatError(ImageFormatError):
    pass


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Image:
    """A 2-D scalar field with samples in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = check_unit_field(self.data, name="image")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    @classmethod
    def clipped(cls, values):
        """Build an image from arbitrary finite values by clamping to [0, 1]."""
        return cls(np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0))

    def __array__(self, dtype=None, copy=None):
        return self.data if dtype is None else self.data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PatternStack:
    """Ordered illumination patterns, shape ``(count, height, width)``."""

    patterns: np.ndarray
    binary: bool = True

    def __post_init__(self):
        arr = np.asarray(self.patterns, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] < 1 or min(arr.shape[1:]) < 1:
            raise ValueError(f"patterns must be (count, H, W) with count >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("pattern samples must lie in [0, 1]")
        if self.binary and not np.all((arr == 0.0) | (arr == 1.0)):
            raise ValueError("binary pattern stack holds values other than 0 and 1")
        object.__setattr__(self, "patterns", _frozen(arr))

    @property
    def count(self):
        return self.patterns.shape[0]

    @property
    def height(self):
        return self.patterns.shape[1]

    @property
    def width(self):
        return self.patterns.shape[2]

    def __len__(self):
        return self.count


@dataclass(frozen=True, eq=False)
class BucketSeries:
    """Single-pixel detector readings, one per pattern."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"bucket values must be 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("bucket values must be finite")
        if arr.size and arr.min() < 0.0:
            raise ValueError("bucket values must be non-negative")
        object.__setattr__(self, "values", _frozen(arr))

    def __len__(self):
        return self.values.shape[0]

    def save(self, path):
        """Write an 8-byte little-endian count header then float64 LE values."""
        with open(path, "wb") as fh:
            fh.write(np.uint64(len(self)).astype("<u8").tobytes())
            fh.write(self.values.astype("<f8").tobytes())

    @classmethod
    def load(cls, path):
        raw = Path(path).read_bytes()
        if len(raw) < 8:
            raise ValueError(f"{path}: bucket file shorter than its 8-byte header")
        count = int(np.frombuffer(raw[:8], dtype="<u8")[0])
        if len(raw) != 8 + 8 * count:
            raise ValueError(
                f"{path}: header announces {count} values but payload holds "
                f"{(len(raw) - 8) / 8:g}"
            )
        return cls(np.frombuffer(raw[8:], dtype="<f8").astype(np.float64))


@dataclass(frozen=True)
class MetricReport:
    ssim: float
    psnr_db: float

    def to_dict(self):
        psnr_db = "inf" if math.isinf(self.psnr_db) else self.psnr_db
        return {"ssim": self.ssim, "psnr_db": psnr_db}

    def to_json(self):
        return json.dumps(self.to_dict())


def compare(a, b):
    return MetricReport(ssim=ssim(a, b), psnr_db=psnr(a, b))


# --------------------------------------------------------------------- P5 I/O

def _read_token(raw, pos):
    """Read one whitespace-delimited header token, skipping ``#`` comments."""
    n = len(raw)
    while pos < n:
        c = raw[pos : pos + 1]
        if c == b"#":
            while pos < n and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not raw[pos : pos + 1].isspace() and raw[pos : pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise MalformedHeaderError("unexpected end of header", start)
    return raw[start:pos], start, pos


def _read_int(raw, pos, what):
    token, start, pos = _read_token(raw, pos)
    if not token.isdigit():
        raise MalformedHeaderError(f"{what} is not a decimal integer: {token!r}", start)
    return int(token), start, pos


def decode_pgm(raw):
    if len(raw) < 2:
        raise MalformedHeaderError("file too short for a magic number", 0)
    magic = raw[:2]
    if magic != b"P5":
        raise UnsupportedFormatError(f"unsupported magic {magic!r}, expected b'P5'", 0)
    width, start, pos = _read_int(raw, 2, "width")
    if width < 1:
        raise MalformedHeaderError("width must be positive", start)
    height, start, pos = _read_int(raw, pos, "height")
    if height < 1:
        raise MalformedHeaderError("height must be positive", start)
    maxval, start, pos = _read_int(raw, pos, "maxval")
    if not 0 < maxval < 65536:
        raise MalformedHeaderError(f"maxval {maxval} outside 1..65535", start)
    if pos >= len(raw) or not raw[pos : pos + 1].isspace():
        raise MalformedHeaderError("missing whitespace after maxval", pos)
    pos += 1
    dtype = ">u1" if maxval < 256 else ">u2"
    itemsize = np.dtype(dtype).itemsize
    needed = width * height * itemsize
    if len(raw) - pos < needed:
        raise TruncatedPayloadError(
            f"payload needs {needed} bytes, found {len(raw) - pos}", len(raw)
        )
    samples = np.frombuffer(raw, dtype=dtype, count=width * height, offset=pos)
    if samples.max(initial=0) > maxval:
        bad = int(np.argmax(samples > maxval))
        raise MalformedHeaderError(f"sample exceeds maxval {maxval}", pos + bad * itemsize)
    return samples.astype(np.float64).reshape(height, width) / maxval


def encode_pgm(img):
    # round half away from zero; samples are non-negative so floor(x + 0.5) suffices
    data = np.asarray(img, dtype=np.float64)
    q = np.floor(data * 255.0 + 0.5).astype(np.uint8)
    header = f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii")
    return header + q.tobytes()


def load_image(path):
    return Image(decode_pgm(Path(path).read_bytes()))


def save_image(img, path):
    if not isinstance(img, Image):
        img = Image(img)
    Path(path).write_bytes(encode_pgm(img.data))


# ------------------------------------------------------------------- metrics

def _as_field(x):
    return x.data if isinstance(x, Image) else np.asarray(x, dtype=np.float64)


def mse(a, b):
    a, b = _as_field(a), _as_field(b)
    check_same_shape(a, b, "images")
    diff = a - b
    return float(np.mean(diff * diff))


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / err)


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    g /= g.sum()
    return g


def _filter_valid(x, g):
    # separable valid-mode correlation: rows then columns
    k = g.shape[0]
    rows = np.lib.stride_tricks.sliding_window_view(x, k, axis=1) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=0) @ g


def window_size(shape):
    """11, or the largest odd size that fits images smaller than that."""
    m = min(shape)
    return SSIM_WINDOW if m >= SSIM_WINDOW else m - (1 - m % 2)


def ssim_map(a, b, data_range=1.0):
    a, b = _as_field(a), _as_field(b)
    check_same_shape(a, b, "images")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    g = gaussian_window(window_size(a.shape))
    mu_a = _filter_valid(a, g)
    mu_b = _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a * mu_a
    var_b = _filter_valid(b * b, g) - mu_b * mu_b
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b):
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Images smaller than the window use the largest odd window that fits.
    """
    return float(np.mean(ssim_map(a, b)))

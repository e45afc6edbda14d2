"""Correlation (covariance) reconstruction for computational ghost imaging."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .imaging import BucketSeries, Image, PatternStack
from .optics import TurbulenceParams, make_patterns, measure
from .validation import check_choice

ESTIMATORS = ("covariance", "differential")
NORMALIZATIONS = ("minmax", "none")


@dataclass(frozen=True)
class ReconConfig:
    estimator: str = "covariance"
    normalize: str = "minmax"

    def __post_init__(self):
        check_choice(self.estimator, "estimator", ESTIMATORS)
        check_choice(self.normalize, "normalize", NORMALIZATIONS)


def correlate(buckets, patterns, estimator="covariance"):
    """Unnormalized correlation image G(x) of buckets against patterns.

    ``covariance`` computes <B P(x)> - <B><P(x)>; ``differential`` computes
    <(B - <B>) P(x)>. The two agree algebraically.
    """
    b = np.asarray(buckets.values if isinstance(buckets, BucketSeries) else buckets, dtype=np.float64)
    p = patterns.patterns if isinstance(patterns, PatternStack) else np.asarray(patterns, dtype=np.float64)
    if b.shape[0] != p.shape[0]:
        raise ValueError(f"{b.shape[0]} bucket values but {p.shape[0]} patterns")
    n = b.shape[0]
    if n < 2:
        raise ValueError(f"need at least 2 measurements, got {n}")
    flat = p.reshape(n, -1)
    if estimator == "covariance":
        g = (b @ flat) / n - (b.sum() / n) * (flat.sum(axis=0) / n)
    elif estimator == "differential":
        g = ((b - b.sum() / n) @ flat) / n
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    return g.reshape(p.shape[1:])


def minmax(field):
    lo, hi = field.min(), field.max()
    if hi == lo:
        return np.full_like(field, 0.5)
    return (field - lo) / (hi - lo)


def reconstruct(buckets, patterns, cfg=ReconConfig()):
    """Ghost image from a bucket series and its reference patterns.

    With ``normalize="none"`` the raw correlation field is returned as an
    array, since it is not confined to [0, 1].
    """
    g = correlate(buckets, patterns, cfg.estimator)
    if cfg.normalize == "none":
        return g
    return Image(np.clip(minmax(g), 0.0, 1.0))


def reconstruct_pair(obj, cfg_sim, cfg_rec=ReconConfig()):
    """Reconstructions of ``obj`` without and with the configured turbulence."""
    patterns = make_patterns(cfg_sim)
    clean = measure(obj, patterns, TurbulenceParams(mode="none"), cfg_sim.detector_noise_sigma, cfg_sim.seed)
    turbulent = measure(obj, patterns, cfg_sim.turbulence, cfg_sim.detector_noise_sigma, cfg_sim.seed)
    return reconstruct(clean, patterns, cfg_rec), reconstruct(turbulent, patterns, cfg_rec)


def pearson(a, b):
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    a = a - a.mean()
    b = b - b.mean()
    return float(a @ b / np.sqrt((a @ a) * (b @ b)))


class CGIReconstructor(TransformerMixin, BaseEstimator):
    """Transformer mapping rows of bucket readings to ghost images.

    ``fit`` only materializes the reference pattern stack for the configured
    size, count, kind and seed; ``transform`` takes an ``(n_samples,
    n_measurements)`` array of bucket values and returns ``(n_samples, H, W)``.

    Parameters
    ----------
    image_size, n_measurements, pattern_kind, seed
        Pattern generation settings, as in ``SimConfig``.
    estimator : {"covariance", "differential"}
    normalize : {"minmax", "none"}
    """

    def __init__(self, image_size=64, n_measurements=4096, pattern_kind="binary-random",
                 seed=0, estimator="covariance", normalize="minmax"):
        self.image_size = image_size
        self.n_measurements = n_measurements
        self.pattern_kind = pattern_kind
        self.seed = seed
        self.estimator = estimator
        self.normalize = normalize

    def _sim_config(self):
        from .optics import SimConfig

        return SimConfig(image_size=self.image_size, n_measurements=self.n_measurements,
                         pattern_kind=self.pattern_kind, seed=self.seed)

    def fit(self, X=None, y=None):
        self.config_ = ReconConfig(self.estimator, self.normalize)
        self.patterns_ = make_patterns(self._sim_config())
        self.n_features_in_ = self.n_measurements
        return self

    def transform(self, X):
        check_is_fitted(self, "patterns_")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[np.newaxis]
        if X.ndim != 2 or X.shape[1] != self.patterns_.count:
            raise ValueError(
                f"expected (n_samples, {self.patterns_.count}) bucket rows, got {X.shape}"
            )
        out = []
        for row in X:
            rec = reconstruct(BucketSeries(row), self.patterns_, self.config_)
            out.append(rec.data if isinstance(rec, Image) else rec)
        return np.stack(out)

    def measure(self, objects, turbulence=None, noise_sigma=0.0):
        """Simulate bucket rows for a stack of objects under the fitted patterns."""
        check_is_fitted(self, "patterns_")
        turbulence = turbulence or TurbulenceParams()
        objects = np.asarray(objects, dtype=np.float64)
        if objects.ndim == 2:
            objects = objects[np.newaxis]
        return np.stack([
            measure(Image(o), self.patterns_, turbulence, noise_sigma, self.seed + i).values
            for i, o in enumerate(objects)
        ])

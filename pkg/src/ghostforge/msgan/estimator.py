from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..tensor import no_grad
from ..validation import check_image_batch, check_same_shape
from .config import DiscriminatorConfig, GeneratorConfig, LossWeights, TrainConfig
from .train import as_batch, fit_pairs


class MsGANRestorer(BaseEstimator):
    """Image-to-image restorer trained adversarially on (degraded, clean) pairs.

    ``X`` and ``y`` are stacks of square images in [0, 1] with shape
    ``(n_samples, S, S)``; ``S`` must be divisible by ``2**depth``.

    Attributes
    ----------
    generator_ : Generator
    discriminator_ : PatchDiscriminator
    history_ : list of dict
        Per-iteration loss components.
    """

    def __init__(self, base_channels=16, depth=4, attention_reduction=4, disc_width=0.25,
                 iterations=1000, lr_g=2e-4, lr_d=2e-4, betas=(0.5, 0.999),
                 alpha=0.5, beta=0.01, gamma=0.01, seed=0):
        self.base_channels = base_channels
        self.depth = depth
        self.attention_reduction = attention_reduction
        self.disc_width = disc_width
        self.iterations = iterations
        self.lr_g = lr_g
        self.lr_d = lr_d
        self.betas = betas
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.seed = seed

    def _configs(self):
        gcfg = GeneratorConfig(base_channels=self.base_channels, depth=self.depth,
                               attention_reduction=self.attention_reduction)
        dcfg = DiscriminatorConfig(width=self.disc_width)
        tcfg = TrainConfig(iterations=self.iterations, lr_g=self.lr_g, lr_d=self.lr_d,
                           betas=tuple(self.betas), seed=self.seed)
        weights = LossWeights(self.alpha, self.beta, self.gamma)
        return gcfg, dcfg, tcfg, weights

    def fit(self, X, y):
        X = check_image_batch(X, "X")
        y = check_image_batch(y, "y")
        check_same_shape(X, y, "X and y")
        result = fit_pairs(list(X), list(y), *self._configs())
        self.generator_ = result.generator
        self.discriminator_ = result.discriminator
        self.history_ = result.history
        self.image_shape_ = X.shape[1:]
        return self

    def predict(self, X):
        check_is_fitted(self, "generator_")
        X = check_image_batch(X, "X")
        if X.shape[1:] != self.image_shape_:
            raise ValueError(f"expected images of shape {self.image_shape_}, got {X.shape[1:]}")
        out = np.empty_like(X)
        with no_grad():
            for i, img in enumerate(X):
                out[i] = self.generator_(as_batch(img)).data[0, 0]
        return np.clip(out, 0.0, 1.0)

    def score(self, X, y):
        """Mean SSIM of the restored images against ``y``."""
        from ..imaging import ssim

        pred = self.predict(X)
        y = check_image_batch(y, "y")
        return float(np.mean([ssim(p, t) for p, t in zip(pred, y)]))

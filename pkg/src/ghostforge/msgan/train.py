"""Adversarial training loop, checkpoints and restoration."""

from __future__ import annotations

import contextlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..imaging import Image, load_image
from ..tensor import AdamState, Tensor, adam_step, load_checkpoint, no_grad, save_checkpoint
from ..tensor.core import NonFiniteError
from .config import DiscriminatorConfig, GeneratorConfig, LossWeights, TrainConfig
from .losses import discriminator_loss, generator_losses
from .networks import Generator, PatchDiscriminator, PerceptualExtractor

logger = logging.getLogger(__name__)

HISTORY_KEYS = ("l_total", "l_mse", "l_perc", "l_adv_g", "l_adv_d")


class TrainingAborted(RuntimeError):
    def __init__(self, iteration, cause):
        super().__init__(f"training aborted at iteration {iteration}: {cause}")
        self.iteration = iteration


class ArchitectureMismatch(KeyError):
    pass


def as_batch(img):
    arr = img.data if isinstance(img, Image) else np.asarray(img, dtype=np.float64)
    return Tensor(arr[np.newaxis, np.newaxis])


@contextlib.contextmanager
def frozen(module):
    params = module.parameters()
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p, flag in zip(params, flags):
            p.requires_grad = flag


def build_models(gcfg, dcfg, seed):
    gen = Generator(gcfg).reset_parameters(seed, namespace="generator")
    disc = PatchDiscriminator(dcfg).reset_parameters(seed, namespace="discriminator")
    return gen, disc, PerceptualExtractor(seed)


def generator_meta(gcfg, seed, iteration):
    return {"kind": "generator", "generator": gcfg.to_dict(), "seed": seed, "iteration": iteration}


def save_generator(path, gen, seed, iteration):
    save_checkpoint(path, gen.state_dict(), generator_meta(gen.cfg, seed, iteration))


@dataclass
class TrainResult:
    generator: Generator
    discriminator: PatchDiscriminator
    history: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)


def fit_pairs(inputs, targets, gcfg=GeneratorConfig(), dcfg=DiscriminatorConfig(),
              tcfg=TrainConfig(), weights=LossWeights(), out_dir=None, on_iteration=None):
    """Train on in-memory (input, target) image pairs.

    Each iteration draws the next pair of a seeded per-epoch shuffle, takes
    one discriminator step and then one generator step. With ``out_dir``
    set, the history is streamed to ``history.jsonl`` and checkpoints are
    written there.
    """
    if len(inputs) != len(targets) or not len(inputs):
        raise ValueError("need equally many, and at least one, inputs and targets")
    if tcfg.batch_size != 1:
        raise ValueError("only batch_size 1 is supported")
    gen, disc, extractor = build_models(gcfg, dcfg, tcfg.seed)
    opt_g = AdamState(lr=tcfg.lr_g, beta1=tcfg.betas[0], beta2=tcfg.betas[1], eps=tcfg.eps)
    opt_d = AdamState(lr=tcfg.lr_d, beta1=tcfg.betas[0], beta2=tcfg.betas[1], eps=tcfg.eps)
    xs = [as_batch(x) for x in inputs]
    ys = [as_batch(y) for y in targets]
    rng = np.random.default_rng([tcfg.seed, 0x5EED])
    result = TrainResult(gen, disc)

    out_dir = Path(out_dir) if out_dir is not None else None
    hist_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        hist_fh = open(out_dir / "history.jsonl", "w", encoding="utf-8")
    try:
        order = []
        for it in range(1, tcfg.iterations + 1):
            if not order:
                order = rng.permutation(len(xs)).tolist()
            k = order.pop(0)
            x, y = xs[k], ys[k]
            try:
                with no_grad():
                    fake = gen(x)
                l_adv_d = discriminator_loss(disc, y, fake)
                l_adv_d.backward()
                adam_step(opt_d, disc.parameters())

                with frozen(disc):
                    fake = gen(x)
                    total, l_mse, l_perc, l_adv_g = generator_losses(
                        y, fake, disc, extractor, weights, tcfg.perceptual_layers)
                total.backward()
                adam_step(opt_g, gen.parameters())
            except NonFiniteError as exc:
                raise TrainingAborted(it, exc) from exc

            record = {"iter": it}
            for key, t in zip(HISTORY_KEYS, (total, l_mse, l_perc, l_adv_g, l_adv_d)):
                record[key] = float(t.data)
            result.history.append(record)
            if hist_fh is not None:
                hist_fh.write(json.dumps(record) + "\n")
            if on_iteration is not None:
                on_iteration(record)
            if out_dir is not None and tcfg.checkpoint_every and it % tcfg.checkpoint_every == 0:
                path = out_dir / f"generator_{it:06d}.ckpt"
                save_generator(path, gen, tcfg.seed, it)
                result.checkpoints.append(path)
        if out_dir is not None:
            path = out_dir / "generator.ckpt"
            save_generator(path, gen, tcfg.seed, tcfg.iterations)
            save_checkpoint(out_dir / "discriminator.ckpt", disc.state_dict(),
                            {"kind": "discriminator", "discriminator": dcfg.to_dict(),
                             "seed": tcfg.seed, "iteration": tcfg.iterations})
            result.checkpoints.append(path)
    finally:
        if hist_fh is not None:
            hist_fh.close()
    return result


def load_pairs(manifest, split="train", source="degraded"):
    entries = manifest.split(split)
    inputs, targets = [], []
    for e in entries:
        src = e.degraded_path if source == "degraded" else e.recon_path
        inputs.append(load_image(manifest.resolve(src)))
        targets.append(load_image(manifest.resolve(e.clean_path)))
    return inputs, targets


def train(manifest, gcfg=GeneratorConfig(), dcfg=DiscriminatorConfig(), tcfg=TrainConfig(),
          weights=LossWeights(), out_dir=None):
    """Train on the manifest's training split; returns a ``TrainResult``."""
    inputs, targets = load_pairs(manifest, "train", tcfg.input_source)
    if not inputs:
        raise ValueError("manifest has no training entries")
    logger.info("training on %d pairs for %d iterations", len(inputs), tcfg.iterations)
    return fit_pairs(inputs, targets, gcfg, dcfg, tcfg, weights, out_dir)


def load_generator(checkpoint):
    """Generator from a checkpoint path or a ``(tensors, meta)`` pair."""
    if isinstance(checkpoint, (str, Path)):
        tensors, meta = load_checkpoint(checkpoint)
    else:
        tensors, meta = checkpoint
    if meta.get("kind") != "generator":
        raise ArchitectureMismatch("checkpoint does not hold a generator")
    gen = Generator(GeneratorConfig.from_dict(meta["generator"]))
    for name, p in gen.named_parameters():
        p.name = name
    try:
        gen.load_state_dict(tensors)
    except KeyError as exc:
        raise ArchitectureMismatch(str(exc)) from None
    return gen


def restore(img, checkpoint):
    """Run the generator on ``img`` without recording gradients; returns an Image."""
    gen = checkpoint if isinstance(checkpoint, Generator) else load_generator(checkpoint)
    with no_grad():
        out = gen(as_batch(img))
    return Image.clipped(out.data[0, 0])

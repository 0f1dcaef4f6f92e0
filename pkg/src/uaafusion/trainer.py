"""Joint synchronous training of the fusion stages and the segmentation net."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as T
from .attribution import attribution_weights
from .data import gen_synthetic  # re-exported for callers
from .errors import ConfigError, NumericAbort
from .fusion import AblationFlags, FusionModel, ModelConfig, unroll
from .losses import compute_losses
from .tensor import Tensor

__all__ = ["TrainConfig", "AdamState", "adam_step", "train", "gen_synthetic"]

LOG_HEADER = ("iter", "epoch", "lr", "l_int", "l_grad", "l_seg", "l_total")


@dataclass
class TrainConfig:
    stages: int = 5
    channels: int = 16
    seg_channels: int = 16
    num_classes: int = 4
    ig_steps: int = 5
    lam: float = 1.0
    mu: float = 0.1
    eps: float = 1e-8
    lr: float = 1e-4
    epochs: int = 50
    batch: int = 4
    patch: int = 32
    seed: int = 0
    clip_norm: float = 10.0
    ablate: AblationFlags = field(default_factory=AblationFlags)

    def __post_init__(self):
        if self.stages < 1 or self.ig_steps < 1:
            raise ConfigError("stages and ig_steps must be >= 1")
        if self.patch < 8:
            raise ConfigError("patch size must be >= 8")

    def model_config(self):
        return ModelConfig(stages=self.stages, channels=self.channels,
                           seg_channels=self.seg_channels, num_classes=self.num_classes,
                           ig_steps=self.ig_steps, eps=self.eps, ablate=self.ablate)


@dataclass
class AdamState:
    """Bias-corrected Adam moments for one named parameter set."""

    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, named):
        return cls(m={k: np.zeros_like(p.data) for k, p in named.items()},
                   v={k: np.zeros_like(p.data) for k, p in named.items()})


def adam_step(named_params, grads, state, lr):
    """One in-place Adam update over {name: Tensor} with {name: grad array}."""
    for g in grads.values():
        if not np.isfinite(g).all():
            raise NumericAbort("non-finite gradient in adam_step")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, p in named_params.items():
        g = grads[name]
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def _clip_global_norm(grads, max_norm):
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def _batch_arrays(samples):
    ir = np.stack([s.ir for s in samples])
    vi = np.stack([s.vi for s in samples])
    mask = np.stack([s.mask for s in samples])
    return ir, vi, mask


def train(config, dataset, progress=None):
    """Run the synchronous training loop; returns (model, log rows).

    Each iteration recomputes the attribution weights and attention maps
    from the current segmentation network (both enter as constants), then
    takes one joint Adam step over all parameters.  On a non-finite loss
    or gradient the last finite parameter state is restored and
    NumericAbort is raised with `.model` attached.
    """
    if not dataset:
        raise ConfigError("empty dataset")
    model = FusionModel.init(config.model_config(), seed=config.seed)
    named = dict(model.named_parameters())
    adam = AdamState.for_params(named)
    iters_per_epoch = max(1, (len(dataset) + config.batch - 1) // config.batch)
    total_iters = config.epochs * iters_per_epoch
    log = []
    snapshot = {k: p.data.copy() for k, p in named.items()}

    for it in range(total_iters):
        epoch = it // iters_per_epoch
        lr = config.lr * 0.5 ** (epoch // 10)
        start = (it % iters_per_epoch) * config.batch
        samples = [dataset[(start + i) % len(dataset)] for i in range(config.batch)]
        ir, vi, mask = _batch_arrays(samples)

        # per-sample weights from the current segnet, stop-gradient
        w1 = np.empty_like(ir)
        for i in range(len(samples)):
            w = attribution_weights(model.segnet, ir[i:i + 1], vi[i:i + 1],
                                    mask[i:i + 1], config.ig_steps, eps=config.eps)
            w1[i] = w.w1[0]
        w2 = 1.0 - w1

        try:
            traj = unroll(model, Tensor(ir), Tensor(vi), Tensor(w1), Tensor(w2), mask)
            parts = compute_losses(model, traj, Tensor(ir), Tensor(vi),
                                   Tensor(w1), Tensor(w2), mask,
                                   lam=config.lam, mu=config.mu)
            T.backward(parts.l_total)
            grads = {k: (p.grad if p.grad is not None else np.zeros_like(p.data))
                     for k, p in named.items()}
            _clip_global_norm(grads, config.clip_norm)
            adam_step(named, grads, adam, lr)
        except NumericAbort as exc:
            for k, p in named.items():
                p.data = snapshot[k]
            exc.model = model
            raise
        for p in named.values():
            p.zero_grad()
        snapshot = {k: p.data.copy() for k, p in named.items()}

        l_int, l_grad, l_seg, l_total = parts.as_floats()
        log.append((it, epoch, lr, l_int, l_grad, l_seg, l_total))
        if progress is not None:
            progress(it, total_iters, l_total)

    return model, log


def write_log_csv(path, log):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(LOG_HEADER) + "\n")
        for it, epoch, lr, l_int, l_grad, l_seg, l_total in log:
            fh.write(f"{it},{epoch},{lr:.10e},{l_int:.12e},{l_grad:.12e},"
                     f"{l_seg:.12e},{l_total:.12e}\n")

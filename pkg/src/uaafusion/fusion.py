"""The K-stage unrolled fusion network.

Each stage takes a gradient step on the weighted data-fidelity terms and
then applies a learned proximal operator: channel expansion, memory
injection, an attention branch gated by the sigmoid of the attribution
map, and channel compression back to one plane.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import attribution, tensor as T
from .errors import ShapeError
from .memory import ConvLSTMParams, MemoryState, update_memories
from .segnet import SegNetParams, he_uniform
from .tensor import Tensor


@dataclass
class AblationFlags:
    no_attention: bool = False
    grad_instead_of_ig: bool = False
    no_l_int: bool = False
    no_l_grad: bool = False
    no_ms: bool = False
    no_ml: bool = False
    seg_loss_fused_only: bool = False

    NAMES = ("no_attention", "grad_instead_of_ig", "no_l_int", "no_l_grad",
             "no_ms", "no_ml", "seg_loss_fused_only")

    @classmethod
    def from_names(cls, names):
        flags = cls()
        for name in names:
            key = name.strip().replace("-", "_")
            if key not in cls.NAMES:
                raise ValueError(f"unknown ablation flag: {name}")
            setattr(flags, key, True)
        return flags


@dataclass
class ModelConfig:
    stages: int = 5
    channels: int = 16
    seg_channels: int = 16
    num_classes: int = 4
    ig_steps: int = 5
    eps: float = 1e-8
    ablate: AblationFlags = field(default_factory=AblationFlags)


@dataclass
class StageParams:
    conv_in_w: Tensor
    conv_in_b: Tensor
    conv_mem_w: Tensor
    conv_mem_b: Tensor
    conv_att_w: Tensor
    conv_att_b: Tensor
    conv_out_w: Tensor
    conv_out_b: Tensor
    rho: Tensor  # learnable step size, scalar

    @classmethod
    def init(cls, rng, channels, rho_init=0.01):
        c = channels
        return cls(
            conv_in_w=Tensor(he_uniform(rng, (c, 1, 3, 3)), requires_grad=True),
            conv_in_b=Tensor(np.zeros(c), requires_grad=True),
            conv_mem_w=Tensor(he_uniform(rng, (c, 3 * c, 3, 3)), requires_grad=True),
            conv_mem_b=Tensor(np.zeros(c), requires_grad=True),
            conv_att_w=Tensor(he_uniform(rng, (c, c, 3, 3)), requires_grad=True),
            conv_att_b=Tensor(np.zeros(c), requires_grad=True),
            conv_out_w=Tensor(he_uniform(rng, (1, c, 3, 3)), requires_grad=True),
            conv_out_b=Tensor(np.zeros(1), requires_grad=True),
            rho=Tensor(np.float64(rho_init), requires_grad=True),
        )

    _FIELDS = ("conv_in_w", "conv_in_b", "conv_mem_w", "conv_mem_b",
               "conv_att_w", "conv_att_b", "conv_out_w", "conv_out_b", "rho")

    def named_parameters(self, prefix):
        for name in self._FIELDS:
            yield f"{prefix}.{name}", getattr(self, name)


@dataclass
class FusionTrajectory:
    fused: list  # I_f^(0..K), Tensors [N,1,H,W]
    features: list  # per stage (F0, F1, F2, F3)
    attention: list  # per stage raw attribution map arrays [N,1,H,W]
    memories: list  # MemoryState after each stage


@dataclass
class FusionModel:
    config: ModelConfig
    stages: list  # K StageParams
    lstm: ConvLSTMParams
    segnet: SegNetParams

    @classmethod
    def init(cls, config, seed=0):
        rng = np.random.default_rng(seed)
        stages = [StageParams.init(rng, config.channels) for _ in range(config.stages)]
        lstm = ConvLSTMParams.init(rng, config.channels)
        segnet = SegNetParams.init(rng, hidden=config.seg_channels,
                                   num_classes=config.num_classes)
        return cls(config=config, stages=stages, lstm=lstm, segnet=segnet)

    def named_parameters(self):
        for k, stage in enumerate(self.stages, start=1):
            yield from stage.named_parameters(f"fusion.stage{k}")
        yield from self.lstm.named_parameters()
        yield from self.segnet.named_parameters()


def _check_same_shape(*tensors):
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != ref:
            raise ShapeError(f"shape mismatch: {t.shape} vs {ref}")


def init_fused(image_ir, image_vi, w1, w2):
    """I_f^(0) = w1 * I_ir + w2 * I_vi."""
    _check_same_shape(image_ir, image_vi, w1, w2)
    return T.add(T.mul(w1, image_ir), T.mul(w2, image_vi))


def fidelity_gradient(fused, image_ir, image_vi, w1, w2):
    """Gradient of the weighted data-fidelity terms at the current iterate."""
    _check_same_shape(fused, image_ir, image_vi, w1, w2)
    return T.add(T.mul(w1, T.sub(fused, image_ir)),
                 T.mul(w2, T.sub(fused, image_vi)))


def run_stage(fused_prev, image_ir, image_vi, w1, w2, m_s, m_l, att_map, params):
    """One unrolled iteration; returns (I_f^(k), F1, F2, F3).

    att_map is the raw attribution map (1 channel, entering as a constant);
    its sigmoid gates the attention branch, broadcast over the C channels.
    """
    step = T.mul(params.rho, fidelity_gradient(fused_prev, image_ir, image_vi, w1, w2))
    f0 = T.sub(fused_prev, step)
    f1 = T.conv2d(f0, params.conv_in_w, params.conv_in_b)
    f2 = T.relu(T.conv2d(T.concat([f1, m_s, m_l], axis=1),
                         params.conv_mem_w, params.conv_mem_b))
    gate = T.sigmoid(Tensor(np.asarray(att_map, dtype=np.float64)))
    f3 = T.add(T.mul(gate, T.conv2d(f2, params.conv_att_w, params.conv_att_b)), f2)
    fused = T.conv2d(f3, params.conv_out_w, params.conv_out_b)
    return fused, (f0, f1, f2, f3)


def unroll(model, image_ir, image_vi, w1, w2, mask, attention_override=None):
    """Run all K stages and record the full trajectory.

    w1/w2 and the per-stage attention maps enter the graph as constants.
    attention_override, when given, supplies the raw per-stage maps directly
    (used to replay a trajectory or freeze attention for gradient checks).
    """
    cfg = model.config
    ir = image_ir if isinstance(image_ir, Tensor) else Tensor(image_ir)
    vi = image_vi if isinstance(image_vi, Tensor) else Tensor(image_vi)
    w1 = w1.detach() if isinstance(w1, Tensor) else Tensor(w1)
    w2 = w2.detach() if isinstance(w2, Tensor) else Tensor(w2)
    n, _, h, w = ir.shape

    fused = [init_fused(ir, vi, w1, w2)]
    state = MemoryState.initial(n, cfg.channels, h, w)
    zero_mem = T.zeros((n, cfg.channels, h, w))
    zero_att = np.zeros((n, 1, h, w))
    features, attention, memories = [], [], []

    for k in range(1, cfg.stages + 1):
        if attention_override is not None:
            att = attention_override[k - 1]
        elif cfg.ablate.no_attention or k == 1:
            att = zero_att
        elif cfg.ablate.grad_instead_of_ig:
            att = attribution.grad_attribution_map(model.segnet, fused[-1], mask).values
        else:
            att = attribution.unfolding_attribution_map(model.segnet, fused, mask).values
        m_s = zero_mem if cfg.ablate.no_ms else state.m_s
        m_l = zero_mem if cfg.ablate.no_ml else state.m_l
        out, (f0, f1, f2, f3) = run_stage(fused[-1], ir, vi, w1, w2, m_s, m_l,
                                          att, model.stages[k - 1])
        state = update_memories(f1, f2, f3, state, model.lstm)
        fused.append(out)
        features.append((f0, f1, f2, f3))
        attention.append(att)
        memories.append(state)

    return FusionTrajectory(fused=fused, features=features,
                            attention=attention, memories=memories)


def infer(model, image_ir, image_vi, mask=None):
    """Full inference pass: mask (predicted when absent), weights, trajectory."""
    ir = image_ir if isinstance(image_ir, Tensor) else Tensor(image_ir)
    vi = image_vi if isinstance(image_vi, Tensor) else Tensor(image_vi)
    if mask is None:
        mask = attribution.predict_mask(model.segnet, ir, vi)
    weights = attribution.attribution_weights(model.segnet, ir, vi, mask,
                                              model.config.ig_steps, eps=model.config.eps)
    traj = unroll(model, ir, vi, Tensor(weights.w1), Tensor(weights.w2), mask)
    return traj, weights, mask

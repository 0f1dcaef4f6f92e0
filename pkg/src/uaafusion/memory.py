"""Cross-stage memory: short-term feature carry plus a ConvLSTM long-term path."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .segnet import he_uniform
from .tensor import Tensor


@dataclass
class MemoryState:
    m_s: Tensor
    m_l: Tensor
    h: Tensor
    c: Tensor

    @classmethod
    def initial(cls, n, channels, height, width):
        shape = (n, channels, height, width)
        return cls(T.zeros(shape), T.zeros(shape), T.zeros(shape), T.zeros(shape))


@dataclass
class ConvLSTMParams:
    """Gate convolutions over z=[F1,F2,F3] (3C ch) and hidden state (C ch)."""

    w_zi: Tensor
    w_hi: Tensor
    b_i: Tensor
    w_zf: Tensor
    w_hf: Tensor
    b_f: Tensor
    w_zc: Tensor
    w_hc: Tensor
    b_c: Tensor
    w_zo: Tensor
    w_ho: Tensor
    b_o: Tensor
    w_ml: Tensor
    b_ml: Tensor

    _FIELDS = ("w_zi", "w_hi", "b_i", "w_zf", "w_hf", "b_f", "w_zc", "w_hc", "b_c",
               "w_zo", "w_ho", "b_o", "w_ml", "b_ml")

    @classmethod
    def init(cls, rng, channels):
        c = channels

        def kz():
            return Tensor(he_uniform(rng, (c, 3 * c, 3, 3)), requires_grad=True)

        def kh():
            return Tensor(he_uniform(rng, (c, c, 3, 3)), requires_grad=True)

        def bias(value=0.0):
            return Tensor(np.full(c, value), requires_grad=True)

        # forget-gate bias starts at 1.0, standard LSTM practice
        return cls(w_zi=kz(), w_hi=kh(), b_i=bias(),
                   w_zf=kz(), w_hf=kh(), b_f=bias(1.0),
                   w_zc=kz(), w_hc=kh(), b_c=bias(),
                   w_zo=kz(), w_ho=kh(), b_o=bias(),
                   w_ml=kh(), b_ml=bias())

    def named_parameters(self, prefix="memory"):
        for name in self._FIELDS:
            yield f"{prefix}.{name}", getattr(self, name)


def convlstm_step(z, h_prev, c_prev, params):
    """One ConvLSTM update: gates from z and h_prev, returns (h, c)."""
    def gate(wz, wh, b):
        return T.add(T.conv2d(z, wz, b), T.conv2d(h_prev, wh, Tensor(np.zeros(wh.shape[0]))))

    i = T.sigmoid(gate(params.w_zi, params.w_hi, params.b_i))
    f = T.sigmoid(gate(params.w_zf, params.w_hf, params.b_f))
    g = T.tanh(gate(params.w_zc, params.w_hc, params.b_c))
    o = T.sigmoid(gate(params.w_zo, params.w_ho, params.b_o))
    c = T.add(T.mul(f, c_prev), T.mul(i, g))
    h = T.mul(o, T.tanh(c))
    return h, c


def update_memories(f1, f2, f3, state, params):
    """Advance memory after a stage: m_s <- F3, ConvLSTM over Cat(F1,F2,F3)."""
    z = T.concat([f1, f2, f3], axis=1)
    h, c = convlstm_step(z, state.h, state.c, params)
    m_l = T.conv2d(h, params.w_ml, params.b_ml)
    return MemoryState(m_s=f3, m_l=m_l, h=h, c=c)

import numpy as np

from uaafusion import tensor as T
from uaafusion.memory import ConvLSTMParams, MemoryState, convlstm_step, update_memories
from uaafusion.tensor import Tensor


def make_params(seed=0, channels=2):
    return ConvLSTMParams.init(np.random.default_rng(seed), channels)


def zero_params(channels=2):
    params = make_params(channels=channels)
    for _, p in params.named_parameters():
        p.data = np.zeros_like(p.data)
    return params


def test_zero_everything_closed_form():
    c = 2
    params = zero_params(c)
    z = Tensor(np.zeros((1, 3 * c, 4, 4)))
    h_prev = Tensor(np.zeros((1, c, 4, 4)))
    c_prev = Tensor(np.zeros((1, c, 4, 4)))
    h, cell = convlstm_step(z, h_prev, c_prev, params)
    assert np.all(cell.data == 0.0)
    assert np.all(h.data == 0.0)


def test_zero_params_nonzero_cell_closed_form():
    # all gates sit at sigmoid(0)=0.5, so c = 0.5*kappa and h = 0.5*tanh(0.5*kappa)
    c = 2
    kappa = 0.8
    params = zero_params(c)
    z = Tensor(np.zeros((1, 3 * c, 4, 4)))
    h_prev = Tensor(np.zeros((1, c, 4, 4)))
    c_prev = Tensor(np.full((1, c, 4, 4), kappa))
    h, cell = convlstm_step(z, h_prev, c_prev, params)
    assert np.max(np.abs(cell.data - 0.5 * kappa)) <= 1e-12
    assert np.max(np.abs(h.data - 0.5 * np.tanh(0.5 * kappa))) <= 1e-12


def test_random_micro_case_vs_primitive_oracle(rng):
    c = 2
    params = make_params(seed=7, channels=c)
    z = Tensor(rng.uniform(-1, 1, (1, 3 * c, 4, 4)))
    h_prev = Tensor(rng.uniform(-1, 1, (1, c, 4, 4)))
    c_prev = Tensor(rng.uniform(-1, 1, (1, c, 4, 4)))
    h, cell = convlstm_step(z, h_prev, c_prev, params)

    # hand-composed from tensor-core primitives, gate equations line by line
    zb = Tensor(np.zeros(c))

    def affine(wz, wh, b):
        return T.add(T.conv2d(z, wz, b), T.conv2d(h_prev, wh, zb))

    i = T.sigmoid(affine(params.w_zi, params.w_hi, params.b_i))
    f = T.sigmoid(affine(params.w_zf, params.w_hf, params.b_f))
    g = T.tanh(affine(params.w_zc, params.w_hc, params.b_c))
    o = T.sigmoid(affine(params.w_zo, params.w_ho, params.b_o))
    cell_ref = T.add(T.mul(f, c_prev), T.mul(i, g))
    h_ref = T.mul(o, T.tanh(cell_ref))
    assert np.max(np.abs(cell.data - cell_ref.data)) <= 1e-12
    assert np.max(np.abs(h.data - h_ref.data)) <= 1e-12


def test_gate_ranges_and_h_bound(rng):
    c = 2
    params = make_params(seed=1, channels=c)
    for _ in range(50):
        z = Tensor(rng.uniform(-3, 3, (1, 3 * c, 3, 3)))
        h_prev = Tensor(rng.uniform(-1, 1, (1, c, 3, 3)))
        c_prev = Tensor(rng.uniform(-1, 1, (1, c, 3, 3)))
        h, _ = convlstm_step(z, h_prev, c_prev, params)
        assert np.all(np.abs(h.data) <= 1.0)


def test_update_memories_ms_is_f3_bitwise(rng):
    c = 2
    params = make_params(channels=c)
    state = MemoryState.initial(1, c, 4, 4)
    f1, f2, f3 = (Tensor(rng.uniform(-1, 1, (1, c, 4, 4))) for _ in range(3))
    new = update_memories(f1, f2, f3, state, params)
    assert new.m_s is f3


def test_two_sequential_updates_replay(rng):
    c = 2
    params = make_params(seed=5, channels=c)
    feats = [tuple(Tensor(rng.uniform(-1, 1, (1, c, 4, 4))) for _ in range(3))
             for _ in range(2)]

    state = MemoryState.initial(1, c, 4, 4)
    for f1, f2, f3 in feats:
        state = update_memories(f1, f2, f3, state, params)

    # manual replay through the primitives
    manual = MemoryState.initial(1, c, 4, 4)
    for f1, f2, f3 in feats:
        z = T.concat([f1, f2, f3], axis=1)
        h, cell = convlstm_step(z, manual.h, manual.c, params)
        m_l = T.conv2d(h, params.w_ml, params.b_ml)
        manual = MemoryState(m_s=f3, m_l=m_l, h=h, c=cell)

    assert np.array_equal(state.m_l.data, manual.m_l.data)
    assert np.array_equal(state.h.data, manual.h.data)
    assert np.array_equal(state.c.data, manual.c.data)

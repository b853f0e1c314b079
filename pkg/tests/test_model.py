import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varade.model import ConfigError, VaradeConfig, build, forward, parameter_count
from varade.tensor import ShapeError, Tensor, conv1d


def closed_form_count(t, c, base):
    """Parameter count from the geometry rules alone."""
    layers = int(math.log2(t)) - 1
    total, c_in = 0, c
    for i in range(1, layers + 1):
        maps = base * 2 ** ((i - 1) // 2)
        total += maps * c_in * 2 + maps
        c_in = maps
    return total + (2 * c_in) * (2 * c) + 2 * c


def reference_forward(model, x):
    """Loop-level forward pass, float64."""
    h = np.asarray(x, dtype=np.float64)
    for w, b in model.conv:
        w, b = w.data.astype(np.float64), b.data.astype(np.float64)
        out = np.zeros((w.shape[0], h.shape[1] // 2))
        for t in range(out.shape[1]):
            out[:, t] = b + w[:, :, 0] @ h[:, 2 * t] + w[:, :, 1] @ h[:, 2 * t + 1]
        h = np.maximum(out, 0)
    hw, hb = (p.data.astype(np.float64) for p in model.head)
    z = hw @ h.reshape(-1) + hb
    c = model.config.channels
    return z[:c], np.clip(z[c:], *model.config.logvar_clamp)


def test_default_geometry():
    cfg = VaradeConfig()
    assert cfg.n_layers == 8
    assert cfg.feature_maps == [128, 128, 256, 256, 512, 512, 1024, 1024]


def test_t16_geometry():
    assert VaradeConfig(window=16).feature_maps == [128, 128, 256]


def test_smallest_geometry():
    cfg = VaradeConfig(window=4, channels=1, base_maps=1)
    m = build(cfg)
    assert len(m.conv) == 1
    assert cfg.head_inputs == 2
    assert m.head[0].shape == (2, 2)
    assert parameter_count(m) == 9


@pytest.mark.parametrize("t, c, base", [(512, 86, 128), (16, 3, 2), (64, 86, 32), (4, 1, 1)])
def test_parameter_count_closed_form(t, c, base):
    assert parameter_count(build(VaradeConfig(window=t, channels=c, base_maps=base))) == closed_form_count(t, c, base)


@pytest.mark.parametrize("t", [0, 2, 3, 6, 100, 513])
def test_window_must_be_power_of_two(t):
    with pytest.raises(ConfigError):
        VaradeConfig(window=t)


@pytest.mark.parametrize("kw", [dict(channels=0), dict(base_maps=0), dict(kl_weight=-1.0), dict(logvar_clamp=(1, 1))])
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        VaradeConfig(**kw)


def test_stack_reduces_512_to_two():
    m = build(VaradeConfig(window=512, channels=2, base_maps=1))
    h = Tensor(np.ones((2, 512)))
    lengths = []
    for w, b in m.conv:
        h = conv1d(h, w, b)
        lengths.append(h.shape[1])
    assert lengths == [256, 128, 64, 32, 16, 8, 4, 2]


def test_zero_graph():
    m = build(VaradeConfig(window=8, channels=3, base_maps=2))
    for p in m.parameters():
        p.data[...] = 0
    mu, lv = forward(m, np.zeros((3, 8)))
    np.testing.assert_array_equal(mu.data, 0)
    np.testing.assert_array_equal(lv.data, 0)


def test_init_bounds_and_zero_bias():
    m = build(VaradeConfig(window=16, channels=5, base_maps=4), seed=3)
    c_in = 5
    for w, b in m.conv:
        assert np.all(np.abs(w.data) <= math.sqrt(1 / (2 * c_in)))
        assert not b.data.any()
        c_in = w.shape[0]
    assert np.all(np.abs(m.head[0].data) <= math.sqrt(1 / m.config.head_inputs))


def test_build_is_seeded():
    cfg = VaradeConfig(window=8, channels=2, base_maps=2)
    a, b, c = build(cfg, seed=1), build(cfg, seed=1), build(cfg, seed=2)
    assert all(np.array_equal(p.data, q.data) for p, q in zip(a.parameters(), b.parameters()))
    assert not all(np.array_equal(p.data, q.data) for p, q in zip(a.parameters(), c.parameters()))


@settings(max_examples=30, deadline=None)
@given(st.sampled_from([4, 8, 16, 32]), st.integers(1, 4), st.integers(1, 4), st.integers(0, 1000))
def test_forward_matches_reference(t, c, base, seed):
    m = build(VaradeConfig(window=t, channels=c, base_maps=base), seed=seed, dtype=np.float64)
    x = np.random.default_rng(seed).uniform(-1, 1, (c, t))
    mu, lv = forward(m, x)
    ref_mu, ref_lv = reference_forward(m, x)
    np.testing.assert_allclose(mu.data, ref_mu, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(lv.data, ref_lv, rtol=1e-10, atol=1e-12)


def test_logvar_is_clamped():
    m = build(VaradeConfig(window=4, channels=1, base_maps=1, logvar_clamp=(-1.0, 1.0)))
    m.head[1].data[:] = [0.0, 50.0]
    _, lv = forward(m, np.zeros((1, 4)))
    assert lv.data[0] == 1.0
    m.head[1].data[:] = [0.0, -50.0]
    _, lv = forward(m, np.zeros((1, 4)))
    assert lv.data[0] == -1.0


def test_batched_forward_equals_single():
    m = build(VaradeConfig(window=16, channels=3, base_maps=2), seed=0)
    x = np.random.default_rng(0).uniform(-1, 1, (4, 3, 16)).astype(np.float32)
    mu_b, lv_b = forward(m, x)
    for i in range(4):
        mu, lv = forward(m, x[i])
        np.testing.assert_allclose(mu_b.data[i], mu.data, rtol=1e-6, atol=1e-7)
        np.testing.assert_allclose(lv_b.data[i], lv.data, rtol=1e-6, atol=1e-7)


def test_forward_shape_error():
    m = build(VaradeConfig(window=8, channels=2, base_maps=1))
    with pytest.raises(ShapeError):
        forward(m, np.zeros((3, 8)))
    with pytest.raises(ShapeError):
        forward(m, np.zeros((2, 16)))


def test_astype_and_copy_are_independent():
    m = build(VaradeConfig(window=8, channels=2, base_maps=1))
    d = m.astype(np.float64)
    assert d.dtype == np.float64
    c = m.copy()
    c.head[1].data[:] = 7
    assert not np.any(m.head[1].data == 7)
    assert isinstance(c.head[0], Tensor)

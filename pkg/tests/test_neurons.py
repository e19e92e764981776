"""LIF dynamics against a scalar reference, surrogate consistency, encoding."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spikederain import autodiff as ad, neurons
from spikederain.neurons import LifConfig, NeuronState
from spikederain.testing import check_gradients


@pytest.fixture(autouse=True)
def fp64():
    with ad.precision(np.float64):
        yield


def scalar_lif_reference(x_seq, cfg):
    """Per-site Python-float unroll of the membrane equations.

    Independent of the vectorized path: plain nested loops over every site,
    one float at a time.
    """
    t_steps = x_seq.shape[0]
    site_shape = x_seq.shape[1:]
    spikes = np.zeros_like(x_seq)
    flat = x_seq.reshape(t_steps, -1)
    out = spikes.reshape(t_steps, -1)
    for site in range(flat.shape[1]):
        u = cfg.v_reset
        for t in range(t_steps):
            x = flat[t, site]
            h = u + (x - (u - cfg.v_reset)) * (1.0 / cfg.tau)
            s = 1.0 if h - cfg.v_threshold >= 0.0 else 0.0
            u = (cfg.beta * h) * (1.0 - s) + cfg.v_reset * s
            out[t, site] = s
    return spikes.reshape((t_steps,) + site_shape)


def test_direct_encode_copies():
    rng = np.random.default_rng(0)
    x = ad.Tensor(rng.normal(size=(2, 3, 4, 4)))
    one = neurons.direct_encode(x, 1)
    np.testing.assert_array_equal(one.data[0], x.data)
    four = neurons.direct_encode(x, 4)
    assert four.shape == (4, 2, 3, 4, 4)
    for t in range(4):
        np.testing.assert_array_equal(four.data[t], x.data)


def test_direct_encode_rejects_zero_steps():
    with pytest.raises(ad.ContractError):
        neurons.direct_encode(ad.Tensor(np.zeros((1, 1, 2, 2))), 0)


def test_direct_encode_fanout_gradient():
    x = ad.parameter(np.ones((1, 1, 2, 2)))
    neurons.direct_encode(x, 5).sum().backward()
    np.testing.assert_array_equal(x.grad, np.full(x.shape, 5.0))


def test_lif_step_spike_and_reset():
    cfg = LifConfig(tau=1.0, v_threshold=1.0, v_reset=0.0, beta=0.5)
    state = NeuronState.initial((1,), cfg, dtype=np.float64)
    s, new = neurons.lif_step(ad.Tensor(np.array([1.5])), state, cfg)
    assert s.data[0] == 1.0            # tau=1 makes h = x = 1.5 >= threshold
    assert new.u.data[0] == 0.0        # spike resets to v_reset


def test_lif_step_subthreshold_hand_case():
    cfg = LifConfig(tau=2.0, v_threshold=1.0, v_reset=0.0, beta=0.5)
    state = NeuronState(u=ad.Tensor(np.array([0.5])))
    s, new = neurons.lif_step(ad.Tensor(np.array([0.6])), state, cfg)
    # h = 0.5 + 0.5*(0.6 - 0.5) = 0.55 < 1 -> no spike, u = beta*h = 0.275
    assert s.data[0] == 0.0
    np.testing.assert_allclose(new.u.data[0], 0.275, rtol=1e-12)


def test_quiescent_neuron_stays_silent():
    cfg = LifConfig()
    seq = ad.Tensor(np.zeros((6, 1, 1, 2, 2)))
    spikes = neurons.lif_unroll(seq, cfg)
    np.testing.assert_array_equal(spikes.data, np.zeros_like(seq.data))


def test_threshold_boundary_fires():
    # step(0) = 1: h exactly at threshold must spike
    cfg = LifConfig(tau=1.0, v_threshold=1.0, v_reset=0.0)
    state = NeuronState.initial((1,), cfg, dtype=np.float64)
    s, _ = neurons.lif_step(ad.Tensor(np.array([1.0])), state, cfg)
    assert s.data[0] == 1.0


def test_unroll_matches_scalar_reference():
    rng = np.random.default_rng(1)
    cfg = LifConfig(tau=2.0, v_threshold=1.0, v_reset=0.0, beta=0.5)
    x = rng.normal(loc=0.8, scale=0.8, size=(4, 2, 1, 4, 4))
    got = neurons.lif_unroll(ad.Tensor(x), cfg)
    want = scalar_lif_reference(x, cfg)
    np.testing.assert_array_equal(got.data, want)


def test_unroll_t1_equals_single_step():
    rng = np.random.default_rng(2)
    cfg = LifConfig()
    x = rng.normal(size=(1, 2, 3, 2, 2))
    seq = neurons.lif_unroll(ad.Tensor(x), cfg)
    state = NeuronState.initial(x.shape[1:], cfg, dtype=x.dtype)
    s, _ = neurons.lif_step(ad.Tensor(x[0]), state, cfg)
    np.testing.assert_array_equal(seq.data[0], s.data)


def test_spikes_are_binary():
    rng = np.random.default_rng(3)
    x = rng.normal(scale=2.0, size=(5, 2, 2, 3, 3))
    spikes = neurons.lif_unroll(ad.Tensor(x), LifConfig())
    assert set(np.unique(spikes.data)) <= {0.0, 1.0}
    rate = neurons.spike_rate(spikes)
    assert 0.0 <= rate <= 1.0


def test_reset_correctness_across_time():
    rng = np.random.default_rng(4)
    cfg = LifConfig(v_reset=0.25, v_threshold=1.0)
    x = rng.normal(loc=1.0, size=(6, 1, 1, 3, 3))
    state = NeuronState.initial(x.shape[1:], cfg, dtype=x.dtype)
    for t in range(6):
        s, state = neurons.lif_step(ad.Tensor(x[t]), state, cfg)
        fired = s.data == 1.0
        np.testing.assert_array_equal(state.u.data[fired], np.full(fired.sum(), cfg.v_reset))


def test_batch_permutation_equivariance():
    rng = np.random.default_rng(5)
    x = rng.normal(loc=0.5, size=(3, 4, 2, 2, 2))
    perm = np.array([2, 0, 3, 1])
    out = neurons.lif_unroll(ad.Tensor(x), LifConfig()).data
    out_perm = neurons.lif_unroll(ad.Tensor(x[:, perm]), LifConfig()).data
    np.testing.assert_array_equal(out[:, perm], out_perm)


def test_single_step_monotone_in_drive():
    cfg = LifConfig()
    grid = np.linspace(-3.0, 5.0, 801).reshape(1, -1)
    spikes = neurons.lif_unroll(ad.Tensor(grid), cfg).data[0]
    assert np.all(np.diff(spikes) >= 0.0)  # nondecreasing step function


@settings(max_examples=60, deadline=None)
@given(
    tau=st.floats(0.5, 8.0),
    beta=st.floats(0.0, 1.0),
    vthr=st.floats(0.2, 2.5),
    t_steps=st.integers(1, 8),
    seed=st.integers(0, 2**32 - 1),
)
def test_property_unroll_equals_reference(tau, beta, vthr, t_steps, seed):
    with ad.precision(np.float64):
        cfg = LifConfig(tau=tau, v_threshold=vthr, v_reset=vthr - 1.0, beta=beta)
        rng = np.random.default_rng(seed)
        x = rng.normal(loc=vthr * 0.7, scale=1.0, size=(t_steps, 1, 1, 2, 2))
        got = neurons.lif_unroll(ad.Tensor(x), cfg).data
        want = scalar_lif_reference(x, cfg)
        np.testing.assert_array_equal(got, want)
        assert set(np.unique(got)) <= {0.0, 1.0}


def test_surrogate_grad_values():
    assert neurons.surrogate_grad(np.array(0.0), 4.0) == pytest.approx(1.0, abs=1e-12)
    assert neurons.surrogate_grad(np.array(40.0), 4.0) == pytest.approx(0.0, abs=1e-12)
    assert neurons.surrogate_grad(np.array(-40.0), 4.0) == pytest.approx(0.0, abs=1e-12)


def test_surrogate_matches_sigmoid_derivative():
    # numeric derivative of sig(alpha*x) at x = 0.5, alpha = 4
    alpha, x, eps = 4.0, 0.5, 1e-6

    def sig(v):
        return 1.0 / (1.0 + np.exp(-alpha * v))

    numeric = (sig(x + eps) - sig(x - eps)) / (2 * eps)
    assert neurons.surrogate_grad(np.array(x), alpha) == pytest.approx(numeric, abs=1e-6)


def test_surrogate_analytic_consistency():
    rng = np.random.default_rng(6)
    xs = rng.normal(scale=2.0, size=512)
    for alpha in (1.0, 4.0, 9.5):
        sig = 1.0 / (1.0 + np.exp(-alpha * xs))
        np.testing.assert_allclose(
            neurons.surrogate_grad(xs, alpha), alpha * sig * (1 - sig), atol=1e-9
        )


def test_spike_fn_backward_uses_surrogate():
    v = ad.parameter(np.array([0.0, 0.3, -0.7]))
    s = neurons.spike_fn(v, 4.0)
    s.sum().backward()
    np.testing.assert_allclose(v.grad, neurons.surrogate_grad(v.data, 4.0), rtol=1e-12)


def test_smooth_mode_gradcheck_single_neuron():
    rng = np.random.default_rng(7)
    cfg = LifConfig()
    x = ad.parameter(rng.normal(loc=0.8, scale=0.5, size=(3, 1, 1, 2, 2)))
    with neurons.smooth_spikes():
        check_gradients(lambda: neurons.lif_unroll(x, cfg).sum(), [x], rtol=1e-5)

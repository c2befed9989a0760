import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eorl.nn import (Adam, Batch, MlpSpec, NumericalError, Sgd, flatten_params, forward,
                     init_network, load_params, loss_and_grad, make_optimizer, train_batch,
                     train_step)
from oracles import finite_difference_gradient, mc_loss, mlp_forward, near_kink


def random_batch(rng, spec, size=8):
    return Batch(rng.uniform(-1, 1, size=(size, spec.input_size)),
                 rng.integers(spec.output_size, size=size),
                 rng.uniform(-3, 3, size=size))


def _loss(net, batch, weights):
    q = forward(net, batch.states)[np.arange(len(batch.actions)), batch.actions]
    r = q - batch.returns
    w = np.ones_like(r) if weights is None else weights
    return float(np.mean(w * r * r))


def max_relative_error(analytic, numeric, floor=1e-6):
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


# --- spec and init --------------------------------------------------------

def test_param_count_for_bitflip_architecture():
    assert MlpSpec(6, (32, 8), 6).n_params == 6 * 32 + 32 + 32 * 8 + 8 + 8 * 6 + 6
    assert MlpSpec(6, (32, 8), 6).n_params == 542


def test_same_seed_gives_identical_parameters():
    spec = MlpSpec(6, (32, 8), 6)
    a = init_network(spec, np.random.default_rng(7))
    b = init_network(spec, np.random.default_rng(7))
    assert a.params.tobytes() == b.params.tobytes()


def test_biases_zero_after_init():
    net = init_network(MlpSpec(4, (32, 8), 4), np.random.default_rng(1))
    for b in net.biases:
        assert np.all(b == 0.0)


def test_init_weights_within_fan_in_bound():
    net = init_network(MlpSpec(6, (32, 8), 6), np.random.default_rng(2))
    for w in net.weights:
        assert np.all(np.abs(w) <= 1 / np.sqrt(w.shape[0]))


@pytest.mark.parametrize("bad", [dict(input_size=0), dict(hidden_sizes=(32, 0)),
                                 dict(output_size=0)])
def test_invalid_spec_rejected(bad):
    kwargs = dict(input_size=4, hidden_sizes=(32, 8), output_size=4) | bad
    with pytest.raises(ValueError):
        MlpSpec(**kwargs)


# --- forward --------------------------------------------------------------

def test_zero_parameters_give_zero_q_values():
    spec = MlpSpec(6, (32, 8), 6)
    net = load_params(init_network(spec, np.random.default_rng(0)), np.zeros(spec.n_params))
    q = forward(net, np.random.default_rng(1).normal(size=(5, 6)))
    assert np.all(q == 0.0)


def test_hand_set_weights_give_relu_pattern():
    # hidden layer = identity, output = identity: q = ReLU(x)
    spec = MlpSpec(3, (3,), 3)
    net = init_network(spec, np.random.default_rng(0))
    net.weights[0][:] = np.eye(3)
    net.weights[1][:] = np.eye(3)
    for b in net.biases:
        b[:] = 0
    x = np.array([-1.5, 0.0, 2.25])
    np.testing.assert_array_equal(forward(net, x), [0.0, 0.0, 2.25])


@pytest.mark.parametrize("spec", [MlpSpec(6, (32, 8), 6), MlpSpec(4, (32, 8), 4),
                                  MlpSpec(12, (32, 8), 6), MlpSpec(8, (32, 8), 4)])
def test_forward_matches_loop_oracle(spec):
    rng = np.random.default_rng(3)
    net = init_network(spec, rng)
    net.params[:] += rng.normal(0, 0.1, size=spec.n_params)  # non-zero biases too
    states = rng.uniform(-1, 1, size=(10, spec.input_size))
    q = forward(net, states)
    for s, row in zip(states, q):
        np.testing.assert_allclose(row, mlp_forward(spec.layer_sizes, net.params, s),
                                   rtol=0, atol=1e-12)


def test_single_state_and_batch_agree():
    spec = MlpSpec(4, (32, 8), 4)
    net = init_network(spec, np.random.default_rng(4))
    s = np.random.default_rng(5).uniform(size=(3, 4))
    np.testing.assert_allclose(forward(net, s[1]), forward(net, s)[1], atol=1e-15)


def test_state_dimension_mismatch_raises():
    net = init_network(MlpSpec(6, (32, 8), 6), np.random.default_rng(0))
    with pytest.raises(ValueError, match="dimension"):
        forward(net, np.zeros(5))


# --- training -------------------------------------------------------------

def test_targets_equal_q_give_zero_loss_and_no_change():
    spec = MlpSpec(4, (32, 8), 4)
    rng = np.random.default_rng(6)
    net = init_network(spec, rng)
    batch = random_batch(rng, spec)
    q = forward(net, batch.states)[np.arange(8), batch.actions]
    batch = batch._replace(returns=q)
    before = net.params.copy()
    loss = train_batch(net, batch, learning_rate=0.1)
    assert loss == 0.0
    np.testing.assert_array_equal(net.params, before)


def test_zero_learning_rate_leaves_parameters_and_returns_loss():
    spec = MlpSpec(4, (32, 8), 4)
    rng = np.random.default_rng(7)
    net = init_network(spec, rng)
    batch = random_batch(rng, spec)
    before = net.params.copy()
    loss = train_batch(net, batch, learning_rate=0.0)
    np.testing.assert_array_equal(net.params, before)
    assert loss == pytest.approx(_loss(net, batch, None), rel=1e-12)
    assert loss > 0


def test_loss_matches_loop_oracle():
    spec = MlpSpec(6, (32, 8), 6)
    rng = np.random.default_rng(8)
    net = init_network(spec, rng)
    batch = random_batch(rng, spec, size=5)
    w = rng.uniform(0.1, 1, size=5)
    loss, _, residuals = loss_and_grad(net, batch, w)
    expected = mc_loss(spec.layer_sizes, net.params, batch.states, batch.actions,
                       batch.returns, w)
    assert loss == pytest.approx(expected, rel=1e-12)
    assert residuals.shape == (5,)


@pytest.mark.parametrize("spec", [MlpSpec(6, (32, 8), 6), MlpSpec(4, (32, 8), 4)])
@pytest.mark.parametrize("weighted", [False, True])
def test_gradient_matches_finite_differences(spec, weighted):
    rng = np.random.default_rng(9)
    net = init_network(spec, rng)
    net.params[:] += rng.normal(0, 0.05, size=spec.n_params)
    batch = random_batch(rng, spec)
    while near_kink(spec.layer_sizes, net.params, batch.states):
        batch = random_batch(rng, spec)
    w = rng.uniform(0.2, 1.0, size=8) if weighted else None
    _, grad, _ = loss_and_grad(net, batch, w)
    numeric = finite_difference_gradient(spec.layer_sizes, net.params, *batch, w, h=1e-5)
    assert max_relative_error(grad, numeric) < 1e-4


def test_only_selected_action_output_receives_gradient():
    spec = MlpSpec(4, (32, 8), 4)
    rng = np.random.default_rng(10)
    net = init_network(spec, rng)
    batch = Batch(rng.uniform(size=(6, 4)), np.full(6, 2), rng.normal(size=6))
    _, grad, _ = loss_and_grad(net, batch)
    g = init_network(spec, rng)
    g.params[:] = grad
    assert np.all(g.weights[-1][:, [0, 1, 3]] == 0)
    assert np.all(g.biases[-1][[0, 1, 3]] == 0)
    assert np.any(g.weights[-1][:, 2] != 0)


def test_sgd_step_reduces_loss():
    spec = MlpSpec(4, (32, 8), 4)
    rng = np.random.default_rng(11)
    net = init_network(spec, rng)
    batch = random_batch(rng, spec, size=32)
    first = train_batch(net, batch, learning_rate=0.01)
    assert _loss(net, batch, None) < first


def test_non_finite_loss_raises_numerical_error_with_episode():
    spec = MlpSpec(4, (32, 8), 4)
    rng = np.random.default_rng(12)
    net = init_network(spec, rng)
    batch = random_batch(rng, spec)._replace(returns=np.full(8, np.nan))
    with pytest.raises(NumericalError) as info:
        train_batch(net, batch, episode=17)
    assert info.value.episode == 17


def test_adam_first_step_moves_each_param_by_learning_rate():
    params = np.array([1.0, -2.0, 3.0])
    grad = np.array([0.5, -4.0, 1e-3])
    opt = Adam(3, learning_rate=0.01, eps=1e-12)
    opt.step(params, grad)
    np.testing.assert_allclose(params, [0.99, -1.99, 2.99], atol=1e-8)


def test_adam_reset_restores_first_step_behaviour():
    opt = Adam(2, learning_rate=0.1)
    a = np.zeros(2)
    opt.step(a, np.array([1.0, 1.0]))
    opt.step(a, np.array([-5.0, 0.1]))
    opt.reset()
    b = np.zeros(2)
    opt.step(b, np.array([1.0, 1.0]))
    fresh = np.zeros(2)
    Adam(2, learning_rate=0.1).step(fresh, np.array([1.0, 1.0]))
    np.testing.assert_array_equal(b, fresh)


def test_make_optimizer():
    assert isinstance(make_optimizer("sgd", 3, 0.1), Sgd)
    assert isinstance(make_optimizer("adam", 3, 0.1), Adam)
    with pytest.raises(ValueError):
        make_optimizer("rmsprop", 3, 0.1)


def test_train_step_float32_keeps_dtype():
    spec = MlpSpec(4, (32, 8), 4)
    rng = np.random.default_rng(13)
    net = init_network(spec, rng, dtype=np.float32)
    loss, residuals = train_step(net, random_batch(rng, spec), Adam(spec.n_params))
    assert net.params.dtype == np.float32
    assert np.isfinite(loss)


# --- parameter vectors ----------------------------------------------------

def test_flatten_load_round_trip():
    spec = MlpSpec(6, (32, 8), 6)
    rng = np.random.default_rng(14)
    src = init_network(spec, rng)
    dst = load_params(init_network(spec, np.random.default_rng(99)), flatten_params(src))
    states = rng.uniform(size=(100, 6))
    np.testing.assert_array_equal(forward(src, states), forward(dst, states))


def test_load_all_zeros_gives_zero_forward():
    spec = MlpSpec(6, (32, 8), 6)
    net = load_params(init_network(spec, np.random.default_rng(0)), np.zeros(542))
    assert np.all(forward(net, np.ones((3, 6))) == 0)


def test_perturb_one_scalar_changes_exactly_one_parameter():
    spec = MlpSpec(6, (32, 8), 6)
    net = init_network(spec, np.random.default_rng(15))
    flat = flatten_params(net)
    flat[100] += 1.0
    other = load_params(net.copy(), flat)
    assert np.count_nonzero(other.params != net.params) == 1


def test_flatten_returns_a_copy():
    net = init_network(MlpSpec(4, (32, 8), 4), np.random.default_rng(0))
    flat = flatten_params(net)
    flat[:] = 0
    assert np.any(net.params != 0)


def test_load_wrong_length_raises():
    net = init_network(MlpSpec(4, (32, 8), 4), np.random.default_rng(0))
    with pytest.raises(ValueError):
        load_params(net, np.zeros(net.n_params + 1))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 7), st.lists(st.integers(1, 9), min_size=1, max_size=3), st.integers(1, 5),
       st.integers(0, 2**32 - 1))
def test_param_count_and_views_cover_flat_vector(n_in, hidden, n_out, seed):
    spec = MlpSpec(n_in, tuple(hidden), n_out)
    net = init_network(spec, np.random.default_rng(seed))
    sizes = spec.layer_sizes
    assert spec.n_params == sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    assert sum(w.size + b.size for w, b in zip(net.weights, net.biases)) == net.n_params
    x = np.random.default_rng(seed).uniform(-1, 1, size=n_in)
    np.testing.assert_allclose(forward(net, x), mlp_forward(sizes, net.params, x), atol=1e-12)

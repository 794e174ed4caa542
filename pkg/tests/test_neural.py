from __future__ import annotations

import numpy as np
import pytest

from peec.neural import Adam, Dense, LSTMCell, Module, ShapeError, Tape, Tensor
from peec.neural import tensor as T
from peec.neural.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from peec.neural.gradcheck import check_gradients, numeric_gradient, random_network_case, relative_error


def test_matmul_example():
    a = Tensor([[1.0, 2.0]])
    b = Tensor([[3.0], [4.0]])
    assert T.matmul(a, b).item() == 11.0


def test_tanh_and_its_derivative_at_zero():
    x = Tensor(0.0, requires_grad=True)
    with Tape() as tape:
        y = T.tanh(x)
        tape.backward(y)
    assert y.item() == 0.0 and x.grad == pytest.approx(1.0)


def test_square_gradient():
    x = Tensor(3.0, requires_grad=True)
    with Tape() as tape:
        tape.backward(T.square(x))
    assert float(x.grad) == 6.0


def test_mean_of_copies():
    x = Tensor(2.0, requires_grad=True)
    with Tape() as tape:
        tape.backward(T.mean(T.concat([T.reshape(x, (1,))] * 5)))
    assert float(x.grad) == pytest.approx(1.0)


def test_non_scalar_loss_rejected():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = T.mul(x, 2.0)
        with pytest.raises(ValueError):
            tape.backward(y)


def test_shape_error_names_both_shapes():
    with pytest.raises(ShapeError) as err:
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    assert "(2, 3)" in str(err.value)


def test_linear_matches_matmul_add():
    rng = np.random.default_rng(1)
    layer = Dense(4, 3, rng)
    x = rng.normal(size=(5, 4))
    fused = layer(x).data
    assert np.array_equal(fused, T.add(T.matmul(Tensor(x), layer.W), layer.b).data)
    assert np.allclose(layer.forward_np(x), fused, rtol=0, atol=1e-15)


def test_two_layer_net_matches_finite_differences():
    rng = np.random.default_rng(2)
    l1, l2 = Dense(2, 2, rng), Dense(2, 1, rng)
    x = rng.normal(size=(4, 2))

    net = Module()
    net.l1, net.l2 = l1, l2
    assert net.num_parameters() == 9
    err = check_gradients(net, lambda: T.mean(T.square(l2(T.tanh(l1(x))))))
    assert err <= 1e-4


# recurrent cell


def test_zero_weights_give_zero_hidden():
    cell = LSTMCell(3, 4, np.random.default_rng(0))
    cell.W.data[:] = 0.0
    cell.b.data[:] = 0.0
    h, _ = cell.step(np.ones((1, 3)), cell.zero_state(1))
    assert np.all(h.data == 0.0)


def test_saturated_forget_gate_preserves_cell():
    cell = LSTMCell(2, 3, np.random.default_rng(0))
    H = 3
    cell.W.data[:] = 0.0
    cell.b.data[:] = 0.0
    cell.b.data[H : 2 * H] = 50.0  # forget gate fully open
    cell.b.data[:H] = -50.0  # input gate shut
    c0 = np.array([[0.3, -0.7, 1.2]])
    _, (h, c) = cell.step(np.ones((1, 2)), (np.zeros((1, H)), c0))
    for _ in range(5):
        _, (h, c) = cell.step(np.ones((1, 2)), (h, c))
    assert np.allclose(c.data, c0, atol=1e-12)


def test_step_np_and_unroll_agree_with_step():
    rng = np.random.default_rng(3)
    cell = LSTMCell(2, 3, rng)
    xs = rng.normal(size=(4, 2, 2))
    h, c = cell.zero_state(2)
    state = (h, c)
    for t in range(4):
        out, state = cell.step(xs[t], state)
        h, c = cell.step_np(xs[t], h, c)
    hs, (hu, cu) = cell.unroll(xs, cell.zero_state(2))
    assert np.allclose(out.data, h, atol=1e-14)
    assert np.array_equal(hs.data[-1], hu) and np.array_equal(h, hu)
    assert np.array_equal(c, cu)


def test_three_step_unroll_gradient():
    rng = np.random.default_rng(4)
    cell = LSTMCell(2, 2, rng)
    xs = rng.normal(size=(3, 1, 2))
    assert check_gradients(cell, lambda: T.sum(cell.unroll(xs, cell.zero_state(1))[0])) <= 1e-4


def test_width_mismatch():
    cell = LSTMCell(2, 2, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        cell.step(np.ones((1, 3)), cell.zero_state(1))


# randomized oracle


def test_random_networks_match_finite_differences():
    rng = np.random.default_rng(20)
    worst = 0.0
    for _ in range(50):
        net, xs, target = random_network_case(rng)
        assert net.num_parameters() <= 100
        worst = max(worst, check_gradients(net, lambda: net.loss(xs, target)))
    assert worst <= 1e-4


def test_relative_error_helper():
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert relative_error(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 1.1)


def test_numeric_gradient_restores_parameter():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    before = p.data.copy()
    g = numeric_gradient(lambda: float(np.sum(p.data**3)), p)
    assert np.array_equal(p.data, before)
    assert np.allclose(g, 3 * before**2, rtol=1e-8)


# Adam


def test_adam_first_step_is_lr_sign():
    p = Tensor(np.array([1.0, 1.0, 1.0]), requires_grad=True)
    opt = Adam([p], lr=3e-4)
    opt.step([np.array([2.0, -0.5, 1e-3])])
    assert np.allclose(p.data - 1.0, -3e-4 * np.array([1.0, -1.0, 1.0]), rtol=1e-4)


def test_adam_zero_grad_leaves_params():
    p = Tensor(np.array([0.4, -0.1]), requires_grad=True)
    opt = Adam([p])
    for _ in range(100):
        opt.step([np.zeros(2)])
    assert np.array_equal(p.data, [0.4, -0.1])


def test_adam_step_size_bound_on_bowl():
    # each Adam step moves at most about lr, so 2000 steps from x0=1 cannot
    # get below 1 - 2000 * lr = 0.4
    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam([p], lr=3e-4)
    for _ in range(2000):
        p.grad = None
        with Tape() as tape:
            tape.backward(T.sum(T.square(p)))
        opt.step()
    assert 0.4 - 1e-6 <= p.data[0] < 1.0


def test_adam_quadratic_bowl_converges():
    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adam([p], lr=3e-4)
    for _ in range(7000):
        p.grad = None
        with Tape() as tape:
            tape.backward(T.sum(T.square(p)))
        opt.step()
    assert abs(p.data[0]) < 0.01


def test_adam_shape_mismatch():
    p = Tensor(np.zeros(2), requires_grad=True)
    with pytest.raises(ShapeError):
        Adam([p]).step([np.zeros(3)])


# checkpoints


def test_checkpoint_round_trip(tmp_path):
    blocks = {"a.W": np.arange(6.0).reshape(2, 3), "b": np.array([0.5, -1.5])}
    save_checkpoint(tmp_path / "ck", blocks, {"note": 1})
    got, meta = load_checkpoint(tmp_path / "ck")
    assert meta["note"] == 1
    for k, v in blocks.items():
        assert np.array_equal(got[k], v)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope")


def test_forward_deterministic():
    rng1, rng2 = np.random.default_rng(9), np.random.default_rng(9)
    a, b = random_network_case(rng1), random_network_case(rng2)
    assert a[0].loss(a[1], a[2]).item() == b[0].loss(b[1], b[2]).item()

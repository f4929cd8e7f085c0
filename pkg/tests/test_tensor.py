import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import msafnet.tensor as T
from msafnet.gradcheck import check_gradients
from msafnet.tensor import Tensor, no_grad
from oracles import conv_loop


def f64(a, grad=True):
    return Tensor(a, requires_grad=grad, dtype=np.float64)


# ----------------------------------------------------------------- graph
def test_default_dtype_is_float32():
    assert Tensor([1.0, 2.0]).dtype == np.float32


def test_backward_accumulates_through_shared_input():
    x = f64([1.0, 2.0, 3.0])
    y = T.tsum(T.add(T.mul(x, x), x))
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_broadcast_gradient_is_reduced_to_input_shape():
    a = f64(np.ones((2, 3)))
    b = f64(np.array([1.0, 2.0, 3.0]))
    T.tsum(T.mul(a, b)).backward()
    assert b.grad.shape == (3,)
    np.testing.assert_allclose(b.grad, [2.0, 2.0, 2.0])


def test_second_backward_on_same_graph_raises():
    x = f64([1.0, 2.0])
    y = T.tsum(T.mul(x, x))
    y.backward()
    with pytest.raises(RuntimeError, match="already ran"):
        y.backward()


def test_backward_needs_scalar():
    x = f64([1.0, 2.0])
    with pytest.raises(ValueError, match="scalar"):
        T.mul(x, x).backward()


def test_no_grad_records_nothing():
    x = f64([1.0, 2.0])
    with no_grad():
        y = T.tsum(T.mul(x, x))
    assert not y.requires_grad
    assert T.is_grad_enabled()


def test_relu_gradient_at_zero_is_zero():
    x = f64([-1.0, 0.0, 2.0])
    T.tsum(T.relu(x)).backward()
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])


def test_sigmoid_is_finite_and_open_interval_for_large_inputs():
    y = T.sigmoid(f64([-50.0, 0.0, 50.0], grad=False)).data
    assert np.all(np.isfinite(y))
    assert y[1] == 0.5
    assert 0.0 <= y[0] < 1e-20 and 1.0 - 1e-15 <= y[2] <= 1.0


def test_split_returns_equal_sections_and_checks_divisibility():
    x = f64(np.arange(12.0).reshape(2, 6))
    parts = T.split(x, 3, axis=1)
    assert [p.shape for p in parts] == [(2, 2)] * 3
    with pytest.raises(ValueError):
        T.split(x, 4, axis=1)


def test_getitem_gradient_scatters_into_slice():
    x = f64(np.arange(6.0).reshape(2, 3))
    T.tsum(x[:, 1]).backward()
    np.testing.assert_array_equal(x.grad, [[0, 1, 0], [0, 1, 0]])


# ----------------------------------------------------------- convolution
@pytest.mark.parametrize("stride,pad", [((1, 1, 1), (1, 1, 1)), ((1, 2, 2), (0, 1, 1)), ((2, 1, 1), (1, 0, 2))])
def test_conv3d_is_bit_identical_to_loop_oracle_on_integers(rng, stride, pad):
    # small integers make every partial sum exact, so summation order cannot matter
    x = rng.integers(-3, 4, size=(2, 3, 4, 5, 5)).astype(np.float64)
    w = rng.integers(-2, 3, size=(2, 3, 3, 3, 2)).astype(np.float64)
    b = rng.integers(-5, 6, size=2).astype(np.float64)
    got = T.conv3d(f64(x, False), f64(w, False), f64(b, False), stride, pad).data
    np.testing.assert_array_equal(got, conv_loop(x, w, b, stride, pad))


def test_conv2d_matches_loop_oracle(rng):
    x = rng.normal(size=(2, 3, 6, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    got = T.conv2d(f64(x, False), f64(w, False)).data
    np.testing.assert_allclose(got, conv_loop(x, w), rtol=0, atol=1e-12)


def test_conv3d_matches_torch(rng):
    torch = pytest.importorskip("torch")
    x = rng.normal(size=(2, 4, 5, 8, 8))
    w = rng.normal(size=(3, 4, 3, 3, 3))
    b = rng.normal(size=3)
    got = T.conv3d(f64(x, False), f64(w, False), f64(b, False)).data
    ref = torch.nn.functional.conv3d(torch.tensor(x), torch.tensor(w), torch.tensor(b), padding=1).numpy()
    np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12)


def test_chunked_conv_equals_unchunked(rng, monkeypatch):
    x = rng.normal(size=(2, 3, 7, 6, 5))
    w = rng.normal(size=(4, 3, 3, 3, 3))

    def run():
        xt, wt = f64(x), f64(w)
        y = T.conv3d(xt, wt, None, (2, 1, 1), (1, 1, 1))
        T.tsum(T.mul(y, y)).backward()
        return y.data, xt.grad, wt.grad

    full = run()
    monkeypatch.setattr(T, "_MAX_COLS", 50)
    chunked = run()
    for a, b in zip(full, chunked):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-10)


def test_conv_channel_mismatch_names_both_shapes():
    x = Tensor(np.zeros((1, 3, 4, 8, 8)))
    w = Tensor(np.zeros((2, 4, 3, 3, 3)))
    with pytest.raises(ValueError, match="3 channels but kernel expects 4"):
        T.conv3d(x, w)


def test_conv_zero_size_output_is_an_error():
    x = Tensor(np.zeros((1, 1, 1, 2, 2)))
    w = Tensor(np.zeros((1, 1, 3, 3, 3)))
    with pytest.raises(ValueError, match="zero-size output"):
        T.conv3d(x, w, pad=(0, 0, 0))


def test_conv_rejects_bad_stride_and_padding():
    x = Tensor(np.zeros((1, 1, 4, 4, 4)))
    w = Tensor(np.zeros((1, 1, 3, 3, 3)))
    with pytest.raises(ValueError, match="strides"):
        T.conv3d(x, w, stride=(0, 1, 1))
    with pytest.raises(ValueError, match="padding"):
        T.conv3d(x, w, pad=(-1, 1, 1))


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**16))
def test_conv_is_linear_in_its_input(a, b, seed):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=(2, 1, 2, 3, 4, 4))
    w = f64(r.normal(size=(2, 2, 3, 3, 3)), False)
    lhs = T.conv3d(f64(a * x + b * y, False), w).data
    rhs = a * T.conv3d(f64(x, False), w).data + b * T.conv3d(f64(y, False), w).data
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)


# --------------------------------------------------- normalisation, pooling
def test_batch_norm_training_standardises_and_updates_running_stats(rng):
    x = f64(rng.normal(3.0, 2.0, size=(4, 2, 3, 5)), False)
    state = T.RunningStats(2, np.float64)
    y = T.batch_norm(x, f64(np.ones(2), False), f64(np.zeros(2), False), state, training=True).data
    np.testing.assert_allclose(y.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=(0, 2, 3)), 1.0, atol=1e-4)
    n = x.size // 2
    np.testing.assert_allclose(state.mean, 0.1 * x.data.mean(axis=(0, 2, 3)))
    np.testing.assert_allclose(state.var, 0.9 + 0.1 * x.data.var(axis=(0, 2, 3)) * n / (n - 1))


def test_batch_norm_eval_uses_running_stats():
    state = T.RunningStats(1, np.float64)
    state.mean[:] = 2.0
    state.var[:] = 4.0
    x = f64(np.full((2, 1, 2), 4.0), False)
    y = T.batch_norm(x, f64([1.0], False), f64([0.0], False), state, training=False, eps=0.0).data
    np.testing.assert_allclose(y, 1.0)


def test_batch_norm_needs_two_values_in_training():
    with pytest.raises(ValueError, match="more than one value"):
        T.batch_norm(f64(np.ones((1, 2)), False), f64(np.ones(2), False), f64(np.zeros(2), False),
                     T.RunningStats(2, np.float64), training=True)


def test_maxpool_breaks_ties_in_raster_order():
    x = f64(np.ones((1, 1, 1, 2, 2)))
    y = T.maxpool3d(x)
    T.tsum(y).backward()
    np.testing.assert_array_equal(x.grad[0, 0, 0], [[1, 0], [0, 0]])


def test_maxpool_rejects_odd_extents():
    with pytest.raises(ValueError, match="even"):
        T.maxpool3d(Tensor(np.zeros((1, 1, 1, 3, 4))))


def test_upsample_backward_sums_each_block(rng):
    x = f64(rng.normal(size=(1, 1, 2, 3)))
    g = rng.normal(size=(1, 1, 4, 6))
    T.tsum(T.mul(T.upsample2x(x), f64(g, False))).backward()
    np.testing.assert_allclose(x.grad, g.reshape(1, 1, 2, 2, 3, 2).sum(axis=(3, 5)))


def test_record_kinks_logs_relu_and_pool_signatures():
    log = []
    with T.record_kinks(log):
        T.maxpool3d(T.relu(Tensor(np.ones((1, 1, 1, 2, 2)))))
    assert len(log) == 2
    T.relu(Tensor([1.0]))
    assert len(log) == 2


def test_op_gradients_under_float32_are_close(rng):
    # float32 is the training dtype; gradients are only approximately checkable there
    x = Tensor(rng.normal(size=(1, 2, 2, 4, 4)), requires_grad=True)
    w = Tensor(rng.normal(size=(2, 2, 3, 3, 3)), requires_grad=True)
    err = check_gradients(lambda a, b: T.tsum(T.tanh(T.conv3d(a, b))), [x, w], step=1e-2, floor=1e-2)
    assert err < 5e-2

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uwcolor.autograd import Tensor, default_dtype, square
from uwcolor.conv import (
    box_filter, conv2d, conv_output_size, conv_transpose2d, conv_transpose_output_size, instance_norm, pad2d,
)
from uwcolor.gradcheck import check_gradients


def T(a, grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad, dtype="float64")


def naive_conv(x, w, stride):
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    ho, wo = (h - k) // stride + 1, (wd - k) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for i in range(ho):
        for j in range(wo):
            patch = x[:, :, i * stride:i * stride + k, j * stride:j * stride + k]
            out[:, :, i, j] = np.einsum("nckl,ockl->no", patch, w)
    return out


def naive_conv_transpose(x, w, stride, pad, output_padding):
    n, ci, h, wd = x.shape
    _, co, k, _ = w.shape
    full = (h - 1) * stride + k + output_padding
    canvas = np.zeros((n, co, full, (wd - 1) * stride + k + output_padding))
    for i in range(h):
        for j in range(wd):
            canvas[:, :, i * stride:i * stride + k, j * stride:j * stride + k] += np.einsum("nc,cokl->nokl", x[:, :, i, j], w)
    return canvas[:, :, pad:canvas.shape[2] - pad, pad:canvas.shape[3] - pad]


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 2), st.integers(1, 3), st.integers(5, 9), st.sampled_from([1, 3, 4]), st.integers(1, 2), st.integers(0, 2**31))
def test_conv2d_matches_naive(cin, cout, size, k, stride, seed):
    r = np.random.default_rng(seed)
    x, w = r.normal(size=(1, cin, size, size)), r.normal(size=(cout, cin, k, k))
    with default_dtype("float64"):
        got = conv2d(T(x), T(w), stride=stride).data
    np.testing.assert_allclose(got, naive_conv(x, w, stride), atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 5), st.sampled_from([3, 4]), st.integers(1, 2), st.integers(0, 1), st.integers(0, 2**31))
def test_conv_transpose_matches_scatter(size, k, stride, pad, seed):
    r = np.random.default_rng(seed)
    op = stride - 1
    x, w = r.normal(size=(1, 2, size, size)), r.normal(size=(2, 3, k, k))
    with default_dtype("float64"):
        got = conv_transpose2d(T(x), T(w), stride=stride, pad=pad, output_padding=op).data
    np.testing.assert_allclose(got, naive_conv_transpose(x, w, stride, pad, op), atol=1e-12)
    assert got.shape[-1] == conv_transpose_output_size(size, k, stride, pad, op)


def test_conv_transpose_is_adjoint_of_conv(f64, rng):
    x = rng.normal(size=(1, 2, 8, 8))
    w = rng.normal(size=(3, 2, 3, 3))
    y = rng.normal(size=(1, 3, 4, 4))
    # <conv(x), y> == <x, conv^T(y)> for the same kernel (stride 2, zero pad 1)
    lhs = (conv2d(T(x), T(w), stride=2, pad=1).data * y).sum()
    rhs = (x * conv_transpose2d(T(y), T(w), stride=2, pad=1, output_padding=1).data).sum()
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_output_size_arithmetic():
    assert conv_output_size(256, 4, 2, 1) == 128
    assert conv_output_size(64, 3, 2, 1) == 32
    assert conv_transpose_output_size(32, 3, 2, 1, 1) == 64


def test_reflect_pad_values(f64):
    x = T(np.tile(np.arange(4.0), (3, 1)).reshape(1, 1, 3, 4))
    padded = pad2d(x, 2, "reflect").data[0, 0]
    assert padded.shape == (7, 8)
    np.testing.assert_array_equal(padded[0], [2, 1, 0, 1, 2, 3, 2, 1])


def test_conv_shape_error_names_shapes(f64):
    with pytest.raises(ValueError, match=r"\(1, 2, 5, 5\).*\(3, 4, 3, 3\)|\(3, 4, 3, 3\).*\(1, 2, 5, 5\)"):
        conv2d(T(np.zeros((1, 2, 5, 5))), T(np.zeros((3, 4, 3, 3))))


def test_instance_norm_statistics(f64, rng):
    x = T(rng.normal(3.0, 2.0, size=(2, 3, 6, 6)))
    y = instance_norm(x, T(np.ones(3)), T(np.zeros(3))).data
    np.testing.assert_allclose(y.mean(axis=(2, 3)), 0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=(2, 3)), 1, atol=1e-5)


def test_instance_norm_constant_plane_gives_beta(f64):
    y = instance_norm(T(np.full((1, 2, 4, 4), 7.0)), T([1.0, 1.0]), T([0.25, -0.5])).data
    np.testing.assert_allclose(y[0, :, 0, 0], [0.25, -0.5])


def test_box_filter_mean(f64, rng):
    x = rng.random((1, 1, 6, 6))
    got = box_filter(T(x), 3).data
    assert got.shape == (1, 1, 4, 4)
    assert got[0, 0, 1, 2] == pytest.approx(x[0, 0, 1:4, 2:5].mean())


@pytest.mark.parametrize("name", ["conv2d_reflect", "conv2d_zero", "conv_transpose", "instance_norm", "box_filter"])
def test_layer_gradients(f64, rng, name):
    x = T(rng.normal(size=(1, 2, 6, 6)))
    w = T(rng.normal(size=(3, 2, 3, 3)))
    wt = T(rng.normal(size=(2, 3, 3, 3)))
    b = T(rng.normal(size=3))
    g, be = T(rng.normal(size=2)), T(rng.normal(size=2))
    fns = {
        "conv2d_reflect": (lambda: square(conv2d(x, w, b, stride=2, padding_mode="reflect", pad=1)).sum(), [x, w, b]),
        "conv2d_zero": (lambda: square(conv2d(x, w, b, stride=1, pad=1)).sum(), [x, w, b]),
        "conv_transpose": (lambda: square(conv_transpose2d(x, wt, b, stride=2, pad=1, output_padding=1)).sum(), [x, wt, b]),
        "instance_norm": (lambda: (square(instance_norm(x, g, be)) * x).sum(), [x, g, be]),
        "box_filter": (lambda: (square(box_filter(x, 3)) * 1.7).sum(), [x]),
    }
    fn, params = fns[name]
    assert check_gradients(fn, params) < 1e-6

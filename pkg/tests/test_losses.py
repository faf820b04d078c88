import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uwcolor.autograd import Tensor, default_dtype
from uwcolor.gradcheck import check_gradients
from uwcolor.losses import (
    LossReport, LossWeights, SsimParams, adversarial_ls_d, adversarial_ls_g, adversarial_nll, adversarial_nll_g,
    cycle_loss, luminance, ssim_loss, ssim_map, total_generator_loss,
)
from uwcolor.selftest import brute_force_ssim


def T(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad, dtype="float64")


def full(v, shape=(1, 1, 16, 16)):
    return T(np.full(shape, v))


def test_constant_patch_value(f64):
    # luminance term only: (2*0.5*0.25 + 0.02) / (0.25 + 0.0625 + 0.02)
    s = ssim_map(full(0.5), full(0.25)).data
    np.testing.assert_allclose(s, 0.27 / 0.3325, atol=1e-12)
    assert s.mean() == pytest.approx(0.81203, abs=1e-5)


def test_ssim_loss_constant_patch(f64):
    # ssim_loss maps [-1, 1] -> [0, 1] first
    assert ssim_loss(full(0.0), full(-0.5)).item() == pytest.approx(0.18797, abs=1e-5)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([3, 5, 13]))
def test_ssim_matches_brute_force(seed, window):
    r = np.random.default_rng(seed)
    x, y = r.random((16, 16)), r.random((16, 16))
    p = SsimParams(window=window)
    with default_dtype("float64"):
        fast = ssim_map(T(x[None, None]), T(y[None, None]), p).data[0, 0]
    np.testing.assert_allclose(fast, brute_force_ssim(x, y, window), atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_ssim_symmetric_and_bounded(seed):
    r = np.random.default_rng(seed)
    x, y = r.random((1, 3, 16, 16)), r.random((1, 3, 16, 16))
    with default_dtype("float64"):
        a, b = ssim_map(T(x), T(y)).data, ssim_map(T(y), T(x)).data
        self_sim = ssim_map(T(x), T(x)).data
    np.testing.assert_allclose(a, b, atol=1e-14)
    assert np.all(a <= 1 + 1e-12) and np.all(a > -1)
    np.testing.assert_allclose(self_sim, 1.0, atol=1e-12)


def test_luminance_weights(f64):
    img = T(np.stack([np.full((2, 2), v) for v in (1.0, 0.0, 0.0)])[None])
    assert luminance(img).data[0, 0, 0, 0] == pytest.approx(0.299)


def test_per_channel_mode_averages(f64, rng):
    x, y = rng.random((1, 3, 16, 16)), rng.random((1, 3, 16, 16))
    p = SsimParams(channel_mode="per-channel-mean")
    got = ssim_map(T(x), T(y), p).data[0, 0]
    expected = np.mean([brute_force_ssim(x[0, c], y[0, c]) for c in range(3)], axis=0)
    np.testing.assert_allclose(got, expected, atol=1e-10)


def test_ssim_params_validation():
    with pytest.raises(ValueError):
        SsimParams(window=4)
    with pytest.raises(ValueError):
        SsimParams(c1=0)


def test_ssim_range_check(f64):
    with pytest.warns(RuntimeWarning, match="outside"):
        ssim_map(full(1.5), full(0.5), check_range=True)


def test_cycle_loss_values(f64):
    x, y = full(0.2, (1, 3, 4, 4)), full(-0.4, (1, 3, 4, 4))
    assert cycle_loss(x, x, y, y).item() == 0.0
    assert cycle_loss(x, full(0.5, (1, 3, 4, 4)), y, full(0.0, (1, 3, 4, 4))).item() == pytest.approx(0.3 + 0.4)


def test_cycle_loss_shape_mismatch(f64):
    with pytest.raises(ValueError):
        cycle_loss(full(0, (1, 3, 4, 4)), full(0, (1, 3, 8, 8)), full(0), full(0))


def test_least_squares_analytic_cases(f64):
    ones, zeros, half = full(1.0, (1, 1, 30, 30)), full(0.0, (1, 1, 30, 30)), full(0.5, (1, 1, 30, 30))
    assert adversarial_ls_d(ones, zeros).item() == 0.0
    assert adversarial_ls_d(half, half).item() == 0.5
    assert adversarial_ls_g(half).item() == 0.25
    assert adversarial_ls_g(zeros).item() == 1.0


def test_nll_forms(f64):
    probs_real, probs_fake = full(0.5, (1, 1, 3, 3)), full(0.5, (1, 1, 3, 3))
    # the discriminator maximises this; 0 is its supremum
    assert adversarial_nll(probs_real, probs_fake).item() == pytest.approx(-2 * np.log(2))
    assert adversarial_nll(full(1.0, (1, 1, 3, 3)), full(0.0, (1, 1, 3, 3))).item() == pytest.approx(0, abs=1e-10)
    assert adversarial_nll_g(full(0.5, (1, 1, 3, 3))).item() == pytest.approx(-np.log(2))
    with pytest.raises(ValueError):
        adversarial_nll(full(1.2, (1, 1, 3, 3)), probs_fake)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0, 3), st.floats(0, 3), st.floats(0, 20))
def test_total_is_weighted_sum(adv, cyc, ssim, la, lc, ls):
    w = LossWeights(la, lc, ls)
    with default_dtype("float64"):
        total = total_generator_loss(T(adv), T(cyc), T(ssim), w).item()
    assert total == pytest.approx(la * adv + lc * cyc + ls * ssim, rel=1e-12, abs=1e-12)


def test_default_weights():
    assert (LossWeights().adversarial, LossWeights().cycle, LossWeights().ssim) == (1.0, 1.0, 10.0)
    with pytest.raises(ValueError):
        LossWeights(-1, 1, 1)


def test_loss_report_fields():
    names = LossReport.field_names()
    assert names[0] == "adv_g_fwd" and len(names) == 9
    assert LossReport(*range(9)).values() == list(range(9))


def test_loss_gradients(f64, rng):
    a, c = T(rng.uniform(-0.8, 0.8, (1, 3, 16, 16)), True), T(rng.uniform(-0.8, 0.8, (1, 3, 16, 16)), True)
    d1, d2 = T(rng.normal(size=(1, 1, 6, 6)), True), T(rng.normal(size=(1, 1, 6, 6)), True)
    assert check_gradients(lambda: ssim_loss(a, c), [a, c]) < 1e-4
    assert check_gradients(lambda: cycle_loss(a, c, c, a * 0.5), [a, c]) < 1e-4
    assert check_gradients(lambda: adversarial_ls_d(d1, d2), [d1, d2]) < 1e-4
    assert check_gradients(lambda: adversarial_ls_g(d2), [d2]) < 1e-4

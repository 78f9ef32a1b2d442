from __future__ import annotations

import numpy as np
import pytest

from swapforge.metrics import (
    LossWeights,
    SsimParams,
    dssim,
    gaussian_window,
    masked_loss,
    mse,
    recon_loss,
    skewed_accuracy,
    ssim,
)


def reference_ssim(x: np.ndarray, y: np.ndarray, p: SsimParams) -> float:
    """Literal sliding-window SSIM: explicit loops, no separability tricks."""
    win = gaussian_window(p.window, p.sigma)
    c1, c2 = p.c1, p.c2
    h, w, chans = x.shape
    values = []
    for c in range(chans):
        for i in range(h - p.window + 1):
            for j in range(w - p.window + 1):
                px = x[i:i + p.window, j:j + p.window, c]
                py = y[i:i + p.window, j:j + p.window, c]
                mu_x = float((win * px).sum())
                mu_y = float((win * py).sum())
                var_x = float((win * px * px).sum()) - mu_x * mu_x
                var_y = float((win * py * py).sum()) - mu_y * mu_y
                cov = float((win * px * py).sum()) - mu_x * mu_y
                num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
                den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
                values.append(num / den)
    return float(np.mean(values))


def rand_pair(seed, h=32, w=32, c=1):
    g = np.random.default_rng(seed)
    return g.uniform(size=(h, w, c)), g.uniform(size=(h, w, c))


class TestMse:
    def test_self_zero(self):
        x, _ = rand_pair(0)
        assert mse(x, x) == 0.0

    def test_constant_offset(self):
        assert mse(np.zeros((5, 5, 3)), np.full((5, 5, 3), 0.5)) == pytest.approx(0.25)

    def test_symmetric(self):
        x, y = rand_pair(1)
        assert mse(x, y) == pytest.approx(mse(y, x), abs=0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse(np.zeros((4, 4, 1)), np.zeros((4, 5, 1)))


class TestSsim:
    def test_self_is_one(self):
        x, _ = rand_pair(2)
        assert ssim(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_constant_zero_vs_one(self):
        # closed form with zero variances: C1/(1 + C1) with C2 cancelling
        p = SsimParams()
        x = np.zeros((16, 16, 1))
        y = np.ones((16, 16, 1))
        expected = p.c1 / (1.0 + p.c1)
        assert ssim(x, y, p) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(9.999e-5, rel=1e-3)

    @pytest.mark.parametrize("seed", [10, 11, 12, 13, 14])
    def test_matches_sliding_window_reference(self, seed):
        x, y = rand_pair(seed)
        p = SsimParams()
        assert abs(ssim(x, y, p) - reference_ssim(x, y, p)) < 1e-6

    def test_rgb_channel_mean(self):
        x, y = rand_pair(15, c=3)
        per_channel = [ssim(x[..., [c]], y[..., [c]]) for c in range(3)]
        assert ssim(x, y) == pytest.approx(np.mean(per_channel), rel=1e-12)

    def test_symmetry_and_bounds(self):
        x, y = rand_pair(16)
        s = ssim(x, y)
        assert s == pytest.approx(ssim(y, x), abs=1e-12)
        assert -1.0 <= s <= 1.0

    def test_window_larger_than_image(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((8, 8, 1)), np.zeros((8, 8, 1)), SsimParams(window=11))

    def test_gaussian_window_normalized(self):
        assert abs(gaussian_window(11, 1.5).sum() - 1.0) < 1e-12


class TestDssim:
    def test_self_zero(self):
        x, _ = rand_pair(3)
        assert dssim(x, x) == pytest.approx(0.0, abs=1e-12)

    def test_definitional_consistency(self):
        x, y = rand_pair(4)
        assert 1.0 - 2.0 * dssim(x, y) == pytest.approx(ssim(x, y), abs=1e-12)

    def test_range(self):
        # anti-correlated checkerboards push toward (but never past) 1
        base = np.indices((32, 32)).sum(axis=0) % 2
        x = base[..., None].astype(float)
        y = 1.0 - x
        d = dssim(x, y)
        assert 0.5 < d <= 1.0


class TestReconLoss:
    def test_self_zero(self):
        x, _ = rand_pair(5)
        assert recon_loss(x, x) == pytest.approx(0.0, abs=1e-12)

    def test_sum_of_components(self):
        x, y = rand_pair(6)
        assert recon_loss(x, y) == pytest.approx(dssim(x, y) + mse(x, y), abs=1e-12)
        assert recon_loss(x, y) >= mse(x, y)
        assert recon_loss(x, y) >= dssim(x, y)


class TestMaskedLoss:
    def test_identity_inputs_zero(self):
        x, _ = rand_pair(7)
        g = np.random.default_rng(8)
        masks = [(g.uniform(size=(32, 32)) > 0.5).astype(float) for _ in range(3)]
        assert masked_loss(x, x, *masks) == pytest.approx(0.0, abs=1e-12)

    def test_all_ones_masks_collapse(self):
        x, y = rand_pair(9)
        ones = np.ones((32, 32))
        value = masked_loss(x, y, ones, ones, ones, LossWeights(3.0, 2.0))
        assert value == pytest.approx(6.0 * recon_loss(x, y), rel=1e-12)

    def test_face_only(self):
        x, y = rand_pair(10)
        ones = np.ones((32, 32))
        zeros = np.zeros((32, 32))
        assert masked_loss(x, y, ones, zeros, zeros) == pytest.approx(recon_loss(x, y), rel=1e-12)

    def test_monotone_in_lambda(self):
        x, y = rand_pair(11)
        g = np.random.default_rng(12)
        masks = [(g.uniform(size=(32, 32)) > 0.3).astype(float) for _ in range(3)]
        lo = masked_loss(x, y, *masks, LossWeights(lambda_eye=1.0))
        hi = masked_loss(x, y, *masks, LossWeights(lambda_eye=5.0))
        assert hi >= lo

    def test_default_weights_pinned(self):
        w = LossWeights()
        assert w.lambda_eye == 3.0
        assert w.lambda_mouth == 2.0

    def test_mask_shape_mismatch(self):
        x, y = rand_pair(13)
        with pytest.raises(ValueError):
            masked_loss(x, y, np.ones((8, 8)), np.ones((32, 32)), np.ones((32, 32)))


class TestSkewedAccuracy:
    def test_values(self):
        assert skewed_accuracy(1.0, 1.0, 1, 3) == pytest.approx(4.0)
        assert skewed_accuracy(0.0, 0.0, 5, 9) == 0.0
        assert skewed_accuracy(0.5, 0.9, 1, 3) == pytest.approx(3.2)

    def test_defaults(self):
        assert skewed_accuracy(0.5, 0.9) == pytest.approx(3.2)

    def test_range_check(self):
        with pytest.raises(ValueError):
            skewed_accuracy(1.5, 0.5)

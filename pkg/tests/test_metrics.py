import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from gmmcodec import metrics
from gmmcodec.errors import DomainError, GeometryError


@pytest.mark.parametrize("delta", [0.1, 0.01, 0.5, 1 / 255])
def test_psnr_constant_offset(delta):
    x = np.zeros((3, 16, 16))
    assert abs(metrics.psnr(x, x + delta) - oracles.psnr_closed_form(delta**2)) < 1e-9


def test_psnr_single_pixel_error():
    x = np.zeros((1, 10, 10))
    y = x.copy()
    y[0, 4, 4] = 1.0
    assert abs(metrics.psnr(x, y) - 20.0) < 1e-9


def test_psnr_identical_is_infinite():
    x = np.random.default_rng(0).random((3, 8, 8))
    assert metrics.psnr(x, x) == math.inf


def test_ms_ssim_matches_oracle(rng):
    for h, w in [(176, 176), (192, 180), (64, 100), (33, 40), (250, 190)]:
        x = rng.random((3, h, w))
        y = np.clip(x + rng.normal(0, 0.1, x.shape), 0, 1)
        assert abs(metrics.ms_ssim(x, y) - oracles.ms_ssim_oracle(x, y)) < 1e-6


def test_ms_ssim_identity_and_bounds(rng):
    x = rng.random((3, 64, 64))
    assert metrics.ms_ssim(x, x) == pytest.approx(1.0, abs=1e-12)
    noise = rng.random((3, 64, 64))
    assert 0.0 <= metrics.ms_ssim(x, noise) < 0.5


def test_ms_ssim_scale_count():
    assert metrics.num_scales(176, 176) == 5
    assert metrics.num_scales(175, 400) == 4
    assert metrics.num_scales(11, 11) == 1
    with pytest.raises(GeometryError):
        metrics.ms_ssim(np.zeros((3, 10, 40)), np.zeros((3, 10, 40)))


def test_ms_ssim_accepts_greyscale(rng):
    x = rng.random((32, 32))
    assert metrics.ms_ssim(x, x) == pytest.approx(1.0)


@pytest.mark.parametrize("m, db", [(0.9, 10.0), (0.99, 20.0), (0.999, 30.0)])
def test_ms_ssim_db(m, db):
    assert metrics.ms_ssim_db(m) == pytest.approx(db, abs=1e-9)


def test_ms_ssim_db_perfect():
    assert metrics.ms_ssim_db(1.0) == math.inf


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 1), st.floats(1e-4, 200))
def test_rd_loss_is_linear(ry, rz, d, lam):
    assert metrics.rd_loss(ry, rz, d, lam) == pytest.approx(ry + rz + lam * d)


def test_rd_loss_bits_to_bpp():
    assert metrics.rd_loss(800, 200, 0.0, 0.01, num_pixels=100) == 10.0


def test_rd_loss_validation():
    with pytest.raises(DomainError):
        metrics.rd_loss(-1, 0, 0, 0.1)
    with pytest.raises(DomainError):
        metrics.rd_loss(1, 0, 0, 0)


def test_lambda_sets():
    assert metrics.MSE_LAMBDAS == (0.0016, 0.0032, 0.0075, 0.015, 0.03, 0.045)
    assert metrics.MS_SSIM_LAMBDAS == (3.0, 12.0, 40.0, 120.0)
    for lam in metrics.MSE_LAMBDAS:
        metrics.validate_lambda(lam, "mse")
    with pytest.raises(DomainError):
        metrics.validate_lambda(float("nan"))
    with pytest.raises(ValueError):
        metrics.validate_lambda(1.0, "ssim")


def test_rd_report_and_csv(rng):
    x = rng.random((3, 32, 32))
    y = np.clip(x + 0.01, 0, 1)
    r = metrics.rd_report(x, y, 0.5, 0.015)
    assert r.loss == pytest.approx(0.5 + 0.015 * metrics.mse(x, y))
    assert "rate_bpp=0.500000" in r.to_kv()
    text = metrics.csv_table([("a.ppm", r)])
    head, row = text.strip().split("\n")
    assert head.split(",")[0] == "name" and row.startswith("a.ppm,0.500000")


def test_rd_report_tiny_image_has_nan_ms_ssim():
    x = np.zeros((3, 4, 4))
    r = metrics.rd_report(x, x + 0.1, 1.0, 0.01)
    assert math.isnan(r.ms_ssim)

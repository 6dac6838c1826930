"""Independent reference computations used by the tests.

Nothing here imports the package's numerical code paths.
"""

from __future__ import annotations

import math

import mpmath
import numpy as np
from scipy.signal import convolve2d

mpmath.mp.dps = 50

A_MIN, A_MAX = -255, 256


def mp_phi(x) -> mpmath.mpf:
    """Standard normal CDF at 50 digits via erfc."""
    return mpmath.erfc(-mpmath.mpf(x) / mpmath.sqrt(2)) / 2


def mp_mixture_cdf(t, w, mu, sigma) -> mpmath.mpf:
    if t == -mpmath.inf:
        return mpmath.mpf(0)
    if t == mpmath.inf:
        # total weight; equals 1 on the simplex, but FD steps leave it
        return mpmath.fsum(mpmath.mpf(wk) for wk in w)
    return mpmath.fsum(mpmath.mpf(wk) * mp_phi((mpmath.mpf(t) - mk) / sk) for wk, mk, sk in zip(w, mu, sigma))


def mp_symbol_prob(y: int, w, mu, sigma) -> mpmath.mpf:
    """Discretized mixture probability with the alphabet-edge limits.

    1 - c(t) for far-right bins needs more digits than the result's magnitude;
    callers checking deep tails wrap this in ``mpmath.workdps``.
    """
    hi = mpmath.inf if y == A_MAX else mpmath.mpf(y) + mpmath.mpf(0.5)
    lo = -mpmath.inf if y == A_MIN else mpmath.mpf(y) - mpmath.mpf(0.5)
    return mp_mixture_cdf(hi, w, mu, sigma) - mp_mixture_cdf(lo, w, mu, sigma)


def mp_log_prob(y, w, mu, sigma, floor_sigma=0.11):
    sigma = [max(float(s), floor_sigma) for s in sigma]
    return mpmath.log(mp_symbol_prob(int(y), w, mu, sigma))


def fd_gradient(y, w, mu, sigma, h=1e-7):
    """Central differences of log p w.r.t. every raw parameter, evaluated at 50 digits.

    The small step keeps truncation error (~(h/w)^2 for a weight w) far below
    the 1e-4 tolerance; 50 digits leave ample room for the cancellation.
    """
    base = {"weights": list(map(float, w)), "means": list(map(float, mu)), "scales": list(map(float, sigma))}
    out = {}
    for name, vals in base.items():
        g = []
        for k in range(len(vals)):
            up = {n: list(v) for n, v in base.items()}
            dn = {n: list(v) for n, v in base.items()}
            up[name][k] += h
            dn[name][k] -= h
            f_up = mp_log_prob(y, up["weights"], up["means"], up["scales"])
            f_dn = mp_log_prob(y, dn["weights"], dn["means"], dn["scales"])
            g.append(float((f_up - f_dn) / (2 * h)))
        out[name] = np.array(g)
    return out


def entropy_bits(pmf) -> float:
    p = np.asarray(pmf, dtype=np.float64)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def psnr_closed_form(mse_value: float) -> float:
    return 10.0 * math.log10(1.0 / mse_value)


# --- MS-SSIM, written from the published definition with 2-D convolutions ---

_MS_WEIGHTS = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333]


def _gauss2d(size=11, sigma=1.5):
    ax = np.arange(size, dtype=np.float64) - size // 2
    xx, yy = np.meshgrid(ax, ax, indexing="ij")
    k = np.exp(-(xx**2 + yy**2) / (2 * sigma**2))
    return k / k.sum()


def _ssim_single(a, b, kernel, c1, c2):
    mu_a = convolve2d(a, kernel, mode="valid")
    mu_b = convolve2d(b, kernel, mode="valid")
    var_a = convolve2d(a * a, kernel, mode="valid") - mu_a * mu_a
    var_b = convolve2d(b * b, kernel, mode="valid") - mu_b * mu_b
    cov = convolve2d(a * b, kernel, mode="valid") - mu_a * mu_b
    l_map = (2 * mu_a * mu_b + c1) / (mu_a * mu_a + mu_b * mu_b + c1)
    cs_map = (2 * cov + c2) / (var_a + var_b + c2)
    return (l_map * cs_map).mean(), cs_map.mean()


def _downsample(a):
    h, w = (a.shape[0] // 2) * 2, (a.shape[1] // 2) * 2
    return a[:h, :w].reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def ms_ssim_oracle(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    kernel = _gauss2d()
    c1, c2 = (0.01 * 1.0) ** 2, (0.03 * 1.0) ** 2
    levels = 0
    m = min(x.shape[-2:])
    while levels < 5 and m >= 11:
        levels += 1
        m //= 2
    weights = np.array(_MS_WEIGHTS[:levels])
    weights /= weights.sum()
    vals = []
    for a, b in zip(x, y):
        terms = []
        for lv in range(levels):
            s, cs = _ssim_single(a, b, kernel, c1, c2)
            terms.append(s if lv == levels - 1 else cs)
            a, b = _downsample(a), _downsample(b)
        terms = np.maximum(np.array(terms), 0.0)
        vals.append(float(np.prod(terms**weights)))
    return float(np.mean(vals))

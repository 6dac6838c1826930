"""Quick in-process property checks behind ``gmmc selftest``."""

from __future__ import annotations

import time

import numpy as np

from .codec import decode_image, encode_image_traced
from .container import CompressedContainer
from .entropy_models import (
    MixtureParams,
    discretized_mixture_likelihood,
    mixture_likelihood_grad,
    mixture_pmf_table,
    quantize_pmfs,
)
from .range_coding import RangeDecoder, RangeEncoder
from .transforms import init_random


def random_mixture(rng, k: int, n: int, mean_range=20.0, scale_range=(0.05, 30.0)) -> MixtureParams:
    w = rng.dirichlet(np.ones(k), size=n).T
    mu = rng.uniform(-mean_range, mean_range, size=(k, n))
    lo, hi = np.log(scale_range[0]), np.log(scale_range[1])
    sigma = np.exp(rng.uniform(lo, hi, size=(k, n)))
    return MixtureParams.create(w, mu, sigma)


def check_normalization(rng, trials=200) -> str:
    worst = 0.0
    for k in (1, 2, 3, 5):
        params = random_mixture(rng, k, trials)
        pmf = mixture_pmf_table(params)
        worst = max(worst, float(np.abs(pmf.sum(axis=1) - 1).max()))
    if worst > 1e-6:
        raise AssertionError(f"pmf sums deviate by {worst:.2e}")
    return f"max |sum - 1| = {worst:.1e}"


def check_gradient(rng, trials=50) -> str:
    worst = 0.0
    h = 1e-4
    for _ in range(trials):
        k = int(rng.integers(1, 4))
        params = random_mixture(rng, k, 1, mean_range=5.0, scale_range=(0.3, 5.0))
        y = np.round(params.means[0] + rng.normal(0, 1, size=1)).astype(np.int64)
        g = mixture_likelihood_grad(y, params)
        for name in ("weights", "means", "scales"):
            base = {n: getattr(params, n).copy() for n in ("weights", "means", "scales")}
            for idx in np.ndindex(base[name].shape):
                up = {n: a.copy() for n, a in base.items()}
                dn = {n: a.copy() for n, a in base.items()}
                up[name][idx] += h
                dn[name][idx] -= h
                f = lambda d: np.log(discretized_mixture_likelihood(y, MixtureParams.create(**d, check=False))).sum()
                fd = (f(up) - f(dn)) / (2 * h)
                an = getattr(g, name)[idx]
                if abs(an) > 1e-8:
                    worst = max(worst, abs(an - fd) / abs(an))
    if worst > 1e-4:
        raise AssertionError(f"max relative gradient error {worst:.2e}")
    return f"max rel err = {worst:.1e}"


def check_coder(rng, trials=100) -> str:
    for _ in range(trials):
        n = int(rng.integers(0, 2000))
        a = int(rng.integers(2, 64))
        tables = quantize_pmfs(rng.dirichlet(np.full(a, 0.5), size=max(n, 1)))
        sym = np.array([rng.choice(a, p=np.diff(t) / 65536) for t in tables[:n]], dtype=np.int64)
        enc = RangeEncoder()
        if n:
            enc.encode(sym, tables[:n])
        payload = enc.finish()
        out = RangeDecoder(payload).decode(tables[:n]) if n else sym
        if not np.array_equal(out, sym):
            raise AssertionError("range coder round trip mismatch")
    return f"{trials} random sequences"


def check_pipeline(rng) -> str:
    w = init_random(int(rng.integers(1 << 31)), 8, 3)
    for mode in ("hyperprior", "joint"):
        x = rng.random((3, 70, 50))
        c, enc = encode_image_traced(x, w, mode)
        res = decode_image(CompressedContainer.from_bytes(c.to_bytes()), w)
        if not (np.array_equal(res.trace.y_hat, enc.y_hat) and np.array_equal(res.trace.z_hat, enc.z_hat)):
            raise AssertionError(f"{mode}: decoded symbols differ")
        if res.image.shape != x.shape:
            raise AssertionError(f"{mode}: decoded shape {res.image.shape}")
    return "hyperprior + joint round trips"


CHECKS = {
    "normalization": check_normalization,
    "gradient": check_gradient,
    "range-coder": check_coder,
    "pipeline": check_pipeline,
}


def run(seed: int = 0, echo=print) -> bool:
    rng = np.random.default_rng(seed)
    ok = True
    for name, fn in CHECKS.items():
        t0 = time.perf_counter()
        try:
            detail = fn(rng)
            status = "PASS"
        except Exception as e:  # report, keep going
            detail, status, ok = f"{type(e).__name__}: {e}", "FAIL", False
        echo(f"{status} {name:14s} {detail} ({time.perf_counter() - t0:.2f}s)")
    return ok

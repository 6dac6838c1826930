"""Encode a few synthetic images in both coding modes and print an RD table.

Random-init weights are untrained, so the numbers only illustrate the rate
accounting and the hyperprior/joint difference, not real codec quality.

    python scripts/rd_demo.py --size 128 --channels 32
"""

import argparse
import time

import numpy as np

from gmmcodec import metrics
from gmmcodec.codec import crop, decode_image, encode_image_traced
from gmmcodec.transforms import init_random, networks


def synthetic(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w] / 48.0
    f = rng.uniform(0.5, 3.0, 3)
    img = np.stack([np.sin(f[c] * xx + c) * np.cos(f[(c + 1) % 3] * yy) for c in range(3)])
    return np.clip(0.5 + 0.35 * img + 0.03 * rng.normal(size=img.shape), 0, 1)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--channels", "-N", type=int, default=32)
    ap.add_argument("--images", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    w = init_random(args.seed, args.channels, 3)
    rows = []
    for i in range(args.images):
        x = synthetic(rng, args.size, args.size)
        for mode in ("hyperprior", "joint"):
            t0 = time.perf_counter()
            c, trace = encode_image_traced(x, w, mode)
            t_enc = time.perf_counter() - t0
            res = decode_image(c, w)
            assert np.array_equal(res.trace.y_hat, trace.y_hat)
            x_hat = crop(networks.synthesis_forward(trace.y_hat, w), x.shape[1:])
            report = metrics.rd_report(x, x_hat, c.bpp, metrics.default_lambda("mse"))
            sec = c.section_bits()
            print(f"img{i} {mode:10s} bpp={c.bpp:.4f} y={sec['y_payload']} z={sec['z_payload']} "
                  f"side-prior={sec['z_prior']} psnr={report.psnr_db:.2f} enc={t_enc:.2f}s")
            rows.append((f"img{i}-{mode}", report))
    print()
    print(metrics.csv_table(rows), end="")


if __name__ == "__main__":
    main()

"""Render the per-position coded bits of a container as a PGM heat map.

    python scripts/bits_map.py image.gmmc --init-seed 0 -o bits.pgm
"""

import argparse
from pathlib import Path

import numpy as np

from gmmcodec import fileio
from gmmcodec.codec import element_bits
from gmmcodec.container import CompressedContainer
from gmmcodec.transforms import init_random, load_weights


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("container", type=Path)
    g = ap.add_mutually_exclusive_group(required=True)
    g.add_argument("--weights", type=Path)
    g.add_argument("--init-seed", type=int)
    ap.add_argument("-o", "--output", type=Path, default=Path("bits.pgm"))
    ap.add_argument("--upscale", type=int, default=16, help="pixels per latent position")
    args = ap.parse_args()

    c = CompressedContainer.from_bytes(args.container.read_bytes())
    w = load_weights(args.weights) if args.weights else init_random(args.init_seed, c.N, c.K)
    bits = element_bits(c, w).sum(axis=0)
    heat = np.kron(bits / max(bits.max(), 1e-12), np.ones((args.upscale, args.upscale)))
    fileio.write_image(args.output, heat[None])
    print(f"{bits.shape[0]}x{bits.shape[1]} positions, {bits.sum():.1f} bits, max {bits.max():.1f} per position")
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()

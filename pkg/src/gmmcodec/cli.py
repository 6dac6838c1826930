"""Command-line front end: ``gmmc encode|decode|inspect|selftest|bench``.

Exit codes: 0 success, 1 usage (including weights that do not match a
container), 2 I/O or file-format error, 3 corrupt stream, 4 selftest failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import codec, fileio, metrics, selftest
from .container import CompressedContainer
from .errors import (
    CodecError,
    CorruptStreamError,
    StreamExhaustedError,
    WeightFormatError,
    WeightMismatchError,
)
from .transforms import init_random, load_weights, networks

log = logging.getLogger("gmmcodec")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_CORRUPT, EXIT_SELFTEST = 0, 1, 2, 3, 4
IMAGE_SUFFIXES = (".ppm", ".pgm", ".pnm", ".tnsr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class CliConfig:
    command: str
    input: Path | None = None
    output: Path | None = None
    weights: Path | None = None
    init_seed: int | None = None
    mode: str = "hyperprior"
    N: int = 128
    K: int = 3
    lmbda: float | None = None
    metric: str = "mse"
    verbosity: int = 0
    bits_map: Path | None = None

    def __post_init__(self):
        if self.K < 1 or self.N < 1:
            raise UsageError("N and K must be >= 1")
        if self.mode not in codec.CODING_MODES:
            raise UsageError(f"mode must be one of {codec.CODING_MODES}")
        if self.input is not None and self.output is not None:
            if Path(self.input).resolve() == Path(self.output).resolve():
                raise UsageError("input and output paths must differ")
        if self.lmbda is None:
            self.lmbda = metrics.default_lambda(self.metric)
        try:
            metrics.validate_lambda(self.lmbda, self.metric)
        except (ValueError, CodecError) as e:
            raise UsageError(str(e)) from None


def _weight_args(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--weights", type=Path, help="GMXW weight file")
    g.add_argument("--init-seed", type=int, help="use deterministic random weights with this seed")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gmmc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    e = sub.add_parser("encode", help="image -> GMMC container")
    e.add_argument("input", type=Path)
    e.add_argument("output", type=Path)
    _weight_args(e)
    e.add_argument("--mode", choices=codec.CODING_MODES, default="hyperprior")
    e.add_argument("-N", type=int, default=128)
    e.add_argument("-K", type=int, default=3)
    e.add_argument("--lambda", dest="lmbda", type=float)
    e.add_argument("--metric", choices=("mse", "ms-ssim"), default="mse")

    d = sub.add_parser("decode", help="GMMC container -> image (PPM/PGM/TNSR by suffix)")
    d.add_argument("input", type=Path)
    d.add_argument("output", type=Path)
    _weight_args(d)

    i = sub.add_parser("inspect", help="dump container header and rate breakdown")
    i.add_argument("input", type=Path)
    _weight_args(i)
    i.add_argument("--bits-map", type=Path, help="write per-element bits (sum over channels) as .tnsr or .pgm")

    sub.add_parser("selftest", help="run quick property checks").add_argument("--seed", type=int, default=0)

    b = sub.add_parser("bench", help="encode every image in a directory, emit CSV")
    b.add_argument("input", type=Path)
    b.add_argument("--csv", type=Path, help="write CSV here instead of stdout")
    _weight_args(b)
    b.add_argument("--mode", choices=codec.CODING_MODES, default="hyperprior")
    b.add_argument("-N", type=int, default=128)
    b.add_argument("-K", type=int, default=3)
    b.add_argument("--lambda", dest="lmbda", type=float)
    b.add_argument("--metric", choices=("mse", "ms-ssim"), default="mse")
    return p


def _weights(args, N=None, K=None):
    if args.weights is not None:
        w = load_weights(args.weights)
        if N is not None and (w.N, w.K) != (N, K):
            log.warning("weight file has N=%d K=%d; overriding -N/-K", w.N, w.K)
        return w
    if args.init_seed is None:
        raise UsageError("one of --weights or --init-seed is required")
    return init_random(args.init_seed, N, K)


def _encode_one(x, w, cfg: CliConfig):
    container, trace = codec.encode_image_traced(x, w, cfg.mode)
    x_hat = codec.crop(networks.synthesis_forward(trace.y_hat, w), x.shape[1:])
    report = metrics.rd_report(x, x_hat, container.bpp, cfg.lmbda, cfg.metric)
    return container, report


def cmd_encode(args, out) -> int:
    cfg = CliConfig("encode", args.input, args.output, args.weights, args.init_seed, args.mode, args.N, args.K, args.lmbda, args.metric)
    w = _weights(args, cfg.N, cfg.K)
    x = fileio.read_image(cfg.input)
    container, report = _encode_one(x, w, cfg)
    fileio.atomic_write(cfg.output, container.to_bytes())
    out.write(report.to_kv())
    return EXIT_OK


def _read_container(path) -> CompressedContainer:
    return CompressedContainer.from_bytes(Path(path).read_bytes())


def cmd_decode(args, out) -> int:
    CliConfig("decode", args.input, args.output)
    c = _read_container(args.input)
    w = _weights(args, c.N, c.K)
    res = codec.decode_image(c, w)
    fileio.write_image(args.output, res.image)
    out.write(f"width={c.width}\nheight={c.height}\nchecksum=ok\nbpp={c.bpp:.6f}\n")
    return EXIT_OK


def cmd_inspect(args, out) -> int:
    c = _read_container(args.input)
    ph, pw = c.padded_shape
    lines = [
        "magic=GMMC",
        f"mode={c.mode}",
        f"N={c.N}",
        f"K={c.K}",
        f"width={c.width}",
        f"height={c.height}",
        f"padded={pw}x{ph}",
        f"weights_checksum={c.weights_checksum:016x}",
        f"bytes_total={len(c)}",
    ]
    lines += [f"bits_{k}={v}" for k, v in c.section_bits().items()]
    lines.append(f"bpp={c.bpp:.6f}")
    if args.weights is not None or args.init_seed is not None:
        w = _weights(args, c.N, c.K)
        bits = codec.element_bits(c, w)
        total = float(bits.sum())
        lines.append(f"y_model_bits={total:.6f}")
        lines.append(f"y_payload_bits={len(c.y_payload) * 8}")
        edges = [0, 0.5, 1, 2, 4, 8, 16, np.inf]
        hist, _ = np.histogram(bits, bins=edges)
        for lo, hi, n in zip(edges[:-1], edges[1:], hist):
            lines.append(f"bits_hist[{lo},{hi})={n}")
        if args.bits_map is not None:
            heat = bits.sum(axis=0)
            if args.bits_map.suffix.lower() in (".tnsr", ".tns"):
                fileio.write_tensor(args.bits_map, heat.astype(np.float64))
            else:
                peak = heat.max() if heat.max() > 0 else 1.0
                fileio.atomic_write(args.bits_map, fileio.pnm_to_bytes(heat / peak))
    elif args.bits_map is not None:
        raise UsageError("--bits-map needs --weights or --init-seed")
    out.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_selftest(args, out) -> int:
    ok = selftest.run(args.seed, echo=lambda s: out.write(s + "\n"))
    return EXIT_OK if ok else EXIT_SELFTEST


def cmd_bench(args, out) -> int:
    cfg = CliConfig("bench", None, None, args.weights, args.init_seed, args.mode, args.N, args.K, args.lmbda, args.metric)
    w = _weights(args, cfg.N, cfg.K)
    if not args.input.is_dir():
        raise UsageError(f"{args.input} is not a directory")
    files = sorted(p for p in args.input.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    threads = max(1, int(os.environ.get("GMXC_THREADS", os.cpu_count() or 1)))

    def job(path):
        return path.name, _encode_one(fileio.read_image(path), w, cfg)[1]

    with ThreadPoolExecutor(max_workers=threads) as pool:
        rows = list(pool.map(job, files))
    text = metrics.csv_table(rows)
    if args.csv is not None:
        fileio.atomic_write(args.csv, text.encode())
    else:
        out.write(text)
    return EXIT_OK


COMMANDS = {
    "encode": cmd_encode,
    "decode": cmd_decode,
    "inspect": cmd_inspect,
    "selftest": cmd_selftest,
    "bench": cmd_bench,
}


def run(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
        return COMMANDS[args.command](args, out)
    except UsageError as e:
        err.write(f"usage error: {e}\n")
        return EXIT_USAGE
    except (CorruptStreamError, StreamExhaustedError) as e:
        err.write(f"corrupt stream: {e}\n")
        return EXIT_CORRUPT
    except WeightMismatchError as e:
        err.write(f"{e}\n")
        return EXIT_USAGE
    except (OSError, WeightFormatError, fileio.ImageFormatError) as e:
        err.write(f"I/O error: {e}\n")
        return EXIT_IO
    except CodecError as e:
        err.write(f"error: {e}\n")
        return EXIT_USAGE


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()

import numpy as np
import pytest

from gmmcodec.codec import crop, decode_image, element_bits, encode_image, encode_image_traced, pad_reflect
from gmmcodec.container import HEADER_BYTES, CompressedContainer, pack_prior_counts, unpack_prior_counts
from gmmcodec.errors import CorruptStreamError, GeometryError, StreamExhaustedError, WeightMismatchError
from gmmcodec.transforms import init_random


def smooth_image(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    base = np.stack([np.sin(3 * xx + c) * np.cos(2 * yy - c) for c in range(3)])
    return np.clip(0.5 + 0.3 * base + 0.05 * rng.normal(size=(3, h, w)), 0, 1)


# ---- padding -----------------------------------------------------------------


def test_pad_noop_on_multiple():
    x = np.zeros((3, 768, 512))
    p, shape = pad_reflect(x)
    assert p.shape == x.shape and shape == (768, 512)


def test_pad_65_reflects():
    x = np.random.default_rng(0).random((3, 65, 65))
    p, shape = pad_reflect(x)
    assert p.shape == (3, 128, 128) and shape == (65, 65)
    # mirror about the last row/column, edge sample not repeated
    assert np.array_equal(p[:, 65, :65], x[:, 63])
    assert np.array_equal(p[:, :65, 66], x[:, :, 62])
    assert np.array_equal(crop(p, shape), x)


def test_pad_single_pixel_is_constant():
    x = np.full((3, 1, 1), 0.25)
    p, _ = pad_reflect(x)
    assert p.shape == (3, 64, 64) and np.all(p == 0.25)


def test_pad_rejects_empty():
    with pytest.raises(GeometryError):
        pad_reflect(np.zeros((3, 0, 4)))


# ---- round trips -----------------------------------------------------------------


@pytest.mark.parametrize("mode", ["hyperprior", "joint"])
def test_round_trip_symbols_and_tables(small_weights, rng, mode):
    x = smooth_image(rng, 70, 90)
    c, enc = encode_image_traced(x, small_weights, mode, keep_tables=True)
    res = decode_image(CompressedContainer.from_bytes(c.to_bytes()), small_weights, keep_tables=True)
    assert np.array_equal(res.trace.y_hat, enc.y_hat)
    assert np.array_equal(res.trace.z_hat, enc.z_hat)
    assert np.array_equal(res.trace.y_tables, enc.y_tables)
    assert np.array_equal(res.trace.z_tables, enc.z_tables)
    assert res.image.shape == x.shape
    assert res.image.min() >= 0 and res.image.max() <= 1


def test_decoding_is_deterministic(small_weights, rng):
    c = encode_image(smooth_image(rng, 64, 64), small_weights, "joint")
    a = decode_image(c, small_weights).image
    b = decode_image(c, small_weights).image
    assert np.array_equal(a, b)


def test_bpp_identity(small_weights, rng):
    x = smooth_image(rng, 50, 33)
    c = encode_image(x, small_weights)
    blob = c.to_bytes()
    assert len(blob) == len(c)
    assert c.bpp == len(blob) * 8 / (50 * 33)
    assert sum(c.section_bits().values()) == len(blob) * 8
    assert blob[:4] == b"GMMC" and len(blob) > HEADER_BYTES


@pytest.mark.parametrize("mode", ["hyperprior", "joint"])
def test_payload_close_to_model_rate(small_weights, rng, mode):
    c, trace = encode_image_traced(smooth_image(rng, 128, 128), small_weights, mode)
    est = trace.y_bits.sum()
    bits = len(c.y_payload) * 8
    assert bits <= est * 1.001 + 128
    assert bits >= est - 64
    # the quantized tables cost little over the continuous model
    cont = -np.log2(trace.y_likelihood).sum()
    assert est <= cont + 0.02 * trace.y_hat.size + 64


@pytest.mark.parametrize("mode", ["hyperprior", "joint"])
def test_element_bits_sum_matches_estimate(small_weights, rng, mode):
    c, trace = encode_image_traced(smooth_image(rng, 64, 128), small_weights, mode)
    bits = element_bits(c, small_weights)
    assert bits.shape == trace.y_hat.shape
    assert abs(bits.sum() - trace.y_bits.sum()) <= 1e-6 * trace.y_bits.sum()


def test_weight_mismatch(small_weights, rng):
    c = encode_image(smooth_image(rng, 64, 64), small_weights)
    with pytest.raises(WeightMismatchError):
        decode_image(c, init_random(8, 8, 3))


def test_modes_validated(small_weights):
    with pytest.raises(ValueError):
        encode_image(np.zeros((3, 64, 64)), small_weights, "factorized")
    with pytest.raises(GeometryError):
        encode_image(np.zeros((1, 64, 64)), small_weights)


# ---- container ------------------------------------------------------------------


@pytest.fixture(scope="module")
def blob(small_weights):
    x = smooth_image(np.random.default_rng(5), 64, 64)
    return encode_image(x, small_weights, "joint").to_bytes()


def test_container_round_trip(blob):
    c = CompressedContainer.from_bytes(blob)
    assert c.mode == "joint" and (c.height, c.width) == (64, 64) and c.N == 8 and c.K == 3
    assert c.to_bytes() == blob


@pytest.mark.parametrize("where", [0, 5, 30, -20, -1])
def test_container_bit_flip_caught(blob, where):
    b = bytearray(blob)
    b[where] ^= 0x10
    with pytest.raises(CorruptStreamError):
        CompressedContainer.from_bytes(bytes(b))


@pytest.mark.parametrize("keep", [0, 10, 40])
def test_container_truncation_caught(blob, keep):
    with pytest.raises(CorruptStreamError):
        CompressedContainer.from_bytes(blob[:keep])


def test_truncated_payload_inside_valid_container(blob, small_weights):
    c = CompressedContainer.from_bytes(blob)
    cut = CompressedContainer(**{**c.__dict__, "y_payload": c.y_payload[: len(c.y_payload) // 3]})
    with pytest.raises((StreamExhaustedError, CorruptStreamError)):
        decode_image(CompressedContainer.from_bytes(cut.to_bytes()), small_weights)


def test_prior_counts_pack_round_trip(rng):
    counts = np.ones((4, 512), dtype=np.int64)
    for c in range(4):
        lo = rng.integers(0, 400)
        n = rng.integers(1, 100)
        extra = rng.multinomial(65536 - 512, np.ones(n) / n)
        counts[c, lo : lo + n] += extra
    assert np.array_equal(unpack_prior_counts(pack_prior_counts(counts), 4), counts)
    with pytest.raises(CorruptStreamError):
        unpack_prior_counts(pack_prior_counts(counts)[:-2], 4)

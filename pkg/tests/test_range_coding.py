import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from gmmcodec.entropy_models import build_quantized_cdf, quantize_pmfs
from gmmcodec.errors import CodingInfeasibleError, GeometryError, StreamExhaustedError
from gmmcodec.range_coding import (
    RangeDecoder,
    RangeEncoder,
    quantized_cross_entropy_bits,
    rc_decode,
    rc_decode_indexed,
    rc_encode,
    rc_encode_indexed,
)


def test_empty_sequence_payload_is_tiny():
    payload = rc_encode([], [])
    assert len(payload) <= 8
    assert rc_decode(payload, []).size == 0


def test_uniform_eight_symbols_round_trip():
    table = build_quantized_cdf(np.full(8, 1 / 8))
    sym = np.arange(8)
    payload = rc_encode(sym, [table] * 8)
    assert np.array_equal(rc_decode(payload, [table] * 8), sym)
    # 24 bits of information plus flush overhead
    assert len(payload) * 8 <= 24 + 64


def test_binary_uniform_one_bit_per_symbol():
    tables = np.broadcast_to(build_quantized_cdf([0.5, 0.5]).cdf, (8, 3))
    sym = [1, 0, 1, 1, 0, 0, 1, 0]
    payload = rc_encode(sym, tables)
    assert len(payload) >= 1 + 1  # leading zero byte plus data
    assert rc_decode(payload, tables).tolist() == sym


def test_certain_symbol_costs_almost_nothing():
    table = build_quantized_cdf([1 - 1e-9, 1e-9])
    payload = rc_encode(np.zeros(10_000, dtype=int), [table] * 10_000)
    assert len(payload) <= 8 + 10_000 * 2.3e-5 / 8 + 2


def test_efficiency_against_entropy(rng):
    pmf = rng.dirichlet(np.full(40, 0.4))
    table = build_quantized_cdf(pmf)
    n = 100_000
    sym = rng.choice(40, size=n, p=table.probabilities)
    payload = rc_encode_indexed(sym, np.zeros(n, dtype=int), table.cdf[None])
    ideal = quantized_cross_entropy_bits(sym, np.broadcast_to(table.cdf, (n, table.cdf.size)))
    assert len(payload) * 8 <= ideal + 64
    h = oracles.entropy_bits(table.probabilities)
    assert abs(ideal / n - h) < 0.02


def test_per_symbol_tables_round_trip(rng):
    n = 3000
    tables = quantize_pmfs(rng.dirichlet(np.full(512, 0.05), size=n))
    sym = np.array([rng.choice(512, p=np.diff(t) / 65536) for t in tables])
    payload = rc_encode(sym, tables)
    assert np.array_equal(rc_decode(payload, tables), sym)


def test_offset_and_indexes(rng):
    tables = quantize_pmfs(rng.dirichlet(np.ones(512), size=4))
    idx = rng.integers(0, 4, 500)
    vals = rng.integers(-255, 257, 500)
    payload = rc_encode_indexed(vals, idx, tables, offset=-255)
    assert np.array_equal(rc_decode_indexed(payload, idx, tables, offset=-255), vals)


def test_incremental_batches_match_single_call(rng):
    tables = quantize_pmfs(rng.dirichlet(np.ones(16), size=200))
    sym = rng.integers(0, 16, 200)
    enc = RangeEncoder(capacity=4)
    for a, b in ((0, 13), (13, 150), (150, 200)):
        enc.encode(sym[a:b], tables[a:b])
    payload = enc.finish()
    assert payload == rc_encode(sym, tables)
    dec = RangeDecoder(payload)
    got = np.concatenate([dec.decode(tables[:70]), dec.decode(tables[70:])])
    assert np.array_equal(got, sym)


def test_variable_length_tables(rng):
    cdfs = [build_quantized_cdf(rng.dirichlet(np.ones(a))) for a in (2, 5, 300, 3)]
    sym = [1, 4, 299, 0]
    assert rc_decode(rc_encode(sym, cdfs), cdfs).tolist() == sym


def test_truncated_payload_raises(rng):
    tables = quantize_pmfs(rng.dirichlet(np.ones(512), size=2000))
    sym = rng.integers(0, 512, 2000)
    payload = rc_encode(sym, tables)
    with pytest.raises(StreamExhaustedError):
        rc_decode(payload[: len(payload) // 2], tables)
    with pytest.raises(StreamExhaustedError):
        rc_decode(payload[:3], tables)


def test_zero_width_symbol_rejected():
    cdf = np.array([[0, 65536, 65536]])
    with pytest.raises(CodingInfeasibleError):
        rc_encode([1], cdf)


def test_shape_errors():
    t = quantize_pmfs(np.full((2, 4), 0.25))
    with pytest.raises(GeometryError):
        rc_encode([0, 1, 2], t)
    with pytest.raises(GeometryError):
        rc_encode_indexed([0], [5], t)


def test_finish_is_idempotent():
    enc = RangeEncoder()
    enc.encode([3], quantize_pmfs(np.full((1, 4), 0.25)))
    assert enc.finish() == enc.finish()
    with pytest.raises(RuntimeError):
        enc.encode([0], quantize_pmfs(np.full((1, 4), 0.25)))


@settings(max_examples=60)
@given(st.data())
def test_round_trip_property(data):
    a = data.draw(st.integers(2, 512))
    n = data.draw(st.integers(0, 300))
    seed = data.draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    conc = data.draw(st.sampled_from([0.01, 0.3, 5.0]))
    tables = quantize_pmfs(rng.dirichlet(np.full(a, conc), size=max(n, 1)))[:n]
    sym = np.array([rng.choice(a, p=np.diff(t) / 65536) for t in tables], dtype=np.int64)
    payload = rc_encode(sym, tables)
    assert np.array_equal(rc_decode(payload, tables), sym)
    assert len(payload) <= quantized_cross_entropy_bits(sym, tables) / 8 + 16


@settings(max_examples=40)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=2000))
def test_skewed_binary_streams(bits):
    # long runs of a near-certain symbol exercise carry propagation
    t = build_quantized_cdf([1 - 2.0**-15, 2.0**-15]).cdf
    tables = np.broadcast_to(t, (len(bits), 3))
    assert rc_decode(rc_encode(bits, tables), tables).tolist() == bits

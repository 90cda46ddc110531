"""Genotype invariants, decoding oracles and the binary state encoding.

The numeric expected values below were computed by hand from the layer
formulas (conv: out*(in*k^2+1) weights, (h+2p-k)//s+1 spatial; linear:
out*(in+1); norms: 2c; convlstm: 4x conv at kernel 3) and are frozen.
"""

import math

import pytest
from hypothesis import given, strategies as st

from conftest import make_genotype
from neurogrow.fitness import bitfield_space
from neurogrow.genome import (
    BOUNDARY,
    DecodeError,
    EncodingError,
    Genotype,
    StateSchema,
    decode,
    encode_binary,
    minimal_genotype,
    parameter_count,
    state_index,
    validate,
)


# ---------------------------------------------------------------- validation

def test_minimal_genotype_is_valid(cnn_space):
    g = minimal_genotype(cnn_space, 1)
    assert validate(g, cnn_space) == []
    assert g.cell_count() == 2
    assert g.counts() == {("feature", "conv"): 1, ("classifier", "linear"): 1}


def test_minimal_genotype_lstm_has_only_encoder(lstm_space):
    g = minimal_genotype(lstm_space, 1)
    assert set(g.strands) == {"encoder"}
    assert validate(g, lstm_space) == []


def test_validate_rejects_broken_chain(cnn_space):
    g = make_genotype(1, {
        "feature": [("conv", (16, 3, 1, 0), ()), ("conv", (16, 3, 1, 0), ())],
        "classifier": [("linear", (32,), ())],
    })
    g.strands["feature"][1].in_key = 99
    issues = validate(g, cnn_space)
    assert any("chain" in i or "link" in i for i in issues)


def test_validate_rejects_cycle(cnn_space):
    g = make_genotype(1, {
        "feature": [("conv", (16, 3, 1, 0), ()), ("conv", (16, 3, 1, 0), ())],
        "classifier": [("linear", (32,), ())],
    })
    a, b = g.strands["feature"]
    a.in_key, b.out_key = b.key, a.key  # 2-cycle, no head
    issues = validate(g, cnn_space)
    assert any("cycle" in i for i in issues)


def test_validate_rejects_out_of_domain_attr(cnn_space):
    g = make_genotype(1, {
        "feature": [("conv", (16, 99, 1, 0), ())],
        "classifier": [("linear", (32,), ())],
    })
    issues = validate(g, cnn_space)
    assert any("kernel=99" in i for i in issues)


def test_validate_rejects_disallowed_affiliated(cnn_space):
    g = make_genotype(1, {
        "feature": [("conv", (16, 3, 1, 0), ("groupnorm",))],
        "classifier": [("linear", (32,), ())],
    })
    assert any("affiliated" in i for i in validate(g, cnn_space))


def test_validate_rejects_wrong_organ_cell(cnn_space):
    g = make_genotype(1, {
        "feature": [("linear", (32,), ())],
        "classifier": [("linear", (32,), ())],
    })
    assert any("not allowed in organ" in i for i in validate(g, cnn_space))


def test_validate_rejects_ceiling_violation(bits_space):
    g = make_genotype(1, {"body": [("unit", (1, 1, 1, 1), ())] * 5})
    assert any("ceiling" in i for i in validate(g, bits_space))


def test_validate_rejects_missing_strand(cnn_space):
    g = make_genotype(1, {"feature": [("conv", (16, 3, 1, 0), ())]})
    assert any("strands" in i for i in validate(g, cnn_space))


# ------------------------------------------------------------------ decoding

def test_cnn_minimal_decode_oracle(cnn_space):
    """conv(16,k3,s1,p0)+bn+relu+pool then linear(32)+relu on 3x32x32.

    Hand: conv 16*(3*9+1)=448; bn 2*16=32; 32->30 conv, pool->15;
    linear in 16*15*15=3600, params 32*3601=115232. Total 115712, 6 layers.
    """
    g = minimal_genotype(cnn_space, 1)
    ph = decode(g, cnn_space, (3, 32, 32))
    assert [n.kind for n in ph.nodes] == [
        "conv", "batchnorm", "relu", "maxpool", "linear", "relu",
    ]
    assert ph.layer_count == 6
    assert ph.param_count == 115712
    assert ph.nodes[4].attrs == {"in_features": 3600, "out_features": 32}
    assert ph.cell_counts == {"conv": 1, "linear": 1}
    assert ph.edges == [(i, i + 1) for i in range(5)]


def test_lenet_like_decode_oracle(cnn_space):
    """Five cells on 1x32x32; hand total 208+3216+48120+10164+1360 = 63068."""
    g = make_genotype(7, {
        "feature": [
            ("conv", (8, 5, 1, 0), ("maxpool",)),
            ("conv", (16, 5, 1, 0), ("maxpool",)),
        ],
        "classifier": [
            ("linear", (120,), ()),
            ("linear", (84,), ()),
            ("linear", (16,), ()),
        ],
    })
    ph = decode(g, cnn_space, (1, 32, 32))
    assert ph.layer_count == 7
    assert ph.param_count == 63068
    # spatial chain: 32 -> 28 -> 14 -> 10 -> 5 -> flatten 400
    assert ph.nodes[4].attrs["in_features"] == 400


def test_gan_minimal_decode_oracle(gan_space):
    """convtranspose(32,k2,s1,p0)+bn on (100,): 32*(100*4+1)=12832, bn 64;
    1 -> 2 spatial; then conv(32,k2,s1,p0): 32*(32*4+1)=4128, bn 64. Total 17088."""
    g = minimal_genotype(gan_space, 1)
    ph = decode(g, gan_space, (100,))
    assert ph.param_count == 17088
    assert ph.nodes[0].attrs["in_channels"] == 100


def test_lstm_mirror_decode_oracle(lstm_space):
    """Encoder conv(16,k3,s1,p0) mirrors to decoder convtranspose with the
    same attrs. Hand: 16*(1*9+1)=160 and 16*(16*9+1)=2320, total 2480; the
    mirrored convtranspose restores 62 -> 64."""
    g = minimal_genotype(lstm_space, 1)
    ph = decode(g, lstm_space, (10, 1, 64, 64))
    kinds = [n.kind for n in ph.nodes]
    assert kinds == ["conv", "leakyrelu", "convtranspose", "leakyrelu"]
    assert ph.param_count == 2480
    assert [n.organ for n in ph.nodes] == ["encoder", "encoder", "decoder", "decoder"]


def test_lstm_mirror_reverses_and_keeps_convlstm(lstm_space):
    g = make_genotype(1, {
        "encoder": [
            ("conv", (16, 3, 1, 1), ()),
            ("convlstm", (3,), ()),
        ],
    })
    ph = decode(g, lstm_space, (10, 1, 64, 64))
    kinds = [n.kind for n in ph.nodes]
    assert kinds == ["conv", "convlstm", "convlstm", "convtranspose"]
    # convlstm params: 4 * 3 * (16*9 + 1) = 1740 each
    lstm_nodes = [n for n in ph.nodes if n.kind == "convlstm"]
    assert all(4 * 3 * (n.attrs["in_channels"] * 9 + 1) ==
               4 * n.attrs["out_channels"] * (n.attrs["in_channels"] * 9 + 1)
               for n in lstm_nodes)
    # conv 160; convlstm 4*3*(16*9+1)=1740; mirrored convlstm 4*3*(3*9+1)=336;
    # mirrored convtranspose 16*(3*9+1)=448
    assert parameter_count(ph) == 160 + 1740 + 336 + 448


def test_decode_underflow_raises(cnn_space):
    g = make_genotype(1, {
        "feature": [("conv", (16, 3, 4, 0), ("maxpool",))] * 3,
        "classifier": [("linear", (32,), ())],
    })
    with pytest.raises(DecodeError):
        decode(g, cnn_space, (3, 32, 32))


def test_decode_rejects_invalid_genotype(cnn_space):
    g = make_genotype(1, {"feature": [("conv", (16, 3, 1, 0), ())]})
    with pytest.raises(ValueError):
        decode(g, cnn_space, (3, 32, 32))


# ------------------------------------------------------- clone and key reuse

def test_clone_is_deep_for_strands_and_fitness(cnn_space):
    g = minimal_genotype(cnn_space, 1)
    g.fitness = type("R", (), {"__copy__": None})  # placeholder record
    c = g.clone(2)
    c.strands["feature"][0].attrs = (24, 3, 1, 0)
    assert g.strands["feature"][0].attrs == (16, 3, 1, 0)
    assert c.id == 2 and g.id == 1


def test_allocate_key_monotone(cnn_space):
    g = minimal_genotype(cnn_space, 1)
    ks = [g.allocate_key() for _ in range(5)]
    assert ks == sorted(ks) and len(set(ks)) == 5
    assert BOUNDARY not in ks


# ----------------------------------------------------------- JSON round trip

def test_genotype_json_round_trip(cnn_space):
    g = make_genotype(9, {
        "feature": [("conv", (24, 5, 1, 2), ("relu", "maxpool"))],
        "classifier": [("linear", (64,), ("relu",)), ("linear", (16,), ())],
    })
    doc = g.to_json()
    assert set(doc) == {"id", "strands"}
    back = Genotype.from_json(doc)
    assert back.to_json() == doc
    assert validate(back, cnn_space) == []
    assert back.next_key == max(gene.key for s in g.strands.values() for gene in s) + 1


# ------------------------------------------------------------ state encoding

def test_state_index_little_endian():
    """First attribute is the least significant digit of the mixed radix."""
    space = bitfield_space(2, 4)
    schema = StateSchema.for_space(space)
    g = make_genotype(1, {"body": [("unit", (2, 1, 2, 1), ())]})
    # digits (1,0,1,0) -> 1 + 0*2 + 1*4 + 0*8 = 5
    assert state_index(g.strands["body"][0], schema) == 5


def test_encode_binary_frozen_oracle():
    """Index 5 in 4 bits renders MSB-first as 0101; the empty slot is 0000."""
    space = bitfield_space(2, 4)
    schema = StateSchema.for_space(space)
    g = make_genotype(1, {"body": [("unit", (2, 1, 2, 1), ())]})
    assert encode_binary(g, schema) == "01010000"


def test_schema_widths_cnn(cnn_space):
    """conv states 1017*11*4*6=268488 -> 19 bits; linear 4081 -> 12 bits."""
    schema = StateSchema.for_space(cnn_space)
    assert schema.bits_per_cell == {"conv": 19, "linear": 12}
    assert schema.slots_per_cell == {"conv": 32, "linear": 32}
    assert schema.total_bits == 32 * 19 + 32 * 12


def test_encode_binary_catalog_order(cnn_space):
    schema = StateSchema.for_space(cnn_space)
    g = make_genotype(1, {
        "feature": [("conv", (8, 1, 1, 0), ())],
        "classifier": [("linear", (17,), ())],
    })
    s = encode_binary(g, schema)
    assert len(s) == schema.total_bits
    # conv at its domain floor packs to state 0; linear 17 -> state 1
    assert s[: 32 * 19] == "0" * 32 * 19
    assert s[32 * 19: 32 * 19 + 12] == "000000000001"


def test_encode_binary_rejects_overflow():
    space = bitfield_space(1, 4)
    schema = StateSchema.for_space(space)
    g = make_genotype(1, {"body": [("unit", (1, 1, 1, 1), ())] * 2})
    with pytest.raises(EncodingError):
        encode_binary(g, schema)


def test_encode_binary_rejects_out_of_domain():
    space = bitfield_space(1, 4)
    schema = StateSchema.for_space(space)
    g = make_genotype(1, {"body": [("unit", (3, 1, 1, 1), ())]})
    with pytest.raises(EncodingError):
        encode_binary(g, schema)


@given(st.lists(st.tuples(*[st.integers(1, 2)] * 4), min_size=1, max_size=4))
def test_encoding_width_constant(cells):
    space = bitfield_space(4, 4)
    schema = StateSchema.for_space(space)
    g = make_genotype(1, {"body": [("unit", attrs, ()) for attrs in cells]})
    s = encode_binary(g, schema)
    assert len(s) == 16 and set(s) <= {"0", "1"}


@given(st.tuples(*[st.integers(1, 2)] * 4))
def test_state_index_bijective_per_cell(attrs):
    space = bitfield_space(1, 4)
    schema = StateSchema.for_space(space)
    g = make_genotype(1, {"body": [("unit", attrs, ())]})
    idx = state_index(g.strands["body"][0], schema)
    digits = [(v - 1) for v in attrs]
    assert idx == sum(d * 2 ** i for i, d in enumerate(digits))
    assert 0 <= idx < 16

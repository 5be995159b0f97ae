import math
import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from vecrel.core import (
    INT_MAX,
    INT_MIN,
    Column,
    ComparisonTypeError,
    CorruptionError,
    DatabaseInstance,
    DatabaseSchema,
    RelationSchema,
    SchemaError,
    ValueKindError,
    VectorRelation,
    VectorRow,
    canonical_bytes,
    check_instance,
    check_value,
    compare,
    deserialize_value,
    hash_canonical,
    serialize_value,
    values_equal,
)

# Frozen from a standalone C implementation of the documented digest
# (two FNV-1a 64 passes over the tag/separator serialization).
MARCO_AURELIO_INDEX = "e515c7b2ac09cfddcea85227f0b3eb48"
MIXED_TUPLE_INDEX = "102abc841a57728ec2ddcdd2c7ee0a73"  # (1, Null, "a", 2.5)

values = st.one_of(
    st.none(),
    st.integers(INT_MIN, INT_MAX),
    st.floats(allow_nan=False, allow_infinity=False),
    st.text(alphabet=st.characters(blacklist_characters="\x1e\x1f", blacklist_categories=("Cs",))),
)


def test_marco_aurelio_golden_index():
    assert hash_canonical(["Marco Aurelio"]) == MARCO_AURELIO_INDEX


def test_mixed_tuple_golden_index():
    assert hash_canonical([1, None, "a", 2.5]) == MIXED_TUPLE_INDEX


def test_fnv_halves_match_published_vectors():
    from vecrel.core import FNV_BASIS_HI, _fnv1a64

    assert _fnv1a64(b"", FNV_BASIS_HI) == 0xCBF29CE484222325
    assert _fnv1a64(b"a", FNV_BASIS_HI) == 0xAF63DC4C8601EC8C
    assert _fnv1a64(b"foobar", FNV_BASIS_HI) == 0x85944171F73967E8


def test_serialization_layout():
    assert canonical_bytes([1, None, "a", 2.5]) == (
        b"\x01" + struct.pack(">q", 1) + b"\x1f\x00\x1f\x03a\x1f\x02" + struct.pack(">d", 2.5) + b"\x1e"
    )


def test_hash_shape_and_determinism():
    h = hash_canonical([1, "x"])
    assert len(h) == 32 and h == h.lower() and int(h, 16) >= 0
    assert h == hash_canonical([1, "x"])


def test_hash_separates_trailing_null():
    assert hash_canonical(["a"]) != hash_canonical(["a", None])


def test_hash_separates_kinds():
    assert hash_canonical([1]) != hash_canonical([1.0]) != hash_canonical(["1"])


def test_hash_rejects_empty():
    with pytest.raises(ValueError):
        hash_canonical([])


@given(values)
def test_serialize_round_trip(v):
    assert deserialize_value(serialize_value(v)) == v


@given(st.lists(values, min_size=1, max_size=4), st.lists(values, min_size=1, max_size=4))
def test_serialization_injective(a, b):
    if canonical_bytes(a) == canonical_bytes(b):
        assert [serialize_value(x) for x in a] == [serialize_value(x) for x in b]


@pytest.mark.parametrize("bad", [True, math.nan, math.inf, 2**63, "a\x1fb", b"x", [1]])
def test_check_value_rejects(bad):
    with pytest.raises(ValueKindError):
        check_value(bad)


def test_negative_zero_normalized():
    assert serialize_value(check_value(-0.0)) == serialize_value(0.0)


def test_null_never_equal():
    assert not values_equal(None, None)
    assert not compare("=", None, 1)
    assert not compare("<", None, 1)


def test_cross_kind_comparisons():
    assert compare("=", 1, 1.0)
    assert compare("<", 1, 1.5)
    assert not compare("=", 1, "1")
    with pytest.raises(ComparisonTypeError):
        compare("<", 1, "a")


def test_text_order_is_code_point():
    assert compare("<", "B", "a")


def test_reserved_relation_name():
    with pytest.raises(SchemaError):
        DatabaseSchema([RelationSchema("r_V", [Column("a")])])


def test_schema_invariants():
    with pytest.raises(SchemaError):
        RelationSchema("R", [])
    with pytest.raises(SchemaError):
        RelationSchema("R", [Column("a"), Column("a")])
    with pytest.raises(SchemaError):
        RelationSchema("R", [Column("a")], key={2})
    with pytest.raises(SchemaError):
        Column("a", "blob")


def _schema():
    return DatabaseSchema([RelationSchema("R", [Column("k", "int"), Column("v")], key={1}, not_null={2})])


def test_check_instance_empty():
    assert check_instance(_schema(), DatabaseInstance(_schema(), {})) == []


def test_check_instance_duplicate_key():
    s = _schema()
    problems = check_instance(s, DatabaseInstance(s, {"R": {(1, "a"), (1, "b")}}))
    assert [p.kind for p in problems] == ["key"]


def test_check_instance_not_null():
    s = _schema()
    problems = check_instance(s, DatabaseInstance(s, {"R": {(1, None)}}))
    assert [p.kind for p in problems] == ["not-null"]


def test_check_instance_all_null_and_kind():
    s = DatabaseSchema([RelationSchema("R", [Column("a", "int"), Column("b")])])
    kinds = sorted(p.kind for p in check_instance(s, DatabaseInstance(s, {"R": {(None, None), ("x", "y")}})))
    assert kinds == ["all-null", "kind"]


def test_vector_relation_key_violation():
    v = VectorRelation({VectorRow("R", "0" * 32, "a", 1), VectorRow("R", "0" * 32, "a", 2)})
    assert len(v.violations()) == 1
    with pytest.raises(CorruptionError):
        v.validate()


def test_vector_relation_rejects_null_value():
    v = VectorRelation({VectorRow("R", "0" * 32, "a", None)})
    assert v.violations()

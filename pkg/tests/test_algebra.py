import pytest

from vecrel.algebra import (
    AlgebraError,
    And,
    Bottom,
    Cmp,
    ColRef,
    EmptyRel,
    Extend,
    HashOf,
    InSet,
    IsNull,
    Lit,
    Minus,
    NaturalJoin,
    Not,
    NotInSet,
    Or,
    Product,
    Project,
    Rel,
    Rename,
    Select,
    TypeCol,
    Union,
    evaluate,
    free_rename_normalize,
    infer_type,
)
from vecrel.core import Column, DatabaseInstance, DatabaseSchema, RelationSchema, hash_canonical

SCHEMA = DatabaseSchema([
    RelationSchema("Person", [Column("Pname")]),
    RelationSchema("r", [Column("x", "int"), Column("y", "int")]),
    RelationSchema("s", [Column("y", "int"), Column("z")]),
    RelationSchema("t", [Column("w")]),
])
INST = DatabaseInstance(SCHEMA, {
    "Person": {("Marco Aurelio",)},
    "r": {(1, 2), (1, None), (3, 4)},
    "s": {(2, "a"), (None, "b"), (4, "c")},
    "t": {("a",), ("q",)},
})


def rows(term):
    return evaluate(term, INST).rows


def test_infer_type_rel():
    assert infer_type(Rel("Person"), SCHEMA).pairs() == (("Person", "Pname"),)


def test_infer_type_self_product_renames():
    ty = infer_type(Product(Rel("r"), Rel("r")), SCHEMA)
    assert ty.names() == ("x", "y", "x(1)", "y(1)")


def test_infer_type_project_permutes():
    ty = infer_type(Project(Rel("r"), (ColRef("y"), ColRef("x"))), SCHEMA)
    assert ty.names() == ("y", "x")


def test_union_type_is_left():
    ty = infer_type(Union(Project(Rel("r"), (ColRef("x"),)), Project(Rel("s"), (ColRef("y"),))), SCHEMA)
    assert ty.pairs() == (("r", "x"),)


def test_unknown_relation_and_column():
    with pytest.raises(AlgebraError):
        infer_type(Rel("nope"), SCHEMA)
    with pytest.raises(AlgebraError):
        infer_type(Project(Rel("r"), (ColRef("q"),)), SCHEMA)


def test_rename_needs_fresh_name():
    with pytest.raises(AlgebraError):
        infer_type(Rename(Rel("r"), ColRef("x"), "y"), SCHEMA)


def test_rename_keeps_rows():
    assert rows(Rename(Rel("r"), ColRef("x"), "q")) == rows(Rel("r"))


def test_free_rename_identity():
    right, mapping = free_rename_normalize(["a"], ["b"])
    assert mapping == {} and right == ["b"]


def test_free_rename_smallest_suffix():
    right, mapping = free_rename_normalize(["a"], ["a"])
    assert right == ["a(1)"] and mapping == {"a": "a(1)"}


def test_free_rename_avoids_existing_suffix():
    right, _ = free_rename_normalize(["a"], ["a", "a(1)"])
    assert right == ["a(2)", "a(1)"]


def test_empty_rel_is_unit():
    r = evaluate(EmptyRel(), INST)
    assert r.rows == {()} and len(r.type) == 0
    assert rows(Bottom()) == {()}


def test_product_with_empty_operand_is_identity():
    assert rows(Product(Rel("r"), EmptyRel())) == rows(Rel("r"))
    assert rows(Product(EmptyRel(), Rel("r"))) == rows(Rel("r"))


def test_incompatible_union_is_unit():
    diags = []
    term = Union(Rel("Person"), Rel("r"))
    infer_type(term, SCHEMA, diags)
    assert rows(term) == {()} and diags


def test_incompatible_minus_is_error():
    with pytest.raises(AlgebraError):
        evaluate(Minus(Rel("Person"), Rel("r")), INST)


def test_select_self_equality_drops_null():
    # Derived by hand from the Null-equality rule over {(1,2),(1,Null)}.
    assert rows(Select(Rel("r"), Cmp("=", ColRef("y"), ColRef("y")))) == {(1, 2), (3, 4)}


def test_natural_join_skips_nulls():
    term = NaturalJoin(Rel("r"), Rel("s"), ((ColRef("y"), ColRef("y")),))
    assert rows(term) == {(1, 2, 2, "a"), (3, 4, 4, "c")}


def test_natural_join_desugars():
    join = NaturalJoin(Rel("r"), Rel("s"), ((ColRef("y", "r"), ColRef("y", "s")),))
    desugared = Select(Product(Rel("r"), Rel("s")), Cmp("=", ColRef("y"), ColRef("y(1)")))
    assert rows(join) == rows(desugared)


def test_select_connectives():
    c1 = Cmp(">", ColRef("x"), Lit(1))
    c2 = IsNull(ColRef("y"))
    assert rows(Select(Rel("r"), And(c1, c2))) == set()
    assert rows(Select(Rel("r"), Or(c1, c2))) == {(3, 4), (1, None)}
    assert rows(Select(Rel("r"), Not(c1))) == {(1, 2), (1, None)}


def test_in_and_not_in():
    sub = Project(Rel("s"), (ColRef("y"),))
    assert rows(Select(Rel("r"), InSet(ColRef("y"), sub))) == {(1, 2), (3, 4)}
    assert rows(Select(Rel("r"), NotInSet(ColRef("y"), sub))) == {(1, None)}


def test_minus():
    a = Project(Rel("s"), (ColRef("z"),))
    assert rows(Minus(a, Rel("t"))) == {("b",), ("c",)}


def test_extend_hash():
    term = Extend(Rel("t"), "text", "h", HashOf((ColRef("w"),)))
    assert ("a", hash_canonical(["a"])) in rows(term)


def test_extend_type_has_empty_relation():
    ty = infer_type(Extend(Rel("t"), "text", "h", Lit("k")), SCHEMA)
    assert ty[-1] == TypeCol("", "h", "text")


def test_in_needs_unary_subterm():
    with pytest.raises(AlgebraError):
        infer_type(Select(Rel("r"), InSet(ColRef("x"), Rel("r"))), SCHEMA)


def test_results_are_sets():
    term = Project(Rel("r"), (ColRef("x"),))
    assert rows(term) == {(1,), (3,)}

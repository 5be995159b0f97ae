import random

import pytest

from vecrel.algebra import (
    And,
    Cmp,
    ColRef,
    Evaluator,
    Extend,
    HashOf,
    IsNull,
    Lit,
    Minus,
    NaturalJoin,
    Not,
    Or,
    Product,
    Project,
    Rel,
    Rename,
    Select,
    Union,
    evaluate,
    infer_type,
    walk,
)
from vecrel.bridge import matter, parse_instance, parse_tuple
from vecrel.core import (
    Column,
    ConstraintViolation,
    DatabaseInstance,
    DatabaseSchema,
    RelationSchema,
    SchemaError,
    VectorRelation,
    compare,
    hash_canonical,
)
from vecrel.rewriter import (
    RewriteOptions,
    answer,
    apply_plan,
    rewrite,
    rewrite_delete,
    rewrite_insert,
    rewrite_update,
)

R = RelationSchema("R", [Column("a", "int"), Column("b", "int")])
S = RelationSchema("S", [Column("c", "int"), Column("d", "int")])
PERSON = RelationSchema("Person", [Column("Pname")])
WIDE = RelationSchema("W", [Column(n, "int") for n in "pqrst"], key={1})
SCHEMA = DatabaseSchema([R, S, PERSON, WIDE])
INST = DatabaseInstance(SCHEMA, {
    "R": {(1, 2), (1, None), (None, 3), (4, 4)},
    "S": {(1, 2), (2, None), (4, 5)},
    "Person": {("Marco Aurelio",)},
})
VECTOR = parse_instance(SCHEMA, INST)


def both(term, inst=INST):
    return evaluate(term, inst).rows, answer(term, SCHEMA, parse_instance(SCHEMA, inst)).rows


def test_rel_rewrites_to_selection():
    assert rewrite(Rel("Person"), SCHEMA) == Select(Rel("r_V"), Cmp("=", ColRef("r-name"), Lit("Person")))


def test_rewrite_reads_no_data():
    # Same schema, any instance: the rewritten term is the same object graph.
    t = Select(Rel("R"), Cmp("=", ColRef("a"), Lit(1)))
    assert rewrite(t, SCHEMA) == rewrite(t, SCHEMA)
    assert all(n.name == "r_V" for n in walk(rewrite(t, SCHEMA)) if isinstance(n, Rel))


def test_rewritten_type_is_vector_type():
    t = NaturalJoin(Rel("R"), Rel("S"), ((ColRef("a"), ColRef("c")),))
    assert infer_type(rewrite(t, SCHEMA), SCHEMA).names() == ("r-name", "t-index", "a-name", "value")


def test_full_projection_is_identity():
    t = Project(Rel("R"), (ColRef("a"), ColRef("b")))
    exp, got = both(t)
    assert got == exp == INST.rows("R")


@pytest.mark.parametrize("term", [
    Project(Rel("R"), (ColRef("b"),)),
    Project(Rel("R"), (ColRef("b"), ColRef("a"))),
    Rename(Rel("R"), ColRef("a"), "z"),
    Select(Rel("R"), Cmp("=", ColRef("a"), ColRef("b"))),
    Select(Rel("R"), Not(Cmp("<", ColRef("a"), Lit(2)))),
    Select(Rel("R"), Or(IsNull(ColRef("a")), Cmp(">", Lit(2), ColRef("b")))),
    Select(Rel("R"), And(Cmp("=", ColRef("a"), Lit(1)), Not(IsNull(ColRef("b"))))),
    Select(Rel("R"), Cmp("=", Lit(1), Lit(2))),
    Product(Rel("R"), Rel("R")),
    NaturalJoin(Rel("R"), Rel("S"), ((ColRef("a"), ColRef("c")),)),
    NaturalJoin(Rel("R"), Rel("S"), ((ColRef("a"), ColRef("c")), (ColRef("b"), ColRef("d")))),
    NaturalJoin(Rel("R"), Rel("R"), ((ColRef("b", "R"), ColRef("a", "R")),)),
    Union(Project(Rel("R"), (ColRef("b"),)), Project(Rel("S"), (ColRef("c"),))),
    Union(Rel("R"), Rel("S")),
    Union(Rel("R"), Rel("Person")),
    Minus(Rel("R"), Rel("S")),
    Minus(Project(Rel("R"), (ColRef("b"),)), Project(Rel("S"), (ColRef("d"),))),
    Extend(Rel("R"), "text", "h", HashOf((ColRef("a"),))),
])
def test_vector_path_matches_direct(term):
    exp, got = both(term)
    assert got == exp


def test_union_of_value_equal_tuples_collapses():
    exp, got = both(Union(Project(Rel("R"), (ColRef("b"),)), Project(Rel("S"), (ColRef("c"),))))
    assert got == exp and (2,) in got


def _nested_loop_join(left, right, i, j):
    return {a + b for a in left for b in right if compare("=", a[i], b[j])}


def test_join_matches_nested_loop_on_random_instances():
    rng = random.Random(11)
    pool = [None, 1, 2, 3]
    for _ in range(40):
        inst = DatabaseInstance(SCHEMA, {
            "R": {(rng.choice(pool), rng.choice(pool)) for _ in range(rng.randint(0, 4))} - {(None, None)},
            "S": {(rng.choice(pool), rng.choice(pool)) for _ in range(rng.randint(0, 4))} - {(None, None)},
        })
        term = NaturalJoin(Rel("R"), Rel("S"), ((ColRef("b"), ColRef("c")),))
        got = answer(term, SCHEMA, parse_instance(SCHEMA, inst)).rows
        assert got == _nested_loop_join(inst.rows("R"), inst.rows("S"), 1, 0)


def _literal_join_m1(lvt, rvt, l_rel, l_col, r_rel, r_col):
    """The 2m-fold product construction with m = 1, written out verbatim."""
    prod = Product(lvt, rvt)  # right columns arrive as r-name(1), t-index(1), ...
    t1 = Select(prod, And(
        And(Cmp("=", ColRef("r-name"), Lit(l_rel)), Cmp("=", ColRef("a-name"), Lit(l_col))),
        And(And(Cmp("=", ColRef("r-name(1)"), Lit(r_rel)), Cmp("=", ColRef("a-name(1)"), Lit(r_col))),
            Cmp("=", ColRef("value"), ColRef("value(1)")))))
    cols = ("r-name", "t-index", "a-name", "value", "r-name(1)", "t-index(1)", "a-name(1)", "value(1)")
    t2 = Extend(t1, "text", "name3", HashOf(tuple(ColRef(c) for c in cols)))
    t2 = Project(t2, (ColRef("t-index"), ColRef("t-index(1)"), ColRef("name3")))
    t2 = Rename(Rename(t2, ColRef("t-index"), "id1"), ColRef("t-index(1)"), "id2")
    out = []
    for vt, id_name in ((lvt, "id1"), (rvt, "id2")):
        t = Select(Product(vt, t2), Cmp("=", ColRef("t-index"), ColRef(id_name)))
        t = Project(t, (ColRef("r-name"), ColRef("name3"), ColRef("a-name"), ColRef("value")))
        out.append(Rename(t, ColRef("name3"), "t-index"))
    return Union(*out)


def _cell_groups(rows):
    groups = {}
    for r_name, t_index, a_name, value in rows:
        groups.setdefault(t_index, set()).add((r_name, a_name, value))
    return sorted(sorted(g, key=repr) for g in groups.values())


def test_join_equals_literal_product_construction():
    schema = DatabaseSchema([R, S])
    inst = DatabaseInstance(schema, {"R": {(1, 2), (1, None), (5, 2)}, "S": {(2, 7), (2, None), (None, 1)}})
    vector = parse_instance(schema, inst)
    ev = Evaluator(vector.as_instance())
    lvt, rvt = rewrite(Rel("R"), schema), rewrite(Rel("S"), schema)
    literal = ev(_literal_join_m1(lvt, rvt, "R", "b", "S", "c")).rows
    ours = ev(rewrite(NaturalJoin(Rel("R"), Rel("S"), ((ColRef("b"), ColRef("c")),)), schema)).rows
    # Same rows up to the choice of fresh t-index values.
    assert _cell_groups(ours) == _cell_groups(literal)
    assert len({r[1] for r in ours}) == 4


def test_null_mismatch_switch_changes_result():
    term = NaturalJoin(Rel("R"), Rel("S"), ((ColRef("b"), ColRef("d")),))
    broken = answer(term, SCHEMA, VECTOR, RewriteOptions(null_mismatch=False)).rows
    assert (1, None, 2, None) in broken
    assert (1, None, 2, None) not in answer(term, SCHEMA, VECTOR).rows


# -- statements --------------------------------------------------------------


def test_insert_marco_aurelio():
    rows = rewrite_insert(PERSON, ["Pname"], ["Marco Aurelio"])
    assert len(rows) == 1
    (row,) = rows
    assert row == ("Person", hash_canonical(["Marco Aurelio"]), "Pname", "Marco Aurelio")


def test_insert_pads_with_null_before_hashing():
    rows = rewrite_insert(WIDE, ["p", "r", "t"], [1, 2, 3])
    assert rows == parse_tuple(WIDE, (1, None, 2, None, 3))
    assert len(rows) == 3


def test_insert_twice_is_noop():
    plan_rows = rewrite_insert(PERSON, ["Pname"], ["x"])
    v1 = VectorRelation(VECTOR.rows | plan_rows)
    v2 = VectorRelation(v1.rows | plan_rows)
    assert v1 == v2


@pytest.mark.parametrize("cols,vals,exc", [
    (["Pname"], [None], ConstraintViolation),
    (["nope"], ["x"], SchemaError),
    (["Pname", "Pname"], ["x", "y"], SchemaError),
])
def test_insert_errors(cols, vals, exc):
    with pytest.raises(exc):
        rewrite_insert(PERSON, cols, vals)


def _apply(plan, vector=VECTOR):
    return apply_plan(plan, SCHEMA, vector)


def test_delete_tautology_removes_relation():
    after = _apply(rewrite_delete(R, Cmp("=", Lit(1), Lit(1)), SCHEMA))
    assert matter(SCHEMA, "R", after).rows == set()
    assert matter(SCHEMA, "S", after).rows == INST.rows("S")


def test_delete_no_match_is_noop():
    assert _apply(rewrite_delete(R, Cmp("=", ColRef("a"), Lit(99)), SCHEMA)) == VECTOR


def test_delete_matches_oracle_set_difference():
    cond = Or(Cmp("=", ColRef("a"), Lit(1)), IsNull(ColRef("a")))
    after = _apply(rewrite_delete(R, cond, SCHEMA))
    expected = INST.rows("R") - evaluate(Select(Rel("R"), cond), INST).rows
    assert matter(SCHEMA, "R", after).rows == expected == {(4, 4)}


def test_delete_scoped_to_relation():
    # (1, 2) sits in both R and S with the same t-index.
    cond = Cmp("=", ColRef("a"), Lit(1))
    after = _apply(rewrite_delete(R, cond, SCHEMA))
    assert (1, 2) in matter(SCHEMA, "S", after).rows
    unscoped = _apply(rewrite_delete(R, cond, SCHEMA, RewriteOptions(scope_delete_to_relation=False)))
    assert (1, 2) not in matter(SCHEMA, "S", unscoped).rows


def test_update_empty_match_is_noop():
    plan = rewrite_update(R, [("b", Lit(9))], Cmp("=", ColRef("a"), Lit(99)), SCHEMA)
    assert _apply(plan) == VECTOR


def test_update_to_same_value_keeps_index():
    plan = rewrite_update(R, [("b", ColRef("b"))], Cmp("=", ColRef("a"), Lit(4)), SCHEMA)
    assert _apply(plan) == VECTOR


def test_update_matches_oracle():
    cond = Cmp("=", ColRef("a"), Lit(1))
    after = _apply(rewrite_update(R, [("b", Lit(7))], cond, SCHEMA))
    assert matter(SCHEMA, "R", after).rows == {(1, 7), (None, 3), (4, 4)}


def test_update_violating_key_is_rejected():
    schema = DatabaseSchema([WIDE])
    v = parse_instance(schema, DatabaseInstance(schema, {"W": {(1, 1, 1, 1, 1), (2, 2, 2, 2, 2)}}))
    plan = rewrite_update(WIDE, [("p", Lit(1))], Cmp("=", ColRef("p"), Lit(2)), schema)
    with pytest.raises(ConstraintViolation):
        apply_plan(plan, schema, v)

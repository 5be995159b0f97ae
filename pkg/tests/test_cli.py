import io
import json

import pytest

from vecrel.cli import main
from vecrel.engine import open_store, read_csv_tuples

SCHEMA_JSON = {
    "relations": [
        {"name": "Person", "columns": [{"name": "Pname"}]},
        {"name": "Emp", "columns": [{"name": "id", "kind": "int"}, {"name": "name"}], "key": ["id"]},
    ]
}


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


@pytest.fixture
def store(tmp_path):
    schema = tmp_path / "schema.json"
    schema.write_text(json.dumps(SCHEMA_JSON))
    path = tmp_path / "store"
    assert run("init", str(schema), str(path))[0] == 0
    return path


def test_person_query_prints_row(store):
    assert run("exec", str(store), '(insert Person (Pname) ("Marco Aurelio"))') == (0, "1 vector row added, 0 removed\n")
    code, out = run("query", str(store), "(rel Person)")
    assert code == 0
    assert out.splitlines() == ["Pname", "-------------", "Marco Aurelio", "(1 row)"]


def test_show_rewrite(store, monkeypatch):
    monkeypatch.setenv("VECREL_STORE", str(store))
    code, out = run("show-rewrite", "(rel Person)")
    assert code == 0 and out == '(select (rel r_V) (= (col r-name) (text "Person")))\n'


def test_show_rewrite_with_schema_file(store, tmp_path):
    code, out = run("show-rewrite", "--schema", str(tmp_path / "schema.json"), "--compact", "(project (rel Emp) (id))")
    assert code == 0 and out.startswith("(union (select ")


def test_show_rewrite_without_schema(monkeypatch):
    monkeypatch.delenv("VECREL_STORE", raising=False)
    assert run("show-rewrite", "(rel Person)")[0] == 1


def test_fuzz_reports_pass_count():
    code, out = run("fuzz", "--seed", "7", "--iters", "50")
    assert code == 0 and out == "50/50 pass\n"


def test_fuzz_json():
    code, out = run("fuzz", "--seed", "3", "--iters", "5", "--json")
    report = json.loads(out[: out.rindex("}") + 1])
    assert code == 0 and report["passed"] == 5 and report["failures"] == []


def test_load_matter_and_csv_round_trip(store, tmp_path):
    csv = tmp_path / "e.csv"
    csv.write_text('1,"a, b"\n2,\\N\n3,"\\N"\n')
    assert run("load", str(store), "Emp", str(csv)) == (0, "3 tuples added to Emp\n")
    code, out = run("query", "--format", "csv", str(store), "(rel Emp)")
    assert code == 0
    rel = open_store(store).schema["Emp"]
    assert set(read_csv_tuples(rel, out)) == {(1, "a, b"), (2, None), (3, "\\N")}
    code, table = run("matter", str(store), "Emp")
    assert code == 0 and "NULL" in table and "(3 rows)" in table


def test_query_from_file_and_oracle(store, tmp_path):
    run("exec", str(store), '(insert Emp (id name) (1 "x"))')
    q = tmp_path / "q.sexpr"
    q.write_text("(project (rel Emp) (name))")
    a = run("query", str(store), f"@{q}")
    b = run("query", str(store), f"@{q}", "--oracle")
    assert a == b and a[0] == 0


def test_identical_invocations_identical_output(store):
    run("exec", str(store), '(insert Emp (id name) (2 "y"))')
    run("exec", str(store), '(insert Emp (id name) (1 "x"))')
    assert run("query", str(store), "(rel Emp)") == run("query", str(store), "(rel Emp)")


def test_verify(store):
    run("exec", str(store), '(insert Person (Pname) ("x"))')
    assert run("verify", str(store))[0] == 0
    vec = store / "vector.tsv"
    vec.write_text(vec.read_text().replace("\tx\n", "\tz\n"))
    assert run("verify", str(store))[0] == 2


def test_user_errors_exit_1(store, tmp_path):
    assert run("query", str(store), "(rel Nope)")[0] == 1
    assert run("query", str(store), "(rel")[0] == 1
    assert run("exec", str(store), '(insert Emp (name) ("x"))')[0] == 1
    assert run("frobnicate")[0] == 1
    assert run("query", "--bogus-flag", str(store), "(rel Emp)")[0] == 1
    assert run("matter", str(tmp_path / "missing"), "Emp")[0] == 1


def test_corrupt_store_exit_2(store):
    (store / "vector.tsv").write_text("garbage\n")
    assert run("query", str(store), "(rel Emp)")[0] == 2


def test_format_before_subcommand_is_kept(store):
    run("exec", str(store), '(insert Emp (id) (1))')
    before = run("--format", "csv", "matter", str(store), "Emp")
    after = run("matter", str(store), "Emp", "--format", "csv")
    assert before == after == (0, "1,\\N\r\n")


def test_init_uses_env_store(tmp_path, monkeypatch):
    schema = tmp_path / "schema.json"
    schema.write_text(json.dumps(SCHEMA_JSON))
    monkeypatch.setenv("VECREL_STORE", str(tmp_path / "envstore"))
    assert run("init", str(schema))[0] == 0
    assert open_store(tmp_path / "envstore").schema.relations.keys() == {"Person", "Emp"}
    assert run("matter", "Person") == (0, "Pname\n-----\n(0 rows)\n")

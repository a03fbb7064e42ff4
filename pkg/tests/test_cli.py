import csv
import io
import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from ineqbounds.cli import (
    constraints_from_json,
    emit_grouped,
    ingest_text,
    parse_constraints,
    run,
    split_at_median,
    to_json,
)
from ineqbounds.core import GroupedTable, GroupMean, IntervalObservation, LorenzPoint, Negated
from ineqbounds.errors import (
    BadGroupIndex,
    NegativeCount,
    OverlapError,
    ParseError,
    UnknownKind,
)

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = ROOT / "tests" / "golden"
SCHEMA = json.loads((ROOT / "docs" / "result_schema.json").read_text())


def invoke(argv):
    buf = io.StringIO()
    code = run(argv, stdout=buf)
    return code, buf.getvalue()


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestIngest:
    def test_intervals(self):
        ing = ingest_text("lower,upper\n1,1\n0,2\n")
        assert ing.data == [IntervalObservation(1, 1), IntervalObservation(0, 2)]

    def test_top_coding(self):
        ing = ingest_text("lower,upper\n150000,\n0,1000\n", top_code_multiplier=2.0)
        assert ing.data[0] == IntervalObservation(150000, 300000)
        assert ing.warnings

    def test_grouped(self):
        ing = ingest_text("lower,upper,count\n0,1,5\n2,3,5\n")
        assert ing.grouped and ing.data.D == 2 and ing.data.counts == (5.0, 5.0)

    def test_shape_mismatch(self):
        with pytest.raises(ParseError):
            ingest_text("lower,upper\n0,1\n", shape="grouped")

    def test_bad_number_location(self):
        with pytest.raises(ParseError) as e:
            ingest_text("lower,upper\n0,1\n2,x\n")
        assert e.value.line == 3 and e.value.column == 2

    def test_overlap(self):
        with pytest.raises(OverlapError):
            ingest_text("lower,upper,count\n0,2,1\n1,3,1\n")

    def test_negative_count(self):
        with pytest.raises(NegativeCount):
            ingest_text("lower,upper,count\n0,1,-1\n2,3,1\n")

    def test_bad_header(self):
        with pytest.raises(ParseError):
            ingest_text("a,b\n0,1\n")

    def test_multiplier_must_exceed_one(self):
        with pytest.raises(ValueError):
            ingest_text("lower,upper\n0,\n", top_code_multiplier=1.0)

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            D = int(rng.integers(2, 6))
            edges = np.sort(rng.uniform(0, 1e5, 2 * D))
            t = GroupedTable([(edges[2 * d], edges[2 * d + 1]) for d in range(D)],
                             rng.integers(0, 100, D))
            assert ingest_text(emit_grouped(t)).data == t


class TestConstraints:
    table = GroupedTable([(0, 1), (2, 3)], [2, 2])

    def test_total_mean(self):
        cs = constraints_from_json([{"kind": "total_mean", "relation": "eq", "value": 1.25}])
        assert cs.q1 == 1 and cs.q2 == 0

    def test_group_mean_le(self):
        cs = constraints_from_json([{"kind": "group_mean", "group": 2, "relation": "le",
                                     "value": 2.5}], self.table)
        assert cs.q2 == 1 and isinstance(cs.inequality_rows[0], GroupMean)
        coef, rhs = cs.inequality_rows[0].linear(self.table)
        assert np.allclose(coef, [0, 0, 0.5, 0.5]) and rhs == 2.5

    def test_lorenz(self):
        cs = constraints_from_json([{"kind": "lorenz_point", "h": 1, "value": 0.2}])
        assert isinstance(cs.equality_rows[0], LorenzPoint)
        coef, rhs = cs.equality_rows[0].linear(self.table)
        # s_1 * mean_1 - 0.2 * mean, over sorted positions
        assert np.allclose(coef, [0.25 - 0.05, 0.25 - 0.05, -0.05, -0.05]) and rhs == 0

    def test_ge_negated(self):
        cs = constraints_from_json([{"kind": "total_mean", "relation": "ge", "value": 1}])
        assert isinstance(cs.inequality_rows[0], Negated)

    def test_raw_row(self):
        cs = constraints_from_json([{"kind": "raw_row", "coefficients": [1, 0, 0, -1],
                                     "rhs": 0, "relation": "le"}])
        assert cs.q2 == 1

    def test_unknown_kind(self):
        with pytest.raises(UnknownKind):
            constraints_from_json([{"kind": "median"}])

    def test_bad_group(self):
        with pytest.raises(BadGroupIndex):
            constraints_from_json([{"kind": "group_mean", "group": 3, "value": 1}], self.table)

    def test_invalid_json(self, tmp_path):
        with pytest.raises(ParseError):
            parse_constraints(write(tmp_path, "c.json", "[{"))


class TestKnownMedian:
    table = GroupedTable([(0, 10), (10, 20)], [6, 4])

    def test_split(self):
        t = split_at_median(self.table, 5, (3, 3))
        assert t.brackets == ((0, 5), (5, 10), (10, 20)) and t.counts == (3, 3, 4)

    def test_refused_without_counts(self):
        with pytest.raises(ValueError):
            split_at_median(self.table, 5, None)

    def test_counts_must_add_up(self):
        with pytest.raises(ValueError):
            split_at_median(self.table, 5, (1, 1))

    def test_cli_split_narrows(self, tmp_path):
        path = write(tmp_path, "g.csv", "lower,upper,count\n0,10,2\n10,20,2\n")
        _, plain = invoke(["bounds", "--input", path])
        _, split = invoke(["bounds", "--input", path, "--known-median", "5",
                           "--median-counts", "1,1"])
        a, b = json.loads(plain), json.loads(split)
        assert b["lower"] >= a["lower"] - 1e-12 and b["upper"] <= a["upper"] + 1e-12
        assert invoke(["bounds", "--input", path, "--known-median", "5"])[0] == 1


class TestRun:
    def test_goldens(self):
        cases = [
            (["bounds", "--index", "gini", "--input", str(GOLDEN / "grouped.csv")],
             "gini_grouped.json"),
            (["bounds", "--index", "qratio", "--tau1", "0.5", "--tau2", "0.85",
              "--input", str(GOLDEN / "g3.csv")], "qratio_g3.json"),
            (["oracle-check", "--input", str(GOLDEN / "tiny.csv")], "oracle_tiny.json"),
        ]
        for argv, name in cases:
            code, out = invoke(argv)
            assert code == 0
            assert out == (GOLDEN / name).read_text()

    def test_golden_values(self):
        doc = json.loads((GOLDEN / "gini_grouped.json").read_text())
        assert doc["lower"] == pytest.approx(1 / 6) and doc["upper"] == 0.5
        doc = json.loads((GOLDEN / "qratio_g3.json").read_text())
        assert doc["lower"] == 2.0 and doc["upper"] == "inf"

    def test_schema(self, tmp_path):
        g = write(tmp_path, "g.csv", "lower,upper,count\n0,1,30\n2,3,20\n5,,10\n")
        iv = write(tmp_path, "i.csv", "lower,upper\n1,1\n0,2\n1,3\n")
        for argv in (["bounds", "--input", g], ["bounds", "--input", iv],
                     ["bounds", "--input", g, "--index", "hoover"],
                     ["bootstrap", "--input", g, "--replicates", "20", "--seed", "1"],
                     ["bootstrap", "--input", iv, "--replicates", "20", "--seed", "1"],
                     ["oracle-check", "--input", iv]):
            code, out = invoke(argv)
            assert code == 0
            jsonschema.validate(json.loads(out), SCHEMA)

    def test_bootstrap_determinism(self, tmp_path):
        g = write(tmp_path, "g.csv", "lower,upper,count\n0,1,30\n2,3,20\n")
        argv = ["bootstrap", "--input", g, "--replicates", "50", "--seed", "9"]
        assert invoke(argv)[1] == invoke(argv)[1]

    def test_seventeen_digits(self):
        assert to_json(0.1) == "0.10000000000000001"
        assert to_json({"a": float("inf"), "b": [1.5, None]}) == \
            '{\n  "a": "inf",\n  "b": [1.5, null]\n}'

    def test_csv_output(self, tmp_path):
        g = write(tmp_path, "g.csv", "lower,upper,count\n0,1,1\n2,3,1\n")
        code, out = invoke(["bounds", "--input", g, "--format", "csv"])
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and len(rows) == 1
        assert float(rows[0]["upper"]) == 0.5 and rows[0]["scenario"] == "1A"

    def test_constraints_select_1b(self, tmp_path):
        g = write(tmp_path, "g.csv", "lower,upper,count\n0,1,1\n2,3,1\n")
        c = write(tmp_path, "c.json", '[{"kind":"total_mean","relation":"eq","value":1.25}]')
        code, out = invoke(["bounds", "--input", g, "--constraints", c])
        doc = json.loads(out)
        assert code == 0 and doc["scenario"] == "1B"
        assert doc["lower"] == pytest.approx(0.3) and doc["upper"] == pytest.approx(0.5)

    def test_exit_codes(self, tmp_path):
        g = write(tmp_path, "g.csv", "lower,upper,count\n0,1,1\n2,3,1\n")
        bad = write(tmp_path, "bad.csv", "lower,upper,count\n0,1,x\n")
        infeasible = write(tmp_path, "c.json", '[{"kind":"total_mean","value":10}]')
        unknown = write(tmp_path, "u.json", '[{"kind":"median","value":1}]')
        degenerate = write(tmp_path, "d.csv", "lower,upper,count\n-3,-1,1\n0,1,1\n")
        mean_row = write(tmp_path, "m.json", '[{"kind":"group_mean","group":2,"value":0.5}]')
        assert invoke(["bounds", "--input", bad])[0] == 1
        assert invoke(["bounds", "--input", g, "--constraints", unknown])[0] == 1
        assert invoke(["bounds", "--input", g, "--top-code", "1"])[0] == 1
        assert invoke(["bounds", "--input", g, "--constraints", infeasible])[0] == 2
        assert invoke(["bounds", "--input", degenerate, "--constraints", mean_row])[0] == 3

    def test_baseline(self, tmp_path):
        iv = write(tmp_path, "i.csv", "lower,upper\n1,1\n3,3\n0,4\n")
        code, out = invoke(["baseline", "--input", iv, "--method", "midpoint_impute"])
        doc = json.loads(out)
        assert code == 0 and doc[0]["gini"] == pytest.approx(2 / 9)

    def test_interval_scenario(self, tmp_path):
        iv = write(tmp_path, "i.csv", "lower,upper\n0,2\n1,3\n")
        doc = json.loads(invoke(["bounds", "--input", iv])[1])
        assert doc["scenario"] == "2" and doc["lower"] == 0 and doc["upper"] == 0.5
        assert invoke(["bounds", "--input", iv, "--index", "hoover"])[0] == 1

    def test_oracle_check_interval(self, tmp_path):
        iv = write(tmp_path, "i.csv", "lower,upper\n0,2\n1,3\n2,2\n")
        code, out = invoke(["oracle-check", "--input", iv])
        assert code == 0 and json.loads(out)["oracle"]["agree"]

    def test_series(self, tmp_path, monkeypatch):
        monkeypatch.setenv("INEQBOUNDS_THREADS", "2")
        folder = tmp_path / "years"
        folder.mkdir()
        for year, counts in ((1990, (5, 5)), (1991, (6, 4)), (1992, (7, 3))):
            (folder / f"{year}.csv").write_text(
                f"lower,upper,count\n0,1,{counts[0]}\n2,3,{counts[1]}\n")
        code, out = invoke(["series", "--input", str(folder), "--format", "csv"])
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and [r["file"] for r in rows] == ["1990.csv", "1991.csv", "1992.csv"]
        code, out = invoke(["series", "--input", str(folder)])
        docs = json.loads(out)
        for d in docs:
            d.pop("file")
            jsonschema.validate(d, SCHEMA)

    def test_series_error_code(self, tmp_path):
        folder = tmp_path / "s"
        folder.mkdir()
        (folder / "a.csv").write_text("lower,upper,count\n0,1,1\n2,3,1\n")
        (folder / "b.csv").write_text("lower,upper,count\n0,1,oops\n")
        code, out = invoke(["series", "--input", str(folder)])
        docs = json.loads(out)
        assert code == 1 and "error" in docs[1] and docs[0]["upper"] == 0.5

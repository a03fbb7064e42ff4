"""Command-line interface: ingestion, dispatch and deterministic output."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    BASELINE_METHODS,
    BoundsResult,
    ConstraintSet,
    GroupedTable,
    GroupMean,
    IndexSpec,
    IntervalObservation,
    LorenzPoint,
    RawRow,
    TotalMean,
    baseline_gini,
)
from .errors import (
    BadGroupIndex,
    BracketViolation,
    DegenerateDenominator,
    IndexOutOfRange,
    IneqBoundsError,
    InfeasibleConstraints,
    NegativeCount,
    NoFeasibleAssignment,
    NonPositiveMean,
    NoPointData,
    NumericalFailure,
    OverlapError,
    ParseError,
    QuantileOnBoundary,
    ResampleInfeasible,
    TooLarge,
    UnknownKind,
)
from .inference import BootstrapConfig, bootstrap_bounds
from .oracle import OracleConfig, brute_force_bounds
from .scenario1 import bounds_1
from .scenario2 import gini_bounds_2

log = logging.getLogger("ineqbounds")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERICAL, EXIT_DISAGREE = 0, 1, 2, 3, 4
ORACLE_TOL = 1e-6


# --------------------------------------------------------------------------
# ingestion


@dataclass
class Ingested:
    data: object  # GroupedTable or list[IntervalObservation]
    warnings: list

    @property
    def grouped(self) -> bool:
        return isinstance(self.data, GroupedTable)


def _number(text: str, line: int, column: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", line, column) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {text!r}", line, column)
    return v


def read_rows(text: str):
    """Header names and ``(line_number, fields)`` rows of a CSV document."""
    reader = csv.reader(io.StringIO(text))
    rows = [(reader.line_num, [f.strip() for f in r]) for r in reader if any(f.strip() for f in r)]
    if not rows:
        raise ParseError("empty input", 1)
    line, header = rows[0]
    return [h.lower() for h in header], rows[1:]


def ingest_text(text: str, shape: str = "auto", top_code_multiplier: float = 2.0) -> Ingested:
    if top_code_multiplier <= 1:
        raise ValueError("the top-code multiplier must exceed 1")
    header, rows = read_rows(text)
    if header[:2] != ["lower", "upper"] or len(header) not in (2, 3) or \
            (len(header) == 3 and header[2] != "count"):
        raise ParseError("header must be 'lower,upper' or 'lower,upper,count'", 1)
    has_count = len(header) == 3
    if shape == "auto":
        shape = "grouped" if has_count else "intervals"
    if shape == "grouped" and not has_count:
        raise ParseError("grouped input needs a count column", 1)
    if shape == "intervals" and has_count:
        raise ParseError("interval input must not have a count column", 1)
    if not rows:
        raise ParseError("no data rows", 2)

    lowers, uppers, counts, open_rows = [], [], [], []
    for line, fields in rows:
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(fields)}", line)
        lowers.append(_number(fields[0], line, 1))
        if fields[1] == "":
            uppers.append(None)
            open_rows.append(line)
        else:
            uppers.append(_number(fields[1], line, 2))
        if has_count:
            c = _number(fields[2], line, 3)
            if c < 0:
                raise NegativeCount(f"negative count {fields[2]}", line, 3)
            if c != int(c):
                raise ParseError(f"count must be an integer: {fields[2]}", line, 3)
            counts.append(int(c))

    warnings = []
    if open_rows:
        finite = [v for v in lowers + uppers if v is not None]
        top = top_code_multiplier * max(finite)
        for line in open_rows:
            i = [ln for ln, _ in rows].index(line)
            if lowers[i] > top:
                raise ParseError("open interval starts above the top-code value", line, 1)
            uppers[i] = top
        msg = (f"{len(open_rows)} open upper endpoint(s) set to {top:g} "
               f"({top_code_multiplier:g} x largest finite endpoint)")
        log.warning(msg)
        warnings.append(msg)

    for (line, _), lo, hi in zip(rows, lowers, uppers):
        if lo > hi:
            raise ParseError(f"lower {lo:g} exceeds upper {hi:g}", line, 1)

    if shape == "grouped":
        for k in range(1, len(rows)):
            if uppers[k - 1] > lowers[k]:
                raise OverlapError(f"bracket overlaps or precedes the previous one", rows[k][0], 1)
        try:
            table = GroupedTable(list(zip(lowers, uppers)), counts)
        except ValueError as e:
            raise ParseError(str(e)) from None
        return Ingested(table, warnings)
    return Ingested([IntervalObservation(lo, hi) for lo, hi in zip(lowers, uppers)], warnings)


def ingest(path, shape: str = "auto", top_code_multiplier: float = 2.0) -> Ingested:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e.strerror}") from None
    return ingest_text(text, shape, top_code_multiplier)


def emit_grouped(table: GroupedTable) -> str:
    """CSV text that :func:`ingest_text` reads back into ``table``."""
    lines = ["lower,upper,count"]
    for (lo, hi), c in zip(table.brackets, table.counts):
        lines.append(f"{lo!r},{hi!r},{int(c)}")
    return "\n".join(lines) + "\n"


_KINDS = ("total_mean", "group_mean", "lorenz_point", "raw_row")


def constraints_from_json(rows, table: GroupedTable | None = None) -> ConstraintSet:
    if not isinstance(rows, list):
        raise ParseError("constraint file must hold a JSON array")
    cs = ConstraintSet()
    for i, row in enumerate(rows, start=1):
        if not isinstance(row, dict) or "kind" not in row:
            raise ParseError(f"constraint {i} is not an object with a 'kind'", i)
        kind = row["kind"]
        relation = row.get("relation", "eq")
        if relation not in ("eq", "le", "ge"):
            raise ParseError(f"constraint {i}: unknown relation {relation!r}", i)
        try:
            if kind == "total_mean":
                c = TotalMean(float(row["value"]))
            elif kind == "group_mean":
                g = row["group"]
                if not isinstance(g, int) or g < 1 or (table is not None and g > table.D):
                    raise BadGroupIndex(f"constraint {i}: group {g!r} out of range")
                c = GroupMean(g, float(row["value"]))
            elif kind == "lorenz_point":
                h = row["h"]
                if not isinstance(h, int) or h < 1 or (table is not None and h >= table.D):
                    raise BadGroupIndex(f"constraint {i}: Lorenz index {h!r} out of range")
                c = LorenzPoint(h, float(row["value"]))
            elif kind == "raw_row":
                c = RawRow([float(x) for x in row["coefficients"]], float(row["rhs"]))
            else:
                raise UnknownKind(f"constraint {i}: unknown kind {kind!r}", i)
        except KeyError as e:
            raise ParseError(f"constraint {i}: missing field {e.args[0]!r}", i) from None
        except (TypeError, ValueError) as e:
            if isinstance(e, IneqBoundsError):
                raise
            raise ParseError(f"constraint {i}: {e}", i) from None
        cs.add(c, relation)
    return cs


def parse_constraints(path, table: GroupedTable | None = None) -> ConstraintSet:
    try:
        rows = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e.msg}", e.lineno, e.colno) from None
    return constraints_from_json(rows, table)


def split_at_median(table: GroupedTable, median: float, sub_counts) -> GroupedTable:
    """Split the bracket containing ``median`` at it, with the given counts below/above."""
    if sub_counts is None:
        raise ValueError("--known-median needs --median-counts for the split bracket")
    below, above = sub_counts
    for d, (lo, hi) in enumerate(table.brackets):
        if lo < median < hi:
            if below + above != table.counts[d]:
                raise ValueError(f"sub-counts {below}+{above} do not add up to "
                                 f"{int(table.counts[d])} in bracket {d + 1}")
            brackets = list(table.brackets[:d]) + [(lo, median), (median, hi)] + \
                list(table.brackets[d + 1:])
            counts = list(table.counts[:d]) + [below, above] + list(table.counts[d + 1:])
            return GroupedTable(brackets, counts)
    raise ValueError(f"no bracket has {median:g} strictly inside it")


# --------------------------------------------------------------------------
# deterministic emission


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return "null"
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def to_json(obj, indent: int = 2, level: int = 0) -> str:
    """JSON with a fixed key order (insertion order), 17 significant digits and
    infinities as strings."""
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(to_json(v, indent, level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + to_json(v, indent, level + 1) for v in seq) + \
            "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _vector(v):
    return None if v is None else [float(x) for x in np.asarray(v, dtype=float).ravel()]


def result_document(result: BoundsResult, index: IndexSpec, warnings=()) -> dict:
    diag = result.diagnostics
    dv = diag.get("distinct_values")
    return {
        "index": index.name,
        "scenario": result.scenario,
        "lower": float(result.lower),
        "upper": float(result.upper),
        "width": float(result.upper - result.lower),
        "argmin": _vector(result.argmin),
        "argmax": _vector(result.argmax),
        "diagnostics": {
            "iterations": int(diag.get("iterations", 0)),
            "exact_enumeration": bool(diag.get("exact_enumeration", True)),
            "distinct_values": None if dv is None else int(dv),
            "warnings": list(warnings) + [str(w) for w in diag.get("warnings", [])],
        },
    }


def bootstrap_section(res, config: BootstrapConfig) -> dict:
    return {
        "replicates": config.replicates,
        "seed": config.seed,
        "alpha": config.alpha,
        "t_n": res.t_n,
        "level": config.level,
        "ci_method": config.ci_method,
        "lower": res.lower,
        "upper": res.upper,
        "se_lower": res.se_lower,
        "se_upper": res.se_upper,
        "se_width": res.se_width,
        "ci_lower": list(res.selected_ci(config.ci_method)[0]),
        "ci_upper": list(res.selected_ci(config.ci_method)[1]),
        "ci_lower_normal": list(res.ci_lower),
        "ci_upper_normal": list(res.ci_upper),
        "ci_lower_percentile": list(res.ci_lower_percentile),
        "ci_upper_percentile": list(res.ci_upper_percentile),
        "attempts": res.attempts,
        "failures": res.failures,
        "warnings": list(res.warnings),
    }


CSV_FIELDS = ["index", "scenario", "lower", "upper", "width", "argmin", "argmax",
              "iterations", "exact_enumeration", "distinct_values", "warnings"]


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "inf" if v == math.inf else "-inf" if v == -math.inf else \
            "" if math.isnan(v) else format(v, ".17g")
    if isinstance(v, list):
        return " ".join(_csv_cell(x) for x in v)
    return str(v)


def flatten(doc: dict) -> dict:
    row = {k: doc[k] for k in ("index", "scenario", "lower", "upper", "width", "argmin", "argmax")}
    row.update({k: doc["diagnostics"][k] for k in
                ("iterations", "exact_enumeration", "distinct_values")})
    row["warnings"] = "; ".join(doc["diagnostics"]["warnings"])
    for section in ("bootstrap", "oracle"):
        if section in doc:
            for k, v in doc[section].items():
                if k != "warnings":
                    row[f"{section}_{k}"] = v
    return row


def to_csv(rows: list[dict]) -> str:
    fields = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_csv_cell(r.get(k)) for k in fields])
    return buf.getvalue()


# --------------------------------------------------------------------------
# commands


def _index(args) -> IndexSpec:
    if args.index == "qratio":
        if args.tau1 is None or args.tau2 is None:
            raise ValueError("--index qratio needs --tau1 and --tau2")
        return IndexSpec.quantile_ratio(args.tau1, args.tau2)
    return IndexSpec(args.index)


def _load(args):
    ing = ingest(args.input, args.shape, args.top_code)
    data = ing.data
    if getattr(args, "known_median", None) is not None:
        if not ing.grouped:
            raise ValueError("--known-median applies to grouped tables only")
        data = split_at_median(data, args.known_median, args.median_counts)
    cons = None
    if getattr(args, "constraints", None):
        if not ing.grouped:
            raise ValueError("side information is supported for grouped tables only")
        cons = parse_constraints(args.constraints, data)
    return data, cons, ing.warnings


def compute_bounds(data, index: IndexSpec, constraints=None, relaxed=False,
                   quantile_rule="share", budget=20) -> BoundsResult:
    if isinstance(data, GroupedTable):
        if index.kind == "qratio" and not (constraints and len(constraints)):
            from .scenario1 import quantile_ratio_bounds_1a
            return quantile_ratio_bounds_1a(data, index.tau1, index.tau2, rule=quantile_rule)
        return bounds_1(index, data, constraints, grid=False if relaxed else None)
    if index.kind != "gini":
        raise ValueError("interval micro data bounds are available for the Gini only")
    return gini_bounds_2(data, enumeration_budget=budget)


def _bounds_doc(args, data=None, cons=None, warnings=None):
    if data is None:
        data, cons, warnings = _load(args)
    index = _index(args)
    res = compute_bounds(data, index, cons, args.relaxed, args.quantile_rule, args.budget)
    return result_document(res, index, warnings), data, cons, index


def cmd_bounds(args):
    doc, *_ = _bounds_doc(args)
    return [doc]


def cmd_bootstrap(args):
    doc, data, cons, index = _bounds_doc(args)
    config = BootstrapConfig(replicates=args.replicates, seed=args.seed, alpha=args.alpha,
                             level=args.level, ci_method=args.ci, jitter=args.jitter)
    res = bootstrap_bounds(data, index, None, config, constraints=cons)
    doc["bootstrap"] = bootstrap_section(res, config)
    return [doc]


def cmd_baseline(args):
    ing = ingest(args.input, "intervals", args.top_code)
    methods = BASELINE_METHODS if args.method == "all" else (args.method,)
    docs = []
    for m in methods:
        g, meta = baseline_gini(ing.data, m, seed=args.seed, m=args.draws)
        docs.append({"method": m, "gini": g, "n_points": meta["n_points"],
                     "n_intervals": meta["n_intervals"], "n_fallback": meta["n_fallback"],
                     "warnings": list(ing.warnings)})
    return docs


def cmd_oracle_check(args):
    doc, data, cons, index = _bounds_doc(args)
    orc = brute_force_bounds(data, OracleConfig(max_n=args.max_n), constraints=cons, index=index)
    diff = max(abs(orc.lower - doc["lower"]), abs(orc.upper - doc["upper"])) \
        if math.isfinite(orc.upper) or math.isfinite(doc["upper"]) else 0.0
    if orc.upper == doc["upper"] == math.inf:
        diff = abs(orc.lower - doc["lower"])
    doc["oracle"] = {"lower": orc.lower, "upper": orc.upper, "max_abs_diff": diff,
                     "tolerance": ORACLE_TOL, "agree": bool(diff <= ORACLE_TOL)}
    return [doc]


def _thread_cap() -> int:
    raw = os.environ.get("INEQBOUNDS_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError("INEQBOUNDS_THREADS must be an integer") from None
    return os.cpu_count() or 1


def cmd_series(args):
    folder = Path(args.input)
    if not folder.is_dir():
        raise ParseError(f"{folder} is not a directory")
    files = sorted(p for p in folder.glob(args.pattern) if p.is_file())
    if not files:
        raise ParseError(f"no files matching {args.pattern!r} in {folder}")
    index = _index(args)

    def one(path):
        try:
            ing = ingest(path, "grouped", args.top_code)
            res = compute_bounds(ing.data, index, None, args.relaxed, args.quantile_rule)
            doc = result_document(res, index, ing.warnings)
            return {"file": path.name, **doc}, None
        except IneqBoundsError as e:
            return {"file": path.name, "error": str(e)}, e

    with ThreadPoolExecutor(max_workers=min(_thread_cap(), len(files))) as pool:
        outs = list(pool.map(one, files))
    errors = [e for _, e in outs if e is not None]
    return [doc for doc, _ in outs], (errors[0] if errors else None)


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ineqbounds",
                                description="Sharp bounds on inequality indices from coarsened data.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, grouped_only=False):
        sp.add_argument("--input", required=True, help="CSV file (a directory for 'series')")
        if not grouped_only:
            sp.add_argument("--shape", choices=("auto", "intervals", "grouped"), default="auto")
        sp.add_argument("--index", choices=("gini", "qratio", "hoover"), default="gini")
        sp.add_argument("--tau1", type=float)
        sp.add_argument("--tau2", type=float)
        sp.add_argument("--top-code", type=float, default=2.0, dest="top_code",
                        help="open upper endpoints become this multiple of the largest "
                             "finite endpoint (default 2)")
        sp.add_argument("--relaxed", action="store_true",
                        help="grouped Gini over fractional corner shares instead of the sample grid")
        sp.add_argument("--quantile-rule", choices=("share", "position"), default="share",
                        dest="quantile_rule")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--output", help="write here instead of stdout")

    def data_opts(sp):
        sp.add_argument("--constraints", help="JSON file of linear side information")
        sp.add_argument("--known-median", type=float, dest="known_median")
        sp.add_argument("--median-counts", type=lambda s: tuple(int(x) for x in s.split(",")),
                        dest="median_counts", help="BELOW,ABOVE counts of the split bracket")
        sp.add_argument("--budget", type=int, default=20,
                        help="log2 of the straddler enumeration budget (interval data)")

    b = sub.add_parser("bounds", help="sharp bounds")
    common(b)
    data_opts(b)

    bs = sub.add_parser("bootstrap", help="bounds with bootstrap standard errors")
    common(bs)
    data_opts(bs)
    bs.add_argument("--replicates", type=int, default=1000)
    bs.add_argument("--seed", type=int, default=0)
    bs.add_argument("--alpha", type=float, default=0.25, help="t_n = n^-alpha")
    bs.add_argument("--level", type=float, default=0.95)
    bs.add_argument("--ci", choices=("normal", "percentile"), default="normal")
    bs.add_argument("--jitter", action="store_true")

    bl = sub.add_parser("baseline", help="imputation-based point estimates")
    bl.add_argument("--input", required=True)
    bl.add_argument("--method", choices=BASELINE_METHODS + ("all",), default="all")
    bl.add_argument("--seed", type=int, default=0)
    bl.add_argument("--draws", type=int, default=10, help="draws for hotdeck_multi")
    bl.add_argument("--top-code", type=float, default=2.0, dest="top_code")
    bl.add_argument("--format", choices=("json", "csv"), default="json")
    bl.add_argument("--output")

    oc = sub.add_parser("oracle-check", help="compare bounds with brute-force enumeration")
    common(oc)
    data_opts(oc)
    oc.add_argument("--max-n", type=int, default=8, dest="max_n")

    se = sub.add_parser("series", help="bounds for every grouped table in a directory")
    common(se, grouped_only=True)
    se.add_argument("--pattern", default="*.csv")
    return p


_CONFIG_ERRORS = (ParseError, ValueError, BadGroupIndex, IndexOutOfRange, QuantileOnBoundary,
                  TooLarge, NonPositiveMean, NoPointData, OverlapError)
_INFEASIBLE_ERRORS = (InfeasibleConstraints, NoFeasibleAssignment, ResampleInfeasible)
_NUMERICAL_ERRORS = (NumericalFailure, DegenerateDenominator, BracketViolation)


def exit_code_for(err: BaseException) -> int:
    if isinstance(err, _INFEASIBLE_ERRORS):
        return EXIT_INFEASIBLE
    if isinstance(err, _NUMERICAL_ERRORS):
        return EXIT_NUMERICAL
    return EXIT_CONFIG


def _render(docs, fmt, command) -> str:
    if fmt == "csv":
        if command == "baseline":
            return to_csv(docs)
        rows = []
        for d in docs:
            if "error" in d:
                rows.append(d)
                continue
            row = flatten(d)
            if "file" in d:
                row = {"file": d["file"], **row}
            rows.append(row)
        return to_csv(rows)
    body = docs[0] if command in ("bounds", "bootstrap", "oracle-check") else docs
    return to_json(body) + "\n"


def run(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    handlers = {"bounds": cmd_bounds, "bootstrap": cmd_bootstrap, "baseline": cmd_baseline,
                "oracle-check": cmd_oracle_check, "series": cmd_series}
    code = EXIT_OK
    try:
        if args.command != "baseline" and args.top_code <= 1:
            raise ValueError("--top-code must exceed 1")
        out = handlers[args.command](args)
        if args.command == "series":
            out, err = out
            if err is not None:
                code = exit_code_for(err)
    except (IneqBoundsError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return exit_code_for(e)
    text = _render(out, args.format, args.command)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        stdout.write(text)
    if args.command == "oracle-check" and not out[0]["oracle"]["agree"]:
        print("error: module bounds disagree with the oracle", file=sys.stderr)
        return EXIT_DISAGREE
    return code


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()

"""Command-line interface: ``foliation-forge <subcommand> ...``.

Exit codes: 0 everything passed, 1 a verification failed, 2 invalid input.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import Optional, Sequence

from . import __version__, constructions, link_model, sl2z
from .schema import REPORT_SCHEMA
from .verify_suite import CHECK_NAMES, ConfigError, SuiteConfig, convergence_study, run_suite

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


def _exponent(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from exc
    if value < 2:
        raise argparse.ArgumentTypeError(f"exponents must be >= 2, got {value}")
    return value


def _grid_size(text: str) -> int:
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer") from exc
    if value < 4:
        raise argparse.ArgumentTypeError("grid size must be at least 4")
    return value


def _check_list(text: str) -> tuple[str, ...]:
    names = tuple(n.strip() for n in text.split(",") if n.strip())
    unknown = [n for n in names if n not in CHECK_NAMES]
    if unknown or not names:
        raise argparse.ArgumentTypeError(f"unknown checks {unknown}; choose from {', '.join(CHECK_NAMES)}")
    return names


def _add_triple(p: argparse.ArgumentParser) -> None:
    p.add_argument("--p", type=_exponent, required=True)
    p.add_argument("--q", type=_exponent, required=True)
    p.add_argument("--r", type=_exponent, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foliation-forge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="monodromy, class and invariants of T_{p,q,r}")
    _add_triple(p)
    p.add_argument("--json", action="store_true", help="print JSON instead of a table")

    p = sub.add_parser("verify", help="run the verification suite")
    _add_triple(p)
    p.add_argument("--grid", type=_grid_size, default=16, help="N-grid size G (end grid 4G x G^3)")
    p.add_argument("--checks", type=_check_list, default=None, help="comma-separated subset of checks")
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--csv", help="write per-slice margin curves here")
    p.add_argument("--l-offset", type=float, default=1.0, help="circular form uses L = lambda + OFFSET")
    p.add_argument("--json", action="store_true", help="print the JSON report on stdout")

    p = sub.add_parser("constants", help="geometry constants and the chosen a, b")
    _add_triple(p)
    p.add_argument("--grid", type=_grid_size, default=16)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("convergence", help="finite-difference order study")
    _add_triple(p)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--json", action="store_true")

    sub.add_parser("report-schema", help="print the JSON schema of the report")
    return parser


# ----------------------------------------------------------------------------


def classify_payload(p: int, q: int, r: int) -> dict:
    m = sl2z.monodromy_matrix(p, q, r)
    cls = sl2z.classify_singularity(p, q, r)
    tr = sl2z.trace_identity_check(p, q, r)
    ctype = sl2z.conjugacy_type(m)
    inv = sl2z.topological_invariants(p, q, r)
    model = {"simple-elliptic": "nil", "cusp": "solv"}.get(cls.kind.value)
    out = {
        "triple": [p, q, r],
        "monodromy": m.to_list(),
        "class": cls.kind.value,
        "model": model,
        "reciprocalSum": str(cls.reciprocal_sum),
        "trace": tr.trace_computed,
        "traceFormula": str(tr.trace_formula),
        "conjugacyType": ctype.kind.value,
        "mu": inv.mu,
        "chiFiber": inv.chi_fiber,
        "chiGlued": inv.chi_glued,
        "eulerNumber": inv.euler_number,
        "conjugateToInverse": sl2z.conjugate_to_inverse(m),
    }
    if ctype.kind is sl2z.ConjugacyKind.HYPERBOLIC:
        out["rlWord"] = sl2z.rl_word(m)
    return out


def _print_table(rows: dict, stream) -> None:
    width = max(len(k) for k in rows)
    for k, v in rows.items():
        print(f"{k:<{width}}  {v}", file=stream)


def cmd_classify(args) -> int:
    payload = classify_payload(args.p, args.q, args.r)
    if args.json:
        print(json.dumps(payload))
    else:
        _print_table(payload, sys.stdout)
    return EXIT_OK


def _write_csv(report, path: str) -> None:
    for name, key, header in (
        ("end-form", "slice_margins", ("rho", "min_margin")),
        ("circular", "lambda_gap_curve", ("theta", "L_minus_lambda")),
    ):
        try:
            rows = report.check(name).details.get(key)
        except KeyError:
            continue
        if rows:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(header)
                writer.writerows([f"{x:.12g}" for x in row] for row in rows)
            return
    raise ConfigError("--csv needs the end-form or circular check")


def cmd_verify(args) -> int:
    cfg = SuiteConfig.with_grid(args.p, args.q, args.r, args.grid, checks=args.checks, circular_l_offset=args.l_offset)
    if args.csv and args.checks is not None and not {"end-form", "circular"} & set(args.checks):
        raise ConfigError("--csv needs the end-form or circular check")
    report = run_suite(cfg)
    human = sys.stderr if args.json else sys.stdout
    for c in report.checks:
        print(c.summary_line(), file=human)
    print(f"overall: {report.overall.value}  (grid {args.grid}, config {cfg.digest()[:12]})", file=human)
    payload = report.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    if args.csv:
        _write_csv(report, args.csv)
    if args.json:
        print(payload)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_constants(args) -> int:
    model = link_model.build_link_model(args.p, args.q, args.r)
    gc = link_model.geometry_constants(model, link_model.default_n_grid(args.grid))
    cs = constructions.choose_constants(gc)
    payload = {
        "model": model.kind,
        "contactRatioClosedForm": model.contact_ratio,
        "a_min": gc.a_min,
        "A_max": gc.a_max,
        "C_max": gc.c_max,
        "m_min": gc.m_min,
        **cs.to_dict(),
    }
    if args.json:
        print(json.dumps(payload))
    else:
        _print_table(payload, sys.stdout)
    return EXIT_OK


def cmd_convergence(args) -> int:
    if args.levels < 3:
        raise ConfigError("--levels must be at least 3")
    rows = convergence_study(SuiteConfig(args.p, args.q, args.r), args.levels)
    if args.json:
        print(json.dumps(rows))
    else:
        for row in rows:
            order = "n/a" if row["order"] is None else f"{row['order']:.3f}"
            print(f"{row['status'].upper():8s} {row['form']}  order={order}")
            for lev in row["levels"]:
                print(f"    h={lev['h']:.6g}  residual={lev['residual']:.3e}")
    return EXIT_FAIL if any(r["status"] == "fail" for r in rows) else EXIT_OK


def cmd_schema(args) -> int:
    print(json.dumps(REPORT_SCHEMA, indent=2))
    return EXIT_OK


COMMANDS = {
    "classify": cmd_classify,
    "verify": cmd_verify,
    "constants": cmd_constants,
    "convergence": cmd_convergence,
    "report-schema": cmd_schema,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad flags, 0 on --help
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, link_model.UnsupportedSingularityError, ValueError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

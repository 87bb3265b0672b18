"""``pbvp`` command line: solve, certify, gallery.

Exit codes: 0 success, 1 bad input, 2 divergence, 3 hypothesis warning
(or a failing certificate / gallery row).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline, problems, solver

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_WARN = 0, 1, 2, 3
MODE_ALIASES = {"fp": "fixed_point", "fixed_point": "fixed_point", "newton": "newton",
                "continuation": "continuation", "auto": "auto"}

log = logging.getLogger("pbvp")


def _err(msg: str) -> None:
    print(f"pbvp: {msg}", file=sys.stderr)


def _load(source: str, n: int) -> problems.BuiltProblem:
    return problems.build_problem(problems.load_problem(source), n)


def _input_error(exc: Exception) -> int:
    if isinstance(exc, json.JSONDecodeError):
        _err(f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    else:
        _err(f"bad input: {exc}")
    return EXIT_INPUT


BAD_INPUT = (json.JSONDecodeError, FileNotFoundError, IsADirectoryError, ValueError, TypeError, KeyError)


def cmd_solve(args) -> int:
    try:
        built = _load(args.problem, args.n)
        cfg = solver.SolveConfig(n=args.n, tol=args.tol, mode=MODE_ALIASES[args.mode], a=args.a, b=args.b,
                                 max_iter=args.max_iter)
    except BAD_INPUT as exc:
        return _input_error(exc)
    try:
        result = pipeline.solve_built(built, cfg)
    except solver.SolveError as exc:
        _err(f"diverged: {exc}")
        return EXIT_DIVERGED
    if args.out:
        Path(args.out).write_text(result.to_json(indent=2) + "\n")
    if args.csv:
        result.x.to_csv(args.csv)
    m = result.envelope_membership or {}
    print(f"{result.method}: residual {result.residual:.3e} after {result.iterations} iterations, "
          f"x in [{result.x.values.min():.10g}, {result.x.values.max():.10g}]")
    violated = [k for k, v in m.items() if v is False]
    truncated = [w for w in result.warnings if w.startswith("truncation active")]
    if violated or truncated:
        for w in violated:
            _err(f"warning: solution leaves the {w} envelope")
        for w in truncated:
            _err(f"warning: {w}")
        return EXIT_WARN
    return EXIT_OK


def cmd_certify(args) -> int:
    try:
        built = _load(args.problem, args.n)
        cert = pipeline.certify(built, a=args.a, b=args.b, delta=args.delta, Delta=args.Delta,
                                samples=args.samples, seed=args.seed)
    except BAD_INPUT as exc:
        return _input_error(exc)
    if args.out:
        Path(args.out).write_text(cert.to_json(indent=2) + "\n")
    for r in cert.records:
        print(f"{r.name:<10} {'pass' if r.passed else 'FAIL'}  margin {r.margin:.6g}  [{r.kind}]")
    return EXIT_OK if cert.passed else EXIT_WARN


def cmd_gallery(args) -> int:
    rows = pipeline.gallery(n=args.n, seed=args.seed, samples=args.samples)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pipeline.write_gallery(rows, out / "summary.csv")
    for r in rows:
        flag = "" if r.status == "pass" else "   <-- FAIL " + r.message
        print(f"{r.instance:<18} residual {r.residual:.3e}  oracle {r.oracle_deviation:.3e}  "
              f"certificate {r.certificate}{flag}")
    return EXIT_OK if all(r.status == "pass" for r in rows) else EXIT_WARN


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pbvp", description="Periodic boundary value problems for -x'' = f(t, x, x').")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a problem file or preset")
    s.add_argument("problem")
    s.add_argument("--n", type=int, default=256)
    s.add_argument("--tol", type=float, default=1e-8)
    s.add_argument("--mode", choices=sorted(MODE_ALIASES), default="auto")
    s.add_argument("--a", type=float)
    s.add_argument("--b", type=float)
    s.add_argument("--max-iter", type=int, default=500)
    s.add_argument("--out")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("certify", help="check the hypotheses and write a certificate")
    c.add_argument("problem")
    c.add_argument("--n", type=int, default=256)
    c.add_argument("--delta", type=float)
    c.add_argument("--Delta", type=float)
    c.add_argument("--a", type=float)
    c.add_argument("--b", type=float)
    c.add_argument("--samples", type=int, default=200)
    c.add_argument("--seed", type=int, default=7)
    c.add_argument("--out")
    c.set_defaults(func=cmd_certify)

    g = sub.add_parser("gallery", help="certify, solve and cross-check all presets")
    g.add_argument("--out", default="gallery")
    g.add_argument("--n", type=int, default=256)
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--samples", type=int, default=200)
    g.set_defaults(func=cmd_gallery)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

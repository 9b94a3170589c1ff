#!/usr/bin/env python3
"""
microcc - numerical laboratory for compensated compactness

Runs the built-in scenarios, samples characteristic cones and estimates
Garding constants from the command line.

Usage:
    python microcc.py run --config configs/divcurl3.json --json out.json --csv out.csv
    python microcc.py cone --symbol divcurl6 --samples 64 --quadform dot3
    python microcc.py garding --symbol proj_first --quadform proj_cross --delta 0.3
    python microcc.py list
"""

import argparse
import logging
import sys

import numpy as np

from src.cone import garding_constant, get_quadform, q_vanishes_on_cone, sample_cone, sphere_sample_points
from src.config import (
    BUILTIN_BUNDLE_METRICS,
    BUILTIN_DIFFEOMORPHISMS,
    BUILTIN_METRICS,
    BUILTIN_QUADFORMS,
    BUILTIN_SCENARIOS,
    EXIT_ERROR,
    EXIT_FAIL,
    EXIT_PASS,
    SPHERE_SAMPLES,
)
from src.errors import MicroccError
from src.experiments import ScenarioConfig, emit_outputs, run_scenario
from src.symbols import get_symbol, list_symbols

logger = logging.getLogger("microcc")

_THREE_DIMENSIONAL = ("div3", "curl3", "divcurl6")


def default_dim(symbol: str) -> int:
    base = symbol.split(":", 1)[1] if symbol.startswith("scaled:") else symbol
    return 3 if base in _THREE_DIMENSIONAL else 2


def cmd_run(args) -> int:
    cfg = ScenarioConfig.from_file(args.config)
    print(f"🚀 Running scenario {cfg.scenario} on N={cfg.grid['N']}, n={cfg.grid['dim']}")
    report = run_scenario(cfg)

    for name, ok in report.hypotheses.items():
        print(f"   {'✅' if ok else '❌'} hypothesis {name}")
    if report.conclusion is not None:
        print(f"   {'✅' if report.conclusion else '❌'} conclusion")
    for name, ok in report.checks.items():
        print(f"   {'✅' if ok else '❌'} {name}")
    if report.table is not None:
        print(f"\n📊 Pairing gaps by k:")
        for row in report.table.rows:
            print(f"   k={row.k:>3}  gap={row.gap:.3e}")

    json_path = args.json or cfg.outputs.get("json")
    csv_path = args.csv or cfg.outputs.get("csv")
    emit_outputs(report, json_path, csv_path)
    if json_path:
        print(f"💾 Report: {json_path}")
    if csv_path:
        print(f"💾 Table: {csv_path}")

    print(f"\n{'🎉' if report.passed else '⚠️ '} {report.verdict}")
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_cone(args) -> int:
    dim = args.dim or default_dim(args.symbol)
    _, principal = get_symbol(args.symbol, dim)
    x = np.full((1, dim), np.pi)
    samples = sample_cone(principal, x, args.samples)
    print(f"🔍 Cone of {principal.name} at x = pi: {len(samples)} of {args.samples} covectors carry a real kernel")
    dims = sorted({s.dimension for s in samples})
    if dims:
        print(f"   kernel dimensions: {dims}")
    else:
        print("   cone is {0} (elliptic)")
    if args.quadform is None:
        return EXIT_PASS
    Q = get_quadform(args.quadform)
    certificate = q_vanishes_on_cone(Q, samples)
    print(f"   max |{Q.name}| on the cone: {certificate.max_residual:.3e}")
    if certificate.witness is not None and not certificate.certified:
        _, xi, lam = certificate.witness
        print(f"   witness xi={np.round(xi, 6).tolist()} lambda={np.round(lam, 6).tolist()}")
    print(f"{'✅' if certificate.certified else '❌'} {Q.name} {'vanishes' if certificate.certified else 'does not vanish'} on the cone")
    return EXIT_PASS if certificate.certified else EXIT_FAIL


def cmd_garding(args) -> int:
    dim = args.dim or default_dim(args.symbol)
    _, principal = get_symbol(args.symbol, dim)
    Q = get_quadform(args.quadform)
    K = sphere_sample_points(np.zeros((1, dim)), dim, args.samples)
    report = garding_constant(Q, principal, K, args.delta)
    print(f"📐 Garding constant for {Q.name} against {principal.name}, delta={args.delta:g}")
    print(f"   C = {report.constant:.6f}")
    print(f"   slack on resample = {report.violation_on_resample:.3e}")
    print(f"{'✅' if report.passes else '❌'} inequality {'holds' if report.passes else 'fails'} on the resample")
    return EXIT_PASS if report.passes else EXIT_FAIL


def cmd_list(args) -> int:
    print("📚 Registries")
    print(f"   symbols:          {', '.join(list_symbols())}")
    print(f"   quadratic forms:  {', '.join(BUILTIN_QUADFORMS)}")
    print(f"   metrics:          {', '.join(BUILTIN_METRICS)}")
    print(f"   bundle metrics:   {', '.join(BUILTIN_BUNDLE_METRICS)}")
    print(f"   diffeomorphisms:  {', '.join(BUILTIN_DIFFEOMORPHISMS)}")
    print(f"   scenarios:        {', '.join(BUILTIN_SCENARIOS)}")
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microcc",
        description="Numerical laboratory for compensated compactness",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python microcc.py run --config configs/divcurl3.json --csv divcurl3.csv
  python microcc.py cone --symbol div3 --samples 64 --quadform vnorm3
  python microcc.py garding --symbol proj_first --quadform proj_cross --delta 0.5
        """,
    )
    parser.add_argument("--verbose", "-v", action="store_true", help="Log progress of every stage")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a scenario config")
    run.add_argument("--config", "-c", required=True, help="Scenario config (JSON)")
    run.add_argument("--json", help="Write the JSON report here")
    run.add_argument("--csv", help="Write the convergence table here")
    run.set_defaults(handler=cmd_run)

    cone = sub.add_parser("cone", help="Sample the characteristic cone of a symbol")
    cone.add_argument("--symbol", "-s", required=True, help="Symbol registry name")
    cone.add_argument("--samples", "-n", type=int, default=SPHERE_SAMPLES, help=f"Sphere samples (default: {SPHERE_SAMPLES})")
    cone.add_argument("--quadform", "-q", default=None, help="Certify that this quadratic form vanishes on the cone")
    cone.add_argument("--dim", type=int, default=None, help="Dimension (default: 3 for div/curl symbols, else 2)")
    cone.set_defaults(handler=cmd_cone)

    garding = sub.add_parser("garding", help="Estimate a Garding constant")
    garding.add_argument("--symbol", "-s", required=True, help="Symbol registry name")
    garding.add_argument("--quadform", "-q", required=True, help="Quadratic form registry name")
    garding.add_argument("--delta", "-d", type=float, required=True, help="Positive slack in front of |v|^2")
    garding.add_argument("--samples", "-n", type=int, default=16, help="Unit covectors in K (default: 16)")
    garding.add_argument("--dim", type=int, default=None, help="Dimension (default: 3 for div/curl symbols, else 2)")
    garding.set_defaults(handler=cmd_garding)

    listing = sub.add_parser("list", help="Show the registries")
    listing.set_defaults(handler=cmd_list)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # usage errors are errors, not fail verdicts
        return EXIT_PASS if e.code in (0, None) else EXIT_ERROR
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        return args.handler(args)
    except KeyboardInterrupt:
        print("\n\n👋 Cancelled by user")
        return EXIT_ERROR
    except (MicroccError, OSError) as e:
        print(f"\n❌ Error: {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

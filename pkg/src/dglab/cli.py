"""Command-line front end: solve games, analyze chains, emit reports.

Exit codes: 0 success, 2 input validation, 3 numeric failure (including a
failed check), 4 expected failure demonstrated (negative control).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clock import cumulated_payoff_vector, payoff_curve_rows
from .cycles import (
    CYCLE_TABLE_HEADER,
    cycle_table_rows,
    decompose,
    load_chain,
    validate_chain,
)
from .errors import DglabError
from .examples import write_fixtures
from .games import StationaryProfile, induced_chain, load_game, validate_game
from .report import reports_to_json
from .solve import geometric_grid, solve_discounted, value_curve
from .verify import (
    DEFAULT_T_GRID,
    build_profile_limit,
    run_verification,
    verify_weak_cp,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_EXPECTED_FAILURE = 4

HEADER_LINE = f"# dglab {__version__}"


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_text(out: str | None, text: str) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    buf.write(HEADER_LINE + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _load_valid_game(path):
    spec = load_game(path)
    problems = validate_game(spec)
    if problems:
        raise SystemExit(_fail_validation(problems))
    return spec


def _fail_validation(problems) -> int:
    for p in problems:
        print(f"validation: {p}", file=sys.stderr)
    return EXIT_VALIDATION


def _grid_from_args(args, allow_single: bool = True) -> list[float]:
    if allow_single and args.lam is not None and args.lambda_start is None:
        return [args.lam]
    start = args.lambda_start if args.lambda_start is not None else 0.1
    ratio = args.lambda_ratio
    count = args.lambda_count
    return geometric_grid(start, ratio, count)


def _t_grid(args):
    if args.t_grid is None:
        return DEFAULT_T_GRID
    return tuple(float(x) for x in args.t_grid.split(","))


def _solution_dict(spec, sol) -> dict:
    return {
        "lambda": sol.lam,
        "values": {s: float(v) for s, v in zip(spec.states, sol.values)},
        "x1": {
            s: {a: float(p) for a, p in zip(spec.actions1, sol.profile.x1[k])}
            for k, s in enumerate(spec.states)
        },
        "x2": {
            s: {a: float(p) for a, p in zip(spec.actions2, sol.profile.x2[k])}
            for k, s in enumerate(spec.states)
        },
        "residual": sol.residual,
        "iterations": sol.iterations,
    }


def _solution_rows(spec, sols):
    header = (
        ["lambda", "state", "value"]
        + [f"x1:{a}" for a in spec.actions1]
        + [f"x2:{b}" for b in spec.actions2]
    )
    rows = []
    for sol in sols:
        for k, s in enumerate(spec.states):
            rows.append(
                [sol.lam, s, float(sol.values[k])]
                + [float(p) for p in sol.profile.x1[k]]
                + [float(p) for p in sol.profile.x2[k]]
            )
    return header, rows


def cmd_solve(args) -> int:
    spec = _load_valid_game(args.game)
    lam = args.lam if args.lam is not None else 0.01
    sol = solve_discounted(spec, lam, args.tol)
    if args.format == "csv":
        header, rows = _solution_rows(spec, [sol])
        _write_text(args.out, _csv_text(header, rows))
    else:
        _write_text(
            args.out,
            json.dumps(_solution_dict(spec, sol), indent=2, sort_keys=True) + "\n",
        )
    return EXIT_OK


def cmd_curve(args) -> int:
    spec = _load_valid_game(args.game)
    grid = _grid_from_args(args)
    sols = value_curve(spec, grid, args.tol)
    if args.format == "csv":
        header, rows = _solution_rows(spec, sols)
        _write_text(args.out, _csv_text(header, rows))
    else:
        payload = [_solution_dict(spec, s) for s in sols]
        _write_text(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if args.plot:
        from .plots import render_value_curve

        target = Path(args.out).with_suffix(".png") if args.out else Path("curve.png")
        render_value_curve(sols, spec.states, target)
        print(f"figure written to {target}", file=sys.stderr)
    return EXIT_OK


def cmd_chain(args) -> int:
    chain = load_chain(args.chain)
    problems = validate_chain(chain)
    if problems:
        return _fail_validation(problems)
    dec = decompose(chain)
    rows = cycle_table_rows(chain, dec)
    if args.format == "json":
        payload = [dict(zip(CYCLE_TABLE_HEADER, row)) for row in rows]
        _write_text(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        _write_text(args.out, _csv_text(CYCLE_TABLE_HEADER, rows))
    return EXIT_OK


def cmd_limit(args) -> int:
    spec = _load_valid_game(args.game)
    grid = _grid_from_args(args, allow_single=False)
    limit, dec = build_profile_limit(spec, grid, args.tol)
    if args.format == "csv":
        rows = cycle_table_rows(limit.fitted_chain, dec)
        _write_text(args.out, _csv_text(CYCLE_TABLE_HEADER, rows))
        return EXIT_OK
    chain = limit.fitted_chain
    payload = {
        "fitted_chain": chain.to_dict(),
        "v_star": {s: float(v) for s, v in zip(spec.states, limit.v_star)},
        "g_star": {s: float(g) for s, g in zip(spec.states, limit.g_star)},
        "relevant_cycles": [
            {
                "members": [spec.states[k] for k in node.member_states],
                "class": cls,
                "limit_value": float(limit.v_tilde[idx]),
            }
            for idx, (node, cls) in enumerate(zip(dec.relevant, dec.classes))
        ],
        "transient": [spec.states[k] for k in dec.transient],
        "entrance_law": dec.phi.tolist(),
        "generator": dec.gen.tolist(),
        "mixing_matrix": dec.mix.tolist(),
    }
    _write_text(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def _negative_control(args, spec) -> int:
    action = args.opponent.split("-", 1)[1]
    if action not in spec.actions2:
        print(f"unknown column action {action!r}", file=sys.stderr)
        return EXIT_VALIDATION
    j = spec.actions2.index(action)
    grid = _grid_from_args(args, allow_single=False)
    limit, _ = build_profile_limit(spec, grid, args.tol)
    lam_eval = args.lam if args.lam is not None else 1e-5
    sol = solve_discounted(spec, lam_eval, args.tol)
    x2 = np.zeros_like(sol.profile.x2)
    x2[:, j] = 1.0
    profile = StationaryProfile(sol.profile.x1, x2)
    report = verify_weak_cp(
        spec,
        limit,
        lam_eval,
        _t_grid(args),
        args.eps,
        profile=profile,
        check_name=f"one_sided_constant_payoff(opponent={args.opponent})",
    )
    _write_text(args.out, reports_to_json([report]))
    if not report.passed:
        print(
            f"negative control: one-sided profile violates the constant payoff "
            f"property (max gap {report.max_residual():.4g})",
            file=sys.stderr,
        )
        return EXIT_EXPECTED_FAILURE
    print("negative control did not fail as expected", file=sys.stderr)
    return EXIT_NUMERIC


def cmd_verify(args) -> int:
    spec = _load_valid_game(args.game)
    if args.opponent:
        return _negative_control(args, spec)
    grid = _grid_from_args(args, allow_single=False)
    lam_eval = args.lam if args.lam is not None else 1e-5
    t_grid = _t_grid(args)
    limit, dec = build_profile_limit(spec, grid, args.tol)
    reports = run_verification(
        spec,
        grid,
        lambda_eval=lam_eval,
        t_grid=t_grid,
        eps=args.eps,
        identity_tol=args.identity_tol,
        tol=args.tol,
        prebuilt=(limit, dec),
    )
    _write_text(args.out, reports_to_json(reports))
    if args.out:
        sol = solve_discounted(spec, lam_eval, args.tol)
        q, g_x = induced_chain(spec, sol.profile)
        curves = [
            [float(cumulated_payoff_vector(q, g_x, lam_eval, t)[k]) for t in t_grid]
            for k in range(spec.n_states)
        ]
        stem = Path(args.out)
        for k, state in enumerate(spec.states):
            rows = payoff_curve_rows(t_grid, curves[k], float(limit.v_star[k]))
            target = stem.with_name(f"{stem.stem}_payoff_{state}.csv")
            target.write_text(
                _csv_text(("t", "gamma", "t_times_vstar", "abs_gap"), rows)
            )
        if args.plot:
            from .plots import render_payoff_curves

            render_payoff_curves(
                spec.states,
                t_grid,
                curves,
                limit.v_star,
                stem.with_suffix(".png"),
            )
    failed = [r.check for r in reports if not r.passed]
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_example(args) -> int:
    written = write_fixtures(args.dir)
    for name in written:
        print(f"{args.dir}/{name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dglab",
        description="discounted stochastic game laboratory",
    )
    parser.add_argument("--version", action="version", version=f"dglab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, game=False, chain=False):
        if game:
            p.add_argument("--game", required=True, help="game spec JSON file")
        if chain:
            p.add_argument("--chain", required=True, help="chain JSON file")
        p.add_argument("--lambda", dest="lam", type=float, default=None)
        p.add_argument("--lambda-start", dest="lambda_start", type=float, default=None)
        p.add_argument("--lambda-ratio", dest="lambda_ratio", type=float,
                       default=10 ** -0.5)
        p.add_argument("--lambda-count", dest="lambda_count", type=int, default=13)
        p.add_argument("--t-grid", dest="t_grid", default=None,
                       help="comma-separated fractions of the game")
        p.add_argument("--eps", type=float, default=0.05,
                       help="tolerance of the constant-payoff checks")
        p.add_argument("--identity-tol", dest="identity_tol", type=float,
                       default=2e-2, help="tolerance of the invariance checks")
        p.add_argument("--tol", type=float, default=1e-10,
                       help="fixed-point solver tolerance")
        p.add_argument("--out", default=None, help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default="json")
        p.add_argument("--plot", action="store_true",
                       help="render figures next to the output file")

    p = sub.add_parser("solve", help="discounted value at one lambda")
    common(p, game=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("curve", help="values along a lambda grid")
    common(p, game=True)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("chain", help="cycle table of a leading-term chain")
    common(p, chain=True)
    p.set_defaults(func=cmd_chain)

    p = sub.add_parser("limit", help="fitted vanishing-discount limit of a game")
    common(p, game=True)
    p.set_defaults(func=cmd_limit)

    p = sub.add_parser("verify", help="constant-payoff verification suite")
    common(p, game=True)
    p.add_argument("--opponent", default=None,
                   help="fixed-<action>: pin player 2 to a pure action "
                        "(negative control)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("example", help="write the fixture games and chains")
    p.add_argument("--dir", default="fixtures")
    p.set_defaults(func=cmd_example)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except DglabError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface.

Exit codes separate "the math says no" from "the numerics failed":

* 0  success
* 2  invalid input (parse or validation error, bad arguments)
* 3  no stationary profile exists for the requested asymptotes
* 4  numerical failure (blow-up, non-convergence, missing root, ...)
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import (
    BlowUpError,
    DomainError,
    FtlsError,
    IncompatibleAsymptotesError,
    NoProfileError,
    OutOfRangeError,
    ValidationError,
)
from .experiments import REPRODUCE_TARGETS, ExperimentSpec, parse_spec, run
from .model import ModelParams, Verdict, classify, classify_from_fbar

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NO_PROFILE = 3
EXIT_NUMERICAL = 4


def _fail(msg, code):
    print(f"error: {msg}", file=sys.stderr)
    return code


def _classify_report(args):
    params = ModelParams.paper_defaults(ell=args.ell, h=args.horizon,
                                        V_minus=args.v_minus,
                                        V_plus=args.v_plus)
    if args.rho_minus is not None and args.rho_plus is not None:
        return classify(params, args.rho_minus, args.rho_plus)
    if args.fbar is not None and args.subcase is not None:
        return classify_from_fbar(params, args.fbar, args.subcase)
    raise ValidationError(
        ["either --rho-minus/--rho-plus or --fbar/--subcase is required"]
    )


def cmd_classify(args):
    if args.spec is not None:
        spec = parse_spec(args.spec)
        manifest = run(spec, out_dir=args.out)
        print(json.dumps(manifest, indent=2, sort_keys=True))
        return EXIT_NO_PROFILE if manifest["verdict"] == Verdict.NONE.value else EXIT_OK
    report = _classify_report(args)
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return EXIT_NO_PROFILE if report.verdict is Verdict.NONE else EXIT_OK


def _run_spec_kind(args, expected_kinds):
    spec = parse_spec(args.spec)
    if spec.kind not in expected_kinds:
        raise ValidationError(
            [f"spec kind {spec.kind!r} does not match this subcommand; "
             f"expected one of {', '.join(expected_kinds)}"]
        )
    manifest = run(spec, out_dir=args.out)
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_profile(args):
    return _run_spec_kind(args, ("profile",))


def cmd_simulate(args):
    return _run_spec_kind(args, ("simulate",))


def cmd_limits(args):
    return _run_spec_kind(args, ("limits-micro-macro", "limits-nonlocal-local"))


def cmd_reproduce(args):
    overrides = {
        "dz": args.dz,
        "t_final": args.t_final,
        "N_left": args.n_left,
        "N_right": args.n_right,
        "X_min": args.x_min,
        "X_max": args.x_max,
    }
    spec = ExperimentSpec(name=args.target, kind="reproduce-figure",
                          params=ModelParams.paper_defaults(),
                          figure=args.target, output_dir=args.out)
    manifest = run(spec, out_dir=args.out, overrides=overrides)
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftls-lab",
        description="Numerical laboratory for the nonlocal follow-the-leaders "
                    "traffic model across a speed-limit jump.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify",
                       help="subcase classification and profile verdict")
    c.add_argument("--spec", help="experiment spec JSON (kind classify)")
    c.add_argument("--out", default="out/classify", help="artifact directory")
    c.add_argument("--ell", type=float, default=0.05)
    c.add_argument("--horizon", type=float, default=0.5)
    c.add_argument("--v-minus", type=float, default=2.0)
    c.add_argument("--v-plus", type=float, default=1.0)
    c.add_argument("--rho-minus", type=float)
    c.add_argument("--rho-plus", type=float)
    c.add_argument("--fbar", type=float)
    c.add_argument("--subcase")
    c.set_defaults(func=cmd_classify)

    for name, func, desc in (
        ("profile", cmd_profile, "construct stationary wave profiles"),
        ("simulate", cmd_simulate, "integrate the particle system"),
        ("limits", cmd_limits, "convergence studies against limit profiles"),
    ):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--spec", required=True, help="experiment spec JSON")
        p.add_argument("--out", default=None,
                       help="artifact directory (default: spec output_dir)")
        p.set_defaults(func=func)

    r = sub.add_parser("reproduce", help="regenerate figure data")
    r.add_argument("target", choices=sorted(REPRODUCE_TARGETS))
    r.add_argument("--out", default=None, help="artifact directory")
    r.add_argument("--dz", type=float, help="override the profile grid step")
    r.add_argument("--t-final", type=float, help="override the time horizon")
    r.add_argument("--n-left", type=int, help="override cars left of the jump")
    r.add_argument("--n-right", type=int, help="override cars right of the jump")
    r.add_argument("--x-min", type=float, help="override the profile window")
    r.add_argument("--x-max", type=float, help="override the profile window")
    r.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "reproduce" and args.out is None:
        args.out = f"out/{args.target}"
    try:
        return args.func(args)
    except ValidationError as e:
        for p in getattr(e, "problems", None) or [str(e)]:
            print(f"error: {p}", file=sys.stderr)
        return EXIT_INVALID
    except (OutOfRangeError, DomainError) as e:
        return _fail(e, EXIT_INVALID)
    except (NoProfileError, IncompatibleAsymptotesError) as e:
        return _fail(e, EXIT_NO_PROFILE)
    except (BlowUpError, FtlsError) as e:
        return _fail(e, EXIT_NUMERICAL)
    except OSError as e:
        return _fail(e, EXIT_INVALID)


if __name__ == "__main__":
    sys.exit(main())

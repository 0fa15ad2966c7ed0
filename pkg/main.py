import argparse
import json
import os
import sys

from src.utils.logger import logger, setup_logger


def _parse_methods(value):
    return [m.strip() for m in value.split(",") if m.strip()]


def run_command(args):
    from src.harness.config import apply_overrides, load_config, preset_configs
    from src.harness.runner import run_experiment

    if args.preset:
        configs = preset_configs(args.preset, args.out)
        overrides = dict(seed=args.seed, eps=args.eps, methods=args.methods, stride=args.stride)
    elif args.config:
        configs = [load_config(args.config)]
        overrides = dict(seed=args.seed, out=args.out, eps=args.eps, methods=args.methods, stride=args.stride)
    else:
        logger.error("run needs a config file or --preset")
        return 2

    failed = False
    for config in configs:
        result = run_experiment(apply_overrides(config, **overrides))
        failed = failed or result.failed
    return 1 if failed else 0


def generate_command(args):
    from src.harness.config import problem_from_dict
    from src.harness.runner import build_problem
    from src.core.problems import save_problem

    spec_arg = args.spec
    if os.path.exists(spec_arg):
        with open(spec_arg) as fh:
            raw = json.load(fh)
    else:
        raw = json.loads(spec_arg)
    raw.setdefault("kind", "quadratic")
    spec = problem_from_dict(raw)
    problem = build_problem(spec, args.seed if args.seed is not None else 0)
    save_problem(problem, args.output)
    logger.info(f"Wrote {spec.kind} problem archive to {args.output}")
    return 0


def check_command(args):
    from src.harness.checks import all_passed, run_checks

    report = run_checks(args.suites or None, corrupt_mu_x=args.corrupt_mu_x)
    print(json.dumps(report, indent=2))
    return 0 if all_passed(report) else 1


def report_command(args):
    from src.harness.report import format_report

    sys.stdout.write(format_report(args.directory, cost_ratio=args.cost_ratio))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="blocksplit", description="Block Accelerated Method experiments")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config", nargs="?", help="experiment config (JSON)")
    run.add_argument("--preset", help="named experiment sweep instead of a config file")
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--eps", type=float)
    run.add_argument("--methods", type=_parse_methods, help="comma-separated method names")
    run.add_argument("--stride", type=int)
    run.set_defaults(func=run_command)

    gen = sub.add_parser("generate", help="write a problem archive")
    gen.add_argument("spec", help="problem spec: JSON file or inline JSON object")
    gen.add_argument("-o", "--output", required=True)
    gen.add_argument("--seed", type=int)
    gen.set_defaults(func=generate_command)

    check = sub.add_parser("check", help="run invariant check suites")
    check.add_argument("suites", nargs="*", help="contraction, lemma1, thetas, finite-difference, counters")
    check.add_argument("--corrupt-mu-x", type=float, dest="corrupt_mu_x",
                       help="scale mu_x by FACTOR before computing BAM parameters")
    check.set_defaults(func=check_command)

    report = sub.add_parser("report", help="summarize an experiment directory")
    report.add_argument("directory")
    report.add_argument("--cost-ratio", type=float, default=1.0, dest="cost_ratio",
                        help="cost of one grad_x call in units of grad_y calls")
    report.set_defaults(func=report_command)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.verbose:
        setup_logger("DEBUG")

    from src.core.oracle import BlockSplitError

    try:
        return args.func(args)
    except BlockSplitError as e:
        logger.error(str(e))
        return 2
    except json.JSONDecodeError as e:
        logger.error(f"Invalid JSON: {e}")
        return 2


if __name__ == "__main__":
    sys.exit(main())

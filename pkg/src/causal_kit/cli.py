"""``causal-kit`` command line entry point.

Exit codes: 0 success, 1 domain error (bad model, failed estimate, failed
repro check), 2 usage error.
"""
from __future__ import annotations

import argparse
import difflib
import json
import math
import sys

from . import __version__, experiments
from . import rng as rngmod
from .dsl import ScmParseError, collect_errors, load_scm
from .estimators import METHODS, EstimationError
from .exact import InferenceError, Query, ate_exact, interventional_query, joint_table, query
from .sampling import BudgetExhausted, Dataset, DatasetError, ancestral_sample
from .scm import ScmError
from .trial import Environment, Schedule, ScheduleError, run_trial

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse on 3.10 gives no hints for mistyped flags
        if "unrecognized arguments" in message:
            known = [s for a in self._actions for s in a.option_strings]
            for sub in self._subparsers._group_actions if self._subparsers else []:
                for p in getattr(sub, "choices", {}).values():
                    known += [s for a in p._actions for s in a.option_strings]
            hints = []
            for arg in message.split(":", 1)[1].split():
                close = difflib.get_close_matches(arg.split("=")[0], known, n=1)
                if close:
                    hints.append(f"{arg} -> did you mean {close[0]}?")
            if hints:
                message += "\n  " + "\n  ".join(hints)
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _assignment(text: str):
    name, sep, value = text.partition("=")
    if not sep or not name:
        raise argparse.ArgumentTypeError(f"expected name=value, got {text!r}")
    try:
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value of {name} must be a number, got {value!r}") from None


def _names(text: str) -> list:
    return [c.strip() for c in text.split(",") if c.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="causal-kit", description="Structural causal models, estimators and trial simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def common(sp, fmt=("json",)):
        sp.add_argument("--seed", type=int, default=None, help=f"64-bit seed (default ${rngmod.SEED_ENV_VAR} or {rngmod.DEFAULT_SEED})")
        sp.add_argument("-o", "--output", default=None, help="write here instead of stdout")
        sp.add_argument("--format", choices=fmt, default=fmt[0])

    sp = sub.add_parser("validate", help="check a model file")
    sp.add_argument("model")
    common(sp, ("text", "json"))

    sp = sub.add_parser("sample", help="draw rows from a model")
    sp.add_argument("model")
    sp.add_argument("-n", type=int, required=True)
    common(sp, ("csv",))

    sp = sub.add_parser("exact", help="exact (interventional) distribution of target nodes")
    sp.add_argument("model")
    sp.add_argument("--target", type=_names, required=True)
    sp.add_argument("--given", type=_assignment, action="append", default=[])
    sp.add_argument("--do", type=_assignment, action="append", default=[])
    common(sp, ("json", "csv"))

    sp = sub.add_parser("ate", help="exact average treatment effect")
    sp.add_argument("model")
    sp.add_argument("--action", required=True)
    sp.add_argument("--outcome", required=True)
    sp.add_argument("--treated", type=float, default=1.0)
    sp.add_argument("--control", type=float, default=0.0)
    sp.add_argument("--given", type=_assignment, action="append", default=[])
    common(sp)

    sp = sub.add_parser("estimate", help="run an estimator on a CSV dataset")
    sp.add_argument("method", help=", ".join(METHODS))
    sp.add_argument("data")
    sp.add_argument("--action")
    sp.add_argument("--outcome")
    sp.add_argument("--covariates", type=_names, default=[])
    sp.add_argument("--treated", type=float, default=1.0)
    sp.add_argument("--control", type=float, default=0.0)
    sp.add_argument("--bootstrap", type=int, default=None, help="bootstrap replicates for the standard error")
    sp.add_argument("--clip", type=float, default=None)
    sp.add_argument("--normalize", action="store_true", help="ipw: self-normalized weights")
    sp.add_argument("--propensity-kind", choices=("table", "logistic"), default="table")
    sp.add_argument("--outcome-model", choices=("table", "linear"), default="table")
    sp.add_argument("--weights", default=None, help="ipw/dr: column of row weights")
    sp.add_argument("--mode", choices=("exact", "epsilon"), default="exact", help="matching")
    sp.add_argument("--epsilon", type=float, default=0.1, help="matching radius")
    sp.add_argument("--ratio", default="1:1", help="matching rows per arm, treated:control")
    sp.add_argument("--strategy", choices=("random", "cycle"), default="random")
    sp.add_argument("--instrument")
    sp.add_argument("--impute-instrument", action="store_true")
    sp.add_argument("--y-pre")
    sp.add_argument("--y-post")
    sp.add_argument("--running")
    sp.add_argument("--threshold", type=float, default=0.0)
    sp.add_argument("--bandwidth", type=float, default=0.5)
    sp.add_argument("--degree", type=int, default=1)
    sp.add_argument("--folds", type=int, default=5)
    common(sp)

    sp = sub.add_parser("trial", help="simulate a sequential trial")
    sp.add_argument("model")
    sp.add_argument("--action", default="a")
    sp.add_argument("--outcome", default="y")
    sp.add_argument("--covariates", type=_names, default=[])
    sp.add_argument("--steps", type=int, required=True)
    sp.add_argument("--schedule-eps", default="const:1")
    sp.add_argument("--schedule-beta", default="const:inf")
    sp.add_argument("--ema", type=float, default=None, metavar="ETA")
    sp.add_argument("--conditional", action="store_true", help="policy uses per-covariate estimates")
    sp.add_argument("--log", default=None, help="write the trial log CSV here")
    common(sp)

    sp = sub.add_parser("repro", help="run a registered acceptance experiment")
    sp.add_argument("experiment", nargs="?")
    sp.add_argument("--list", action="store_true")
    common(sp, ("text", "json"))
    return p


def _seed(args) -> int:
    return args.seed if args.seed is not None else rngmod.default_seed()


def _emit(args, text: str) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False)


def _num(v: float):
    return None if not math.isfinite(v) else v


def cmd_validate(args) -> int:
    with open(args.model, "rb") as fh:
        source = fh.read()
    errors = collect_errors(source)
    if args.format == "json":
        _emit(args, _dumps({
            "model": args.model,
            "valid": not errors,
            "errors": [{"line": e.span.line, "column": e.span.column, "length": e.span.length,
                        "kind": e.kind, "message": e.message} for e in errors],
        }))
    else:
        _emit(args, "OK" if not errors else "\n".join(f"{args.model}:{e}" for e in errors))
    return EXIT_OK if not errors else EXIT_DOMAIN


def cmd_sample(args) -> int:
    if args.n < 0:
        raise UsageError("-n must be >= 0")
    scm = load_scm(args.model)
    _emit(args, ancestral_sample(scm, args.n, _seed(args)).to_csv())
    return EXIT_OK


def cmd_exact(args) -> int:
    scm = load_scm(args.model)
    q = Query(tuple(args.target), dict(args.given), dict(args.do))
    table = interventional_query(scm, q) if q.interventions else query(joint_table(scm), list(q.target), q.evidence)
    _emit(args, table.to_csv() if args.format == "csv" else table.to_json())
    return EXIT_OK


def cmd_ate(args) -> int:
    scm = load_scm(args.model)
    condition = dict(args.given) or None
    est = ate_exact(scm, args.action, args.outcome, args.treated, args.control, condition)
    _emit(args, _dumps({
        "estimate": _num(est),
        "action": args.action,
        "outcome": args.outcome,
        "treated": args.treated,
        "control": args.control,
        "condition": {k: v for k, v in (condition or {}).items()},
    }))
    return EXIT_OK


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise UsageError(f"{args.method} needs " + ", ".join("--" + n.replace("_", "-") for n in missing))


def cmd_estimate(args) -> int:
    if args.method not in METHODS:
        close = difflib.get_close_matches(args.method, list(METHODS), n=1)
        hint = f"; did you mean {close[0]}?" if close else ""
        raise UsageError(f"unknown method {args.method!r}{hint} (choose from {', '.join(METHODS)})")
    data = Dataset.read_csv(args.data)
    m = args.method
    kw = {"rng": _seed(args)}
    if args.bootstrap is not None:
        if args.bootstrap < 0:
            raise UsageError("--bootstrap must be >= 0")
        kw["bootstrap_reps"] = args.bootstrap
    arms = {"treated": args.treated, "control": args.control}
    if m == "rdd":
        _require(args, "running", "outcome")
        report = METHODS[m](data, args.running, args.outcome, threshold=args.threshold,
                            bandwidth=args.bandwidth, degree=args.degree, **kw)
    elif m == "did":
        _require(args, "action", "y_pre", "y_post")
        report = METHODS[m](data, args.action, args.y_pre, args.y_post, **arms, **kw)
    else:
        _require(args, "action", "outcome")
        a, y, cov = args.action, args.outcome, args.covariates
        if m == "naive":
            report = METHODS[m](data, a, y, **arms, **kw)
        elif m == "ols":
            report = METHODS[m](data, a, y, cov, **kw)
        elif m == "regression":
            report = METHODS[m](data, a, y, cov, outcome_model=args.outcome_model, **arms, **kw)
        elif m == "ipw":
            extra = {"clip": args.clip} if args.clip is not None else {}
            weights = data[args.weights] if args.weights else None
            report = METHODS[m](data, a, y, covariates=cov, propensity_kind=args.propensity_kind,
                                normalize=args.normalize, weights=weights, **extra, **arms, **kw)
        elif m == "dr":
            extra = {"clip": args.clip} if args.clip is not None else {}
            weights = data[args.weights] if args.weights else None
            report = METHODS[m](data, a, y, cov, outcome_model=args.outcome_model, propensity=args.propensity_kind,
                                weights=weights, **extra, **arms, **kw)
        elif m == "matching":
            try:
                ratio = tuple(int(v) for v in args.ratio.split(":"))
            except ValueError:
                raise UsageError(f"--ratio must look like 1:1, got {args.ratio!r}") from None
            _, report = METHODS[m](data, a, y, cov, ratio=ratio, mode=args.mode, epsilon=args.epsilon,
                                   strategy=args.strategy, **arms, **kw)
        elif m == "iv":
            _require(args, "instrument")
            report = METHODS[m](data, a, y, args.instrument, impute_instrument=args.impute_instrument, **kw)
        else:
            report = METHODS[m](data, a, y, cov, folds=args.folds, **kw)
    _emit(args, report.to_json())
    return EXIT_OK


def cmd_trial(args) -> int:
    scm = load_scm(args.model)
    schedule = Schedule.parse(args.schedule_eps, args.schedule_beta)
    seed = _seed(args)
    env = Environment(scm, args.action, args.outcome, args.covariates, rng=rngmod.RngSpec(seed).derive("environment"))
    mode, eta = ("ema", args.ema) if args.ema is not None else ("recursive", 0.0)
    state, report = run_trial(env, schedule, args.steps, mode, eta, args.conditional, rng=seed)
    if args.log:
        with open(args.log, "w", encoding="utf-8", newline="") as fh:
            fh.write(state.log_csv())
    _emit(args, report.to_json())
    return EXIT_OK


def cmd_repro(args) -> int:
    if args.list or not args.experiment:
        lines = [f"{e.id}  (criterion {e.criterion}) {e.summary}" for e in experiments.REGISTRY.values()]
        _emit(args, "\n".join(lines))
        return EXIT_OK if args.list else EXIT_USAGE
    if args.experiment not in experiments.REGISTRY:
        close = difflib.get_close_matches(args.experiment, list(experiments.REGISTRY), n=1)
        hint = f"did you mean {close[0]}? " if close else ""
        raise UsageError(f"unknown experiment {args.experiment!r}; {hint}available: {', '.join(experiments.REGISTRY)}")
    seed = args.seed if args.seed is not None else experiments.SEED
    checks = experiments.run(args.experiment, seed)
    ok = all(c.passed for c in checks)
    if args.format == "json":
        _emit(args, _dumps({"experiment": args.experiment, "seed": seed, "passed": ok,
                            "checks": [c.to_dict() for c in checks]}))
    else:
        _emit(args, "\n".join(c.line() for c in checks))
    return EXIT_OK if ok else EXIT_DOMAIN


COMMANDS = {
    "validate": cmd_validate,
    "sample": cmd_sample,
    "exact": cmd_exact,
    "ate": cmd_ate,
    "estimate": cmd_estimate,
    "trial": cmd_trial,
    "repro": cmd_repro,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"causal-kit {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        where = exc.filename or getattr(args, "model", None) or getattr(args, "data", "")
        print(f"causal-kit {args.command}: {where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ScmParseError as exc:
        path = getattr(args, "model", "")
        for e in exc.errors:
            print(f"{path}:{e}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ScmError, InferenceError, EstimationError, DatasetError, ScheduleError, BudgetExhausted, ValueError) as exc:
        print(f"causal-kit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: ``zicount fit | calibrate | simulate | report``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import __version__
from .calibration import ZERO_RATE_REFERENCES, marginal_zero_rate, solve_gamma2
from .distributions import gauss_hermite
from .errors import InputError, NonFiniteObjective, SingularInformation, UnreachableZeroRate
from .harness import CONDITIONS, TABLE_NS, TABLE_ZERO_RATES, TEST_NAMES, build_grid, run_grid
from .models import ModelKind, effect_summaries, fit_model, read_csv, wald_test
from .models.fit import BOUNDARY_ZERO_PART
from .models.inference import NonConvergence
from .report import RESULT_COLUMNS, ResultsSchemaError, read_results, write_report

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_CONFIG = 4
EXIT_UNREACHABLE = 5
EXIT_BOUNDARY = 6
EXIT_FIT_FAILED = 7
EXIT_SCHEMA = 8
EXIT_EMPTY_RESULTS = 9
EXIT_OUTPUT = 10

EXIT_CODES_HELP = f"""exit codes:
  {EXIT_OK}   success
  {EXIT_USAGE}   bad command-line usage
  {EXIT_INPUT}   unreadable or malformed data file (missing column, bad value)
  {EXIT_CONFIG}   invalid simulation config
  {EXIT_UNREACHABLE}   target zero rate cannot be reached by calibration
  {EXIT_BOUNDARY}   zero-inflated fit sits on the boundary (BoundaryZeroPart)
  {EXIT_FIT_FAILED}   model fit failed (non-finite objective, singular information)
  {EXIT_SCHEMA}   results file is missing a required column
  {EXIT_EMPTY_RESULTS}   results file has no data rows
  {EXIT_OUTPUT}  output location cannot be written
"""


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------- config

@dataclass
class RunConfig:
    """Simulation settings; every field defaults to the full study grid."""

    conditions: list = field(default_factory=lambda: list(CONDITIONS))
    ns: list = field(default_factory=lambda: list(TABLE_NS))
    zero_rates: list = field(default_factory=lambda: list(TABLE_ZERO_RATES))
    beta1_values: list | None = None
    replications: int = 1000
    alpha: float = 0.05
    base_seed: int = 20240501
    workers: int = 1
    out_dir: str | None = None
    zero_rate_reference: str = "marginal"

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ValueError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ValueError(f"unknown config field(s): {', '.join(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def _list(name):
            v = getattr(self, name)
            if not isinstance(v, list) or not v:
                raise ValueError(f"{name} must be a non-empty list")
            return v

        for c in _list("conditions"):
            if c not in CONDITIONS:
                raise ValueError(f"conditions: unknown condition {c!r}; expected one of {', '.join(CONDITIONS)}")
        for n in _list("ns"):
            if not isinstance(n, int) or isinstance(n, bool) or n not in TABLE_NS:
                raise ValueError(f"ns: {n!r} is not one of {list(TABLE_NS)}")
        for r in _list("zero_rates"):
            if not any(_close(r, t) for t in TABLE_ZERO_RATES):
                raise ValueError(f"zero_rates: {r!r} is not one of {list(TABLE_ZERO_RATES)}")
        if self.beta1_values is not None:
            allowed = sorted({b for b1s, _ in CONDITIONS.values() for b in b1s})
            for b in _list("beta1_values"):
                if not any(_close(b, a) for a in allowed):
                    raise ValueError(f"beta1_values: {b!r} is not one of {allowed}")
        if not isinstance(self.replications, int) or isinstance(self.replications, bool) or self.replications < 1:
            raise ValueError("replications must be an integer >= 1")
        if not isinstance(self.alpha, (int, float)) or not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not isinstance(self.base_seed, int) or not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must be an integer in [0, 2**64)")
        if not isinstance(self.workers, int) or self.workers < 1:
            raise ValueError("workers must be an integer >= 1")
        if self.zero_rate_reference not in ZERO_RATE_REFERENCES:
            raise ValueError(f"zero_rate_reference must be one of {ZERO_RATE_REFERENCES}")


def _close(a, b):
    return isinstance(a, (int, float)) and not isinstance(a, bool) and math.isclose(a, b, abs_tol=1e-9)


# ---------------------------------------------------------------- fit

def _fit_json(fit, tests, effects, data_path):
    return {
        "data": str(data_path),
        "model": fit.model_kind.value,
        "n_obs": fit.n_obs,
        "loglik": _num(fit.loglik),
        "converged": fit.converged,
        "iterations": fit.iterations,
        "gradient_norm": fit.gradient_norm,
        "flags": sorted(fit.flags),
        "coefficients": [
            {
                "name": name,
                "estimate": _num(fit.coefficients[i]),
                "std_error": _num(fit.std_error(name)),
                "statistic": _num(tests[name].z) if name in tests else None,
                "p_value": _num(tests[name].p_value) if name in tests else None,
            }
            for i, name in enumerate(fit.names)
        ],
        "effects": [
            {"kind": e.kind.value, "value": e.value, "parameter": e.parameter_name} for e in effects
        ],
    }


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def cmd_fit(args) -> int:
    covariates = [c.strip() for c in args.covariates.split(",") if c.strip()] if args.covariates else []
    try:
        d = read_csv(args.data, args.outcome, args.treatment, covariates)
    except InputError as exc:
        raise CliError(str(exc), EXIT_INPUT) from None
    kind = ModelKind(args.model)
    try:
        fit = fit_model(kind, d)
    except (NonFiniteObjective, SingularInformation) as exc:
        raise CliError(f"{kind.value} fit failed: {exc}", EXIT_FIT_FAILED) from None

    tests = {}
    for name in fit.names:
        if name == "sigma2":
            continue
        try:
            tests[name] = wald_test(fit, name, args.alpha)
        except (NonConvergence, SingularInformation):
            pass
    effects = effect_summaries(fit)

    stat_label = "t" if kind in (ModelKind.LINEAR_RAW, ModelKind.LINEAR_LOG) else "z"
    out = sys.stdout
    print(f"model: {kind.value}   n = {fit.n_obs}   converged: {fit.converged}", file=out)
    width = max(12, *(len(n) for n in fit.names))
    print(f"{'':<{width}} {'estimate':>12} {'std.err':>12} {stat_label:>9} {'p':>10}", file=out)
    for i, name in enumerate(fit.names):
        se = fit.std_error(name)
        t = tests.get(name)
        z = f"{t.z:9.3f}" if t else f"{'':>9}"
        p = f"{t.p_value:10.4g}" if t else f"{'':>10}"
        print(f"{name:<{width}} {fit.coefficients[i]:12.6f} {se:12.6f} {z} {p}", file=out)
    print(f"log-likelihood: {fit.loglik:.6f}", file=out)
    for e in effects:
        print(f"{e.kind.value} ({e.parameter_name}): {e.value:.6f}", file=out)
    if fit.flags:
        print(f"flags: {', '.join(sorted(fit.flags))}", file=out)

    json_path = Path(args.json) if args.json else Path(f"{Path(args.data).stem}_{kind.value}_fit.json")
    try:
        json_path.write_text(json.dumps(_fit_json(fit, tests, effects, args.data), indent=2) + "\n")
    except OSError as exc:
        raise CliError(f"cannot write {json_path}: {exc.strerror}", EXIT_OUTPUT) from None
    print(f"wrote {json_path}", file=out)

    if BOUNDARY_ZERO_PART in fit.flags:
        raise CliError(
            "BoundaryZeroPart: the zero-part estimates diverge (e.g. no zeros in the outcome, or "
            "zeros perfectly separated by a covariate); zero-part coefficients are not identified "
            "and only count-part tests are reported",
            EXIT_BOUNDARY,
        )
    return EXIT_OK


# ---------------------------------------------------------------- calibrate

def cmd_calibrate(args) -> int:
    rule = gauss_hermite()
    try:
        g = solve_gamma2(args.zero_rate, args.beta1, args.gamma1, rule, args.reference, beta2=args.beta2)
    except UnreachableZeroRate as exc:
        raise CliError(str(exc), EXIT_UNREACHABLE) from None
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None
    doc = {
        "target_zero_rate": args.zero_rate,
        "zero_rate_reference": args.reference,
        **g.to_dict(),
        "achieved_zero_rate": marginal_zero_rate(g, rule, args.reference),
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def _fmt(x):
    x = float(x)
    return "nan" if math.isnan(x) else f"{x:g}"


def results_rows(results, base_seed):
    """CSV rows (as string lists) for scenario results, in the canonical order."""
    rows = []
    for res in results:
        s = res.scenario
        for test in TEST_NAMES:
            rate = res.rejection_rate(test)
            rows.append((
                (s.condition, s.beta1, s.n, s.zero_rate, test),
                [
                    s.condition, _fmt(s.beta1), _fmt(s.gamma1), str(s.n), _fmt(s.zero_rate), test,
                    "nan" if math.isnan(rate) else f"{rate:.6f}",
                    str(res.failures[test]), str(res.replications_completed), str(base_seed),
                ],
            ))
    rows.sort(key=lambda r: r[0])
    return [r[1] for r in rows]


def _progress(done, total, res):
    print(f"[{done}/{total}] {res.scenario.label}", file=sys.stderr, flush=True)


def cmd_simulate(args) -> int:
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise CliError(f"cannot read config {args.config}: {exc.strerror}", EXIT_CONFIG) from None
    except json.JSONDecodeError as exc:
        raise CliError(f"config {args.config} is not valid JSON: {exc}", EXIT_CONFIG) from None
    try:
        cfg = RunConfig.from_dict(raw)
        if args.seed is not None:
            cfg.base_seed = args.seed
        if args.threads is not None:
            cfg.workers = args.threads
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid config: {exc}", EXIT_CONFIG) from None

    out = Path(args.out or cfg.out_dir or ".")
    try:
        (out / "scenarios").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {out}: {exc.strerror}", EXIT_OUTPUT) from None

    # calibrate every cell before any replication runs
    try:
        scenarios = build_grid(
            cfg.conditions, cfg.ns, cfg.zero_rates, gauss_hermite(), cfg.beta1_values,
            cfg.alpha, cfg.replications, cfg.zero_rate_reference,
        )
    except UnreachableZeroRate as exc:
        raise CliError(f"calibration failed, nothing was run: {exc}", EXIT_UNREACHABLE) from None
    if not scenarios:
        raise CliError("config selects no scenarios", EXIT_CONFIG)
    print(f"running {len(scenarios)} scenario(s) x {cfg.replications} replications "
          f"on {cfg.workers} worker(s)", file=sys.stderr, flush=True)

    results = run_grid(scenarios, cfg.base_seed, cfg.workers, progress=_progress)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    writer.writerows(results_rows(results, cfg.base_seed))
    try:
        (out / "results.csv").write_text(buf.getvalue())
        for res in results:
            s = res.scenario
            name = f"{s.condition}_b1_{s.beta1:g}_n{s.n}_zr{s.zero_rate:g}.json"
            (out / "scenarios" / name).write_text(json.dumps(res.to_dict(), indent=2, sort_keys=True) + "\n")
        run_doc = {k: getattr(cfg, k) for k in (f.name for f in fields(cfg))}
        run_doc["out_dir"] = str(out)
        (out / "run_config.json").write_text(json.dumps(run_doc, indent=2) + "\n")
    except OSError as exc:
        raise CliError(f"cannot write results to {out}: {exc.strerror}", EXIT_OUTPUT) from None
    for res in results:
        if res.flagged_tests:
            print(f"warning: {res.scenario.label}: fit failures above 2% for "
                  f"{', '.join(res.flagged_tests)}", file=sys.stderr)
    print(f"wrote {out / 'results.csv'}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- report

def cmd_report(args) -> int:
    try:
        with open(args.results, newline="") as fh:
            lines = [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise CliError(f"cannot read {args.results}: {exc.strerror}", EXIT_INPUT) from None
    try:
        if lines:
            read_results(args.results)  # header check even without data rows
        if len(lines) < 2:
            raise CliError(f"{args.results} contains no results; no figures written", EXIT_EMPTY_RESULTS)
        written = write_report(args.results, args.out)
    except ResultsSchemaError as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from None
    except (ValueError, KeyError) as exc:
        raise CliError(f"{args.results}: malformed value: {exc}", EXIT_INPUT) from None
    except OSError as exc:
        raise CliError(f"cannot write figures to {args.out}: {exc.strerror}", EXIT_OUTPUT) from None
    for p in written:
        print(f"wrote {p}", file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zicount",
        description="Fit count models to trial data and run the zero-inflation Type I error / power study.",
        epilog=EXIT_CODES_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(name, help=help_text, description=help_text, epilog=EXIT_CODES_HELP,
                              formatter_class=argparse.RawDescriptionHelpFormatter)

    p = add("fit", "Fit one model to a CSV file and print a coefficient table.")
    p.add_argument("--data", required=True, help="CSV file with a header row")
    p.add_argument("--model", required=True, choices=[k.value for k in ModelKind])
    p.add_argument("--outcome", required=True, help="outcome column (nonnegative integers)")
    p.add_argument("--treatment", help="0/1 treatment column; omit for an intercept-only fit")
    p.add_argument("--covariates", help="comma-separated numeric covariate columns")
    p.add_argument("--alpha", type=float, default=0.05, help="test level (default 0.05)")
    p.add_argument("--json", help="where to write the JSON fit (default <data>_<model>_fit.json)")
    p.set_defaults(func=cmd_fit)

    p = add("calibrate", "Solve the zero-part covariate slope for a target marginal zero rate.")
    p.add_argument("--zero-rate", type=float, required=True)
    p.add_argument("--beta1", type=float, required=True)
    p.add_argument("--gamma1", type=float, required=True)
    p.add_argument("--beta2", type=float, default=0.2)
    p.add_argument("--reference", choices=ZERO_RATE_REFERENCES, default="marginal",
                   help="average the zero rate over both arms (marginal) or the control arm only")
    p.set_defaults(func=cmd_calibrate)

    p = add("simulate", "Run the simulation grid described by a JSON config.")
    p.add_argument("--config", required=True, help="JSON config; every field optional")
    p.add_argument("--out", required=True, help="output directory for results.csv and scenario JSON")
    p.add_argument("--threads", type=int, help="worker processes (overrides config 'workers')")
    p.add_argument("--seed", type=int, help="base seed (overrides config 'base_seed')")
    p.set_defaults(func=cmd_simulate)

    p = add("report", "Draw SVG rejection-rate figures from results.csv.")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True, help="output directory for the SVG files")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"zicount {args.command}: error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())

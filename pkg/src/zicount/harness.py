"""Monte Carlo harness for the Type I error / power study.

A scenario is one cell of the grid (condition, b1, n, zero rate). Each
replication draws a ZIP dataset from its own random stream, fits the five
model families and records the outcome of the seven treatment tests.
"""
from __future__ import annotations

import enum
import hashlib
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special

from .calibration import GeneratorParams, solve_gamma2
from .distributions import (
    QuadratureRule,
    RngStream,
    gauss_hermite,
    sample_bernoulli,
    sample_poisson,
    sample_std_normal,
)
from .errors import UnreachableZeroRate, ZicountError
from .models import Dataset, FitResult, ModelKind, fit_model, wald_test
from .models.data import INTERCEPT
from .models.fit import ZERO_PREFIX, starting_values

__all__ = [
    "CONDITIONS",
    "TABLE_NS",
    "TABLE_ZERO_RATES",
    "TEST_NAMES",
    "Outcome",
    "ScenarioConfig",
    "ReplicationRecord",
    "ScenarioResult",
    "build_grid",
    "scenario_index",
    "draw_rows",
    "generate_dataset",
    "run_replication",
    "run_scenario",
    "run_grid",
]

# condition -> (b1 values, g1)
CONDITIONS: dict[str, tuple[tuple[float, ...], float]] = {
    "C1": ((-0.1, -0.2, -0.3), 0.5),
    "C2": ((-0.1, -0.2, -0.3), 0.0),
    "C3": ((0.0,), 0.5),
    "C4": ((0.0,), 0.0),
}
TABLE_NS = (100, 200, 300, 500)
TABLE_ZERO_RATES = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)

TEST_NAMES = (
    "poisson_b1",
    "nb_b1",
    "zip_b1",
    "zip_g1",
    "mzip_b1",
    "linear_raw_b1",
    "linear_log_b1",
)
# test -> (model, tested block)
_TESTS = {
    "poisson_b1": (ModelKind.POISSON, "count"),
    "nb_b1": (ModelKind.NB, "count"),
    "zip_b1": (ModelKind.ZIP, "count"),
    "zip_g1": (ModelKind.ZIP, "zero"),
    "mzip_b1": (ModelKind.MZIP, "count"),
    "linear_raw_b1": (ModelKind.LINEAR_RAW, "count"),
    "linear_log_b1": (ModelKind.LINEAR_LOG, "count"),
}
FAILURE_FLAG_FRACTION = 0.02
TREATMENT = "treatment"
COVARIATE = "cov"


class Outcome(str, enum.Enum):
    REJECT = "Reject"
    ACCEPT = "Accept"
    FIT_FAILED = "FitFailed"


@dataclass(frozen=True)
class ScenarioConfig:
    condition: str
    beta1: float
    gamma1: float
    n: int
    zero_rate: float
    generator: GeneratorParams
    alpha: float = 0.05
    replications: int = 1000
    index: int = 0

    @property
    def label(self) -> str:
        return f"{self.condition} b1={self.beta1:g} g1={self.gamma1:g} n={self.n} zero_rate={self.zero_rate:g}"


@dataclass(frozen=True)
class ReplicationRecord:
    outcomes: dict
    seeds: tuple[int, int, int]
    n_zeros: int = 0

    def __post_init__(self):
        if set(self.outcomes) != set(TEST_NAMES):
            raise ValueError("a replication records exactly the seven tests")


@dataclass
class ScenarioResult:
    scenario: ScenarioConfig
    base_seed: int
    rejections: dict = field(default_factory=lambda: dict.fromkeys(TEST_NAMES, 0))
    acceptances: dict = field(default_factory=lambda: dict.fromkeys(TEST_NAMES, 0))
    failures: dict = field(default_factory=lambda: dict.fromkeys(TEST_NAMES, 0))
    replications_completed: int = 0
    zeros_observed: int = 0
    rows_observed: int = 0

    def add(self, record: ReplicationRecord, n_rows: int) -> None:
        for test, outcome in record.outcomes.items():
            if outcome is Outcome.REJECT:
                self.rejections[test] += 1
            elif outcome is Outcome.ACCEPT:
                self.acceptances[test] += 1
            else:
                self.failures[test] += 1
        self.replications_completed += 1
        self.zeros_observed += record.n_zeros
        self.rows_observed += n_rows

    def rejection_rate(self, test: str) -> float:
        """Rejections over replications whose fit for ``test`` succeeded."""
        denom = self.replications_completed - self.failures[test]
        return self.rejections[test] / denom if denom else math.nan

    @property
    def rejection_rates(self) -> dict:
        return {t: self.rejection_rate(t) for t in TEST_NAMES}

    @property
    def failure_count(self) -> dict:
        return dict(self.failures)

    @property
    def flagged_tests(self) -> list[str]:
        """Tests whose fit-failure fraction exceeds 2%."""
        if not self.replications_completed:
            return []
        return [
            t for t in TEST_NAMES
            if self.failures[t] / self.replications_completed > FAILURE_FLAG_FRACTION
        ]

    @property
    def zero_fraction(self) -> float:
        return self.zeros_observed / self.rows_observed if self.rows_observed else math.nan

    def to_dict(self) -> dict:
        s = self.scenario
        return {
            "condition": s.condition,
            "beta1": s.beta1,
            "gamma1": s.gamma1,
            "n": s.n,
            "zero_rate": s.zero_rate,
            "alpha": s.alpha,
            "replications": s.replications,
            "scenario_index": s.index,
            "base_seed": self.base_seed,
            "generator": s.generator.to_dict(),
            "replications_completed": self.replications_completed,
            "empirical_zero_fraction": self.zero_fraction,
            "rejection_rate": self.rejection_rates,
            "rejections": dict(self.rejections),
            "failures": dict(self.failures),
            "flagged_tests": self.flagged_tests,
        }


def _grid_order(conditions=None, ns=None, zero_rates=None, beta1_values=None):
    conds = sorted(CONDITIONS) if conditions is None else sorted(set(conditions), key=list(CONDITIONS).index)
    for cond in conds:
        if cond not in CONDITIONS:
            raise ValueError(f"unknown condition {cond!r}; expected one of {', '.join(CONDITIONS)}")
        b1_values, g1 = CONDITIONS[cond]
        if beta1_values is not None:
            b1_values = tuple(b for b in b1_values if any(math.isclose(b, w, abs_tol=1e-12) for w in beta1_values))
        for b1, n, r in itertools.product(
            b1_values,
            TABLE_NS if ns is None else sorted(set(ns)),
            TABLE_ZERO_RATES if zero_rates is None else sorted(set(zero_rates)),
        ):
            yield cond, b1, g1, n, r


_FULL_GRID = {
    (c, b1, n, round(r, 10)): i for i, (c, b1, _, n, r) in enumerate(_grid_order())
}


def scenario_index(condition: str, beta1: float, n: int, zero_rate: float) -> int:
    """Stream id of a scenario.

    Cells of the default grid get their position in (condition, b1, n, zero
    rate) order, so partial runs reuse the streams of the full run. Other
    cells get a stable hash above 2**32.
    """
    key = (condition, float(beta1), int(n), round(float(zero_rate), 10))
    if key in _FULL_GRID:
        return _FULL_GRID[key]
    digest = hashlib.blake2b(repr(key).encode(), digest_size=8).digest()
    return (1 << 32) + int.from_bytes(digest, "little") % (1 << 62)


def build_grid(
    conditions: Iterable[str] | None = None,
    ns: Iterable[int] | None = None,
    zero_rates: Iterable[float] | None = None,
    rule: QuadratureRule | None = None,
    beta1_values: Iterable[float] | None = None,
    alpha: float = 0.05,
    replications: int = 1000,
    reference: str = "marginal",
) -> list[ScenarioConfig]:
    """Scenario configurations, each with a calibrated generator.

    ``None`` selects every value of the default grid; ``beta1_values``
    restricts conditions with several b1 values.

    Raises
    ------
    UnreachableZeroRate
        Re-raised with the offending cell in the message.
    """
    rule = rule or gauss_hermite()
    out = []
    for cond, b1, g1, n, r in _grid_order(conditions, ns, zero_rates,
                                          None if beta1_values is None else tuple(beta1_values)):
        try:
            gen = solve_gamma2(r, b1, g1, rule, reference)
        except UnreachableZeroRate as exc:
            raise UnreachableZeroRate(
                exc.target, exc.low, exc.high, cell=f"{cond} b1={b1:g} n={n} zero_rate={r:g}"
            ) from None
        out.append(ScenarioConfig(cond, b1, g1, int(n), float(r), gen, alpha, replications,
                                  scenario_index(cond, b1, n, r)))
    return out


def draw_rows(g: GeneratorParams, n: int, stream: RngStream):
    """Raw draws ``(treatment, covariate, structural, counts)`` for ``n`` rows.

    Draw order (fixed, it defines the stream contract): treatment for all
    rows, covariate for all rows, structural-zero flags, Poisson counts.
    """
    a = sample_bernoulli(stream, 0.5, n).astype(float)
    c = sample_std_normal(stream, n)
    pi = special.expit(g.gamma0 + g.gamma1 * a + g.gamma2 * c)
    mu = np.exp(g.beta0 + g.beta1 * a + g.beta2 * c)
    structural = sample_bernoulli(stream, pi)
    counts = sample_poisson(stream, mu)
    return a, c, structural, counts


def generate_dataset(s: ScenarioConfig, stream: RngStream) -> Dataset:
    """Draw ``s.n`` rows from the ZIP generator; the design is ``[1, A, C]``."""
    a, c, structural, counts = draw_rows(s.generator, s.n, stream)
    y = np.where(structural == 1, 0, counts)
    X = np.column_stack((np.ones(s.n), a, c))
    return Dataset(y, X, (INTERCEPT, TREATMENT, COVARIATE))


def _fit_once(kind, d, start=None):
    try:
        return fit_model(kind, d, start=start)
    except (ZicountError, FloatingPointError, np.linalg.LinAlgError):
        return None


def _fit_with_retry(kind, d, jitter: RngStream, usable_names):
    fit = _fit_once(kind, d)
    if fit is not None and all(fit.usable(n) for n in usable_names):
        return fit
    if kind in (ModelKind.LINEAR_RAW, ModelKind.LINEAR_LOG):
        return fit
    start = starting_values(kind, d)
    start = start * (1.0 + 0.1 * (2.0 * jitter.uniform(start.shape) - 1.0))
    retry = _fit_once(kind, d, start)
    return retry if retry is not None else fit


def run_replication(d: Dataset, alpha: float = 0.05, jitter: RngStream | None = None,
                    seeds: tuple[int, int, int] = (0, 0, 0)) -> ReplicationRecord:
    """Fit all models on ``d`` and test the treatment coefficient of each.

    A failed fit (exception, non-convergence, unusable covariance) marks only
    the tests that depend on it as ``FitFailed``.
    """
    jitter = jitter or RngStream(*seeds).child(1)
    treat = d.treatment_name
    needed: dict[ModelKind, list[str]] = {}
    for test in TEST_NAMES:
        kind, block = _TESTS[test]
        needed.setdefault(kind, []).append(treat if block == "count" else ZERO_PREFIX + treat)
    fits: dict[ModelKind, FitResult | None] = {}
    for tag, (kind, names) in enumerate(needed.items()):
        fits[kind] = _fit_with_retry(kind, d, jitter.child(tag), names)

    outcomes = {}
    for test in TEST_NAMES:
        kind, block = _TESTS[test]
        fit = fits[kind]
        name = treat if block == "count" else ZERO_PREFIX + treat
        if fit is None:
            outcomes[test] = Outcome.FIT_FAILED
            continue
        try:
            report = wald_test(fit, name, alpha)
        except ZicountError:
            outcomes[test] = Outcome.FIT_FAILED
            continue
        outcomes[test] = Outcome.REJECT if report.reject else Outcome.ACCEPT
    return ReplicationRecord(outcomes, seeds, int(d.is_zero.sum()))


def _replicate(s: ScenarioConfig, base_seed: int, rep: int) -> ReplicationRecord:
    stream = RngStream(base_seed, s.index, rep)
    d = generate_dataset(s, stream)
    return run_replication(d, s.alpha, stream.child(1), (base_seed, s.index, rep))


def _replicate_chunk(s: ScenarioConfig, base_seed: int, reps: Sequence[int]):
    return [_replicate(s, base_seed, r) for r in reps]


def _chunks(count, size):
    return [range(i, min(i + size, count)) for i in range(0, count, size)]


def run_grid(
    scenarios: Sequence[ScenarioConfig],
    base_seed: int,
    workers: int = 1,
    progress: Callable[[int, int, ScenarioResult], None] | None = None,
    chunk_size: int = 50,
) -> list[ScenarioResult]:
    """Run several scenarios; the results do not depend on ``workers``."""
    results = [ScenarioResult(s, base_seed) for s in scenarios]
    if workers <= 1:
        for i, (s, res) in enumerate(zip(scenarios, results)):
            for rep in range(s.replications):
                res.add(_replicate(s, base_seed, rep), s.n)
            if progress:
                progress(i + 1, len(scenarios), res)
        return results

    tasks = [(i, chunk) for i, s in enumerate(scenarios) for chunk in _chunks(s.replications, chunk_size)]
    remaining = [len(_chunks(s.replications, chunk_size)) for s in scenarios]
    done = 0
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_replicate_chunk, scenarios[i], base_seed, chunk) for i, chunk in tasks]
        # consume in submission order so aggregation order is fixed
        for (i, _), fut in zip(tasks, futures):
            for record in fut.result():
                results[i].add(record, scenarios[i].n)
            remaining[i] -= 1
            if remaining[i] == 0:
                done += 1
                if progress:
                    progress(done, len(scenarios), results[i])
    return results


def run_scenario(s: ScenarioConfig, base_seed: int, workers: int = 1) -> ScenarioResult:
    """Run all replications of one scenario with streams ``(base_seed, s.index, rep)``."""
    return run_grid([s], base_seed, workers)[0]

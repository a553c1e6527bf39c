"""Named verification battery.

Each check exercises one exact identity of the flow and geometry stack on
seeded random data and reports a normalized residual against a fixed
threshold.  Trials are independent substreams of the seed, so a battery can
be fanned across processes and merged by trial index without changing the
outcome.  States whose spectrum is numerically degenerate are redrawn and
counted, never silently regularized.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import geometry, lattice, rng
from .core import commutator, frobenius_inner
from .integrate import IntegratorConfig, integrate, invariant_report

__all__ = [
    "CheckResult",
    "VerifyReport",
    "check_lax_generator",
    "check_projection_fixed_point",
    "check_chain_equality",
    "check_gradient_defining",
    "check_field_equivalence",
    "check_sign_calibration",
    "check_isospectral_drift",
    "run_verification",
]

_MAX_REDRAWS = 50

# Thresholds, one per check; residuals are normalized so these are flat.
THRESHOLD_LAX_GENERATOR = 1e-12
THRESHOLD_PROJECTION = 1e-11
THRESHOLD_CHAIN = 1e-12
THRESHOLD_GRADIENT = 1e-11
THRESHOLD_EQUIVALENCE = 1e-12
THRESHOLD_CALIBRATION = 1e-10
THRESHOLD_EIG_DRIFT = 1e-8
THRESHOLD_TRACE_DRIFT = 1e-9


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    threshold: float
    passed: bool
    trials: int
    redraws: int = 0
    detail: str = ""


@dataclass(frozen=True)
class VerifyReport:
    checks: tuple
    sigma: int
    discrepancy: dict

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def redraws(self) -> int:
        return sum(c.redraws for c in self.checks)


def _draw_state(seed: int, *idx: int) -> lattice.LatticeState:
    stream = rng.SplitMix64(rng.substream_seed(seed, *idx))
    n = idx[1]
    return lattice.LatticeState(rng.random_state(n, stream))


def _draw_context(seed: int, check_id: int, n: int, trial: int):
    """State plus orbit context, redrawing on a numerically degenerate spectrum."""
    for attempt in range(_MAX_REDRAWS):
        stream = rng.SplitMix64(rng.substream_seed(seed, check_id, n, trial, attempt))
        s = lattice.LatticeState(rng.random_state(n, stream))
        try:
            ctx = geometry.orbit_context(lattice.lax_from_state(s))
        except geometry.DegenerateSpectrumError:
            continue
        return s, ctx, stream, attempt
    raise geometry.DegenerateSpectrumError(
        f"no workable spectrum in {_MAX_REDRAWS} draws (n = {n}, trial = {trial})"
    )


def _trial_lax_generator(seed: int, n: int, trial: int):
    stream = rng.SplitMix64(rng.substream_seed(seed, 1, n, trial))
    s = lattice.LatticeState(rng.random_state(n, stream))
    dense = lattice.lax_from_state(s).densify()
    bracket = commutator(dense @ dense, lattice.build_K(n + 1))
    delta = float(np.abs(lattice.build_A(s) - bracket).max())
    scale = 1.0 + float(np.linalg.norm(dense)) ** 2
    return delta / scale, 0


def _trial_projection(seed: int, n: int, trial: int):
    s, ctx, _, redraws = _draw_context(seed, 2, n, trial)
    g = commutator(ctx.dense @ ctx.dense, lattice.build_K(n + 1))
    proj = geometry.centralizer_project(ctx, g)
    residual = float(np.linalg.norm(proj - g)) / (1.0 + float(np.linalg.norm(g)))
    return residual, redraws


def _trial_chain(seed: int, n: int, trial: int):
    stream = rng.SplitMix64(rng.substream_seed(seed, 3, n, trial))
    s = lattice.LatticeState(rng.random_state(n, stream))
    dense = lattice.lax_from_state(s).densify()
    t = rng.uniform_matrix(n + 1, stream)
    k = lattice.build_K(n + 1)
    sq = dense @ dense
    v = commutator(dense, t)
    e1 = frobenius_inner(k, dense @ v + v @ dense)
    e2 = frobenius_inner(k, commutator(sq, t))
    e3 = frobenius_inner(commutator(sq, k), t)
    scale = 1.0 + max(abs(e1), abs(e2), abs(e3))
    residual = max(abs(e1 - e2), abs(e2 - e3), abs(e1 - e3)) / scale
    return residual, 0


def _trial_gradient(seed: int, n: int, trial: int, directions: int = 100):
    s, ctx, stream, redraws = _draw_context(seed, 4, n, trial)
    grad = geometry.orbit_gradient(ctx)
    g = commutator(ctx.dense @ ctx.dense, lattice.build_K(n + 1))
    g_norm = float(np.linalg.norm(g))
    worst = 0.0
    for _ in range(directions):
        t = rng.uniform_matrix(n + 1, stream)
        v = geometry.TangentVector(ctx.base, commutator(ctx.dense, t))
        dd = geometry.directional_derivative(ctx.base, t)
        nm = geometry.normal_metric(ctx, grad, v)
        scale = 1.0 + abs(dd) + g_norm * float(np.linalg.norm(t))
        worst = max(worst, abs(dd - nm) / scale)
    return worst, redraws


def _trial_equivalence(seed: int, n: int, trial: int):
    stream = rng.SplitMix64(rng.substream_seed(seed, 5, n, trial))
    s = lattice.LatticeState(rng.random_state(n, stream))
    reference = lattice.volterra_rhs(s)
    scale = 1.0 + float(np.abs(reference).max())
    worst = 0.0
    for form in ("lax", "bracket"):
        out = lattice.pushforward_rhs(s, form, lattice.CALIBRATED_SIGN)
        worst = max(worst, float(np.abs(out - reference).max()) / scale)
    return worst, 0


_TRIAL_FUNCTIONS = {
    1: _trial_lax_generator,
    2: _trial_projection,
    3: _trial_chain,
    4: _trial_gradient,
    5: _trial_equivalence,
}


def _run_one(task):
    check_id, seed, n, trial = task
    return _TRIAL_FUNCTIONS[check_id](seed, n, trial)


def _sweep(check_id: int, n_list, trials: int, seed: int, jobs: int = 1):
    """Worst residual over the (n, trial) grid; deterministic for any jobs."""
    tasks = [(check_id, seed, n, t) for n in n_list for t in range(trials)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks, chunksize=16))
    else:
        results = [_run_one(task) for task in tasks]
    worst = max(r[0] for r in results)
    redraws = sum(r[1] for r in results)
    return worst, redraws, len(tasks)


def check_lax_generator(n_list, trials: int, seed: int, jobs: int = 1) -> CheckResult:
    """The Lax generator equals the bracket [L^2, K], entry for entry."""
    worst, redraws, count = _sweep(1, n_list, trials, seed, jobs)
    return CheckResult(
        name="lax-generator-equals-bracket",
        residual=worst,
        threshold=THRESHOLD_LAX_GENERATOR,
        passed=worst <= THRESHOLD_LAX_GENERATOR,
        trials=count,
        redraws=redraws,
        detail="max |A - [L^2, K]| / (1 + ||L||^2)",
    )


def check_projection_fixed_point(n_list, trials: int, seed: int, jobs: int = 1) -> CheckResult:
    """[L^2, K] is already centralizer-free, so the projection fixes it."""
    worst, redraws, count = _sweep(2, n_list, trials, seed, jobs)
    return CheckResult(
        name="projection-fixed-point",
        residual=worst,
        threshold=THRESHOLD_PROJECTION,
        passed=worst <= THRESHOLD_PROJECTION,
        trials=count,
        redraws=redraws,
        detail="||P(G) - G|| / (1 + ||G||)",
    )


def check_chain_equality(n_list, trials: int, seed: int, jobs: int = 1) -> CheckResult:
    """Three trace forms of the directional derivative are one number."""
    worst, redraws, count = _sweep(3, n_list, trials, seed, jobs)
    return CheckResult(
        name="derivative-chain-equality",
        residual=worst,
        threshold=THRESHOLD_CHAIN,
        passed=worst <= THRESHOLD_CHAIN,
        trials=count,
        redraws=redraws,
        detail="product rule vs bracket vs adjoint form",
    )


def check_gradient_defining(
    n_list, trials: int, seed: int, jobs: int = 1
) -> CheckResult:
    """df([L, T]) equals the metric pairing of the gradient with [L, T]."""
    worst, redraws, count = _sweep(4, n_list, trials, seed, jobs)
    return CheckResult(
        name="gradient-defining-equation",
        residual=worst,
        threshold=THRESHOLD_GRADIENT,
        passed=worst <= THRESHOLD_GRADIENT,
        trials=count,
        redraws=redraws,
        detail="100 directions per state",
    )


def check_field_equivalence(n_list, trials: int, seed: int, jobs: int = 1) -> CheckResult:
    """All three right-hand sides produce the same du/dt at the calibrated sign."""
    worst, redraws, count = _sweep(5, n_list, trials, seed, jobs)
    return CheckResult(
        name="field-equivalence",
        residual=worst,
        threshold=THRESHOLD_EQUIVALENCE,
        passed=worst <= THRESHOLD_EQUIVALENCE,
        trials=count,
        redraws=redraws,
        detail="lax and bracket vs direct, relative",
    )


def check_sign_calibration(seed: int) -> CheckResult:
    """The calibrated orientation is reproducible and decisive."""
    cal = lattice.calibrate_sign()
    best = cal.discrepancy[cal.sigma]
    other = cal.discrepancy[-cal.sigma]
    stable = cal.sigma == lattice.CALIBRATED_SIGN
    for i, n in enumerate((2, 3, 5)):
        stream = rng.SplitMix64(rng.substream_seed(seed, 6, n, i))
        s = lattice.LatticeState(rng.random_state(n, stream))
        stable = stable and lattice.calibrate_sign(s).sigma == lattice.CALIBRATED_SIGN
    passed = stable and best <= THRESHOLD_CALIBRATION and other > 1e-3
    return CheckResult(
        name="sign-calibration",
        residual=best,
        threshold=THRESHOLD_CALIBRATION,
        passed=passed,
        trials=4,
        detail=f"sigma* = {cal.sigma:+d}, rejected sign deviates by {other:.3g}",
    )


def check_isospectral_drift(n_list, seed: int) -> CheckResult:
    """A short adaptive integration conserves the spectrum and trace powers."""
    n = max(n_list)
    stream = rng.SplitMix64(rng.substream_seed(seed, 7, n, 0))
    s = lattice.LatticeState(rng.random_state(n, stream))
    config = IntegratorConfig(
        method="adaptive45", form="direct", t0=0.0, t1=1.0, h0=1e-3,
        tol_abs=1e-10, tol_rel=1e-10, record_every=5,
    )
    summary = invariant_report(integrate(config, s))
    trace_worst = max(summary.trace_drift.values())
    passed = (
        summary.max_eigenvalue_drift <= THRESHOLD_EIG_DRIFT
        and trace_worst <= THRESHOLD_TRACE_DRIFT
    )
    return CheckResult(
        name="isospectral-drift",
        residual=summary.max_eigenvalue_drift,
        threshold=THRESHOLD_EIG_DRIFT,
        passed=passed,
        trials=1,
        detail=f"n = {n}, t in [0, 1]; trace drift {trace_worst:.3g} vs {THRESHOLD_TRACE_DRIFT:.0e}",
    )


def run_verification(n_list, trials: int, seed: int, jobs: int = 1) -> VerifyReport:
    """Run the full battery and assemble the report."""
    n_list = tuple(int(n) for n in n_list)
    if not n_list or min(n_list) < 1:
        raise ValueError("n_list must contain positive site counts")
    if trials < 1:
        raise ValueError("need at least one trial")
    checks = (
        check_lax_generator(n_list, trials, seed, jobs),
        check_projection_fixed_point(n_list, trials, seed, jobs),
        check_chain_equality(n_list, trials, seed, jobs),
        check_gradient_defining(n_list, min(trials, 5), seed, jobs),
        check_field_equivalence(n_list, trials, seed, jobs),
        check_sign_calibration(seed),
        check_isospectral_drift(n_list, seed),
    )
    cal = lattice.calibrate_sign()
    return VerifyReport(checks=checks, sigma=cal.sigma, discrepancy=dict(cal.discrepancy))

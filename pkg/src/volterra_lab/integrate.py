"""Time integration with invariant monitoring.

Two steppers: classical fourth-order Runge-Kutta with a fixed step, and the
Dormand-Prince embedded 4(5) pair with proportional step control.  The
integrator always advances the site variables u; for the matrix forms the
right-hand side is pushed forward to u-space, which keeps every form on the
same state representation and makes the trajectories directly comparable.

Positivity of u is an invariant of the exact flow, so a step that leaves the
positive cone is numerical damage: the adaptive loop rejects it and halves
the step, the fixed-step loop aborts with a diagnostic.

At sampling times the trajectory record stores the objective value, the
spectrum of the Lax form, and tr L^k for k = 2, 3, 4, which are conserved
by the exact flow and serve as accuracy meters for the discrete one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import symmetric_eigen, trace_power
from .lattice import (
    CALIBRATED_SIGN,
    FORMS,
    LatticeState,
    _volterra_raw,
    lax_from_state,
    objective_f,
    pushforward_rhs,
)

__all__ = [
    "FieldDomainError",
    "IntegrationError",
    "IntegratorConfig",
    "InvariantSummary",
    "PositivityAbortError",
    "PropagationError",
    "StepAttempt",
    "StepUnderflowError",
    "TRACE_POWERS",
    "TrajectoryRecord",
    "adaptive45_step",
    "format_invariant_summary",
    "integrate",
    "invariant_report",
    "rk4_step",
]

TRACE_POWERS = (2, 3, 4)

# Controller constants for the embedded pair: safety factor and the growth
# and shrink clamps on the step ratio.
_SAFETY = 0.9
_SHRINK_MIN = 0.2
_GROW_MAX = 5.0

# A step below this fraction of the requested span means the problem has
# effectively stalled.
_UNDERFLOW_FRACTION = 1e-14

# Slack for counting monotonicity violations of f, relative to 1 + |f(t0)|.
# On a converged plateau the sampled f wiggles at the integrator's local
# error scale (about 1e-10 at the default adaptive tolerances), so the
# threshold sits a decade above that; a genuine sign error drives f at the
# descent rate itself, orders of magnitude beyond this slack.
_MONOTONE_SLACK = 1e-9


class IntegrationError(RuntimeError):
    """Base class for integration failures."""


class StepUnderflowError(IntegrationError):
    """Step control drove h below the resolvable fraction of the span."""


class PositivityAbortError(IntegrationError):
    """A fixed-step method produced or required a nonpositive site variable."""


class PropagationError(IntegrationError):
    """A right-hand side evaluation returned a non-finite derivative."""


class FieldDomainError(IntegrationError):
    """A stage left the state domain while the positivity guard was off."""


class _StageDomainError(IntegrationError):
    # Internal: a stage state failed validation; policy is decided by the loop.
    pass


@dataclass(frozen=True)
class IntegratorConfig:
    """Integration request: scheme, form, window, steps, tolerances, sampling."""

    method: str = "rk4"
    form: str = "direct"
    sigma: int = CALIBRATED_SIGN
    t0: float = 0.0
    t1: float = 1.0
    h0: float = 1e-3
    tol_abs: float = 1e-10
    tol_rel: float = 1e-10
    record_every: int = 1
    guard_positivity: bool = True

    def __post_init__(self):
        if self.method not in ("rk4", "adaptive45"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.form not in FORMS:
            raise ValueError(f"unknown form {self.form!r}, expected one of {FORMS}")
        if self.sigma not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sigma!r}")
        if not (self.t1 > self.t0):
            raise ValueError("need t1 > t0")
        if not (self.h0 > 0.0):
            raise ValueError("need h0 > 0")
        if not (self.tol_abs > 0.0 and self.tol_rel > 0.0):
            raise ValueError("tolerances must be positive")
        if not isinstance(self.record_every, (int, np.integer)) or self.record_every < 1:
            raise ValueError("record_every must be a positive integer")


@dataclass(frozen=True)
class TrajectoryRecord:
    """Sampled trajectory with invariant data at each sample."""

    config: IntegratorConfig
    times: np.ndarray
    states: np.ndarray
    f_values: np.ndarray
    spectra: np.ndarray
    traces: np.ndarray
    accepted_steps: int
    rejected_steps: int

    @property
    def n_samples(self) -> int:
        return self.times.size


@dataclass(frozen=True)
class StepAttempt:
    """One embedded-pair attempt: proposed state, next step, verdict."""

    state: LatticeState
    h_next: float
    accepted: bool
    err_est: float


def _wrap_state_field(field):
    def raw(u):
        try:
            s = LatticeState(u)
        except ValueError as exc:
            raise _StageDomainError(str(exc)) from exc
        d = np.asarray(field(s), dtype=float)
        if not np.isfinite(d).all():
            raise PropagationError("right-hand side returned a non-finite derivative")
        return d

    return raw


def _rk4_raw(f, u, h):
    k1 = f(u)
    k2 = f(u + 0.5 * h * k1)
    k3 = f(u + 0.5 * h * k2)
    k4 = f(u + h * k3)
    return u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(field, s: LatticeState, h: float) -> LatticeState:
    """One classical fourth-order step of size h.

    ``field`` maps a LatticeState to the derivative of u.  Stage states are
    validated, so a stage that leaves the domain raises PositivityAbortError,
    and a non-finite derivative raises PropagationError.
    """
    if not (h > 0.0):
        raise ValueError("need h > 0")
    try:
        return LatticeState(_rk4_raw(_wrap_state_field(field), s.u, h))
    except _StageDomainError as exc:
        raise PositivityAbortError(
            f"stage left the state domain with h = {h:.3g}: {exc}"
        ) from exc


# Dormand-Prince 5(4) tableau.  The first row of b is the fifth-order
# solution (equal to the seventh stage row of a), the e row is b minus the
# embedded fourth-order weights and multiplies into the error estimate.
_DP_C = (1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0)
_DP_A21 = 1.0 / 5.0
_DP_A31, _DP_A32 = 3.0 / 40.0, 9.0 / 40.0
_DP_A41, _DP_A42, _DP_A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_DP_A51, _DP_A52, _DP_A53, _DP_A54 = (
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
)
_DP_A61, _DP_A62, _DP_A63, _DP_A64, _DP_A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_DP_B1, _DP_B3, _DP_B4, _DP_B5, _DP_B6 = (
    35.0 / 384.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
)
_DP_E1, _DP_E3, _DP_E4, _DP_E5, _DP_E6, _DP_E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)


def _dopri_raw(f, u, h):
    k1 = f(u)
    k2 = f(u + h * (_DP_A21 * k1))
    k3 = f(u + h * (_DP_A31 * k1 + _DP_A32 * k2))
    k4 = f(u + h * (_DP_A41 * k1 + _DP_A42 * k2 + _DP_A43 * k3))
    k5 = f(u + h * (_DP_A51 * k1 + _DP_A52 * k2 + _DP_A53 * k3 + _DP_A54 * k4))
    k6 = f(
        u
        + h * (_DP_A61 * k1 + _DP_A62 * k2 + _DP_A63 * k3 + _DP_A64 * k4 + _DP_A65 * k5)
    )
    u5 = u + h * (_DP_B1 * k1 + _DP_B3 * k3 + _DP_B4 * k4 + _DP_B5 * k5 + _DP_B6 * k6)
    k7 = f(u5)
    err = h * (
        _DP_E1 * k1
        + _DP_E3 * k3
        + _DP_E4 * k4
        + _DP_E5 * k5
        + _DP_E6 * k6
        + _DP_E7 * k7
    )
    return u5, err


def _controller_factor(err_est: float) -> float:
    if err_est == 0.0:
        return _GROW_MAX
    return min(_GROW_MAX, max(_SHRINK_MIN, _SAFETY * err_est ** -0.2))


def adaptive45_step(
    field, s: LatticeState, h: float, tol_abs: float, tol_rel: float
) -> StepAttempt:
    """One Dormand-Prince 4(5) attempt of size h.

    The error estimate is the max norm of the difference between the orders,
    scaled entrywise by tol_abs + tol_rel * |u|; the step is accepted when
    the scaled estimate is at most one, and the fifth-order solution is the
    one propagated.  The recommended next step applies the standard
    proportional rule with safety 0.9 clamped to [0.2 h, 5 h].  On rejection
    the incoming state is returned unchanged; a stage that leaves the state
    domain counts as a rejection at half the step.
    """
    if not (h > 0.0):
        raise ValueError("need h > 0")
    if not (tol_abs > 0.0 and tol_rel > 0.0):
        raise ValueError("tolerances must be positive")
    try:
        u5, err_vec = _dopri_raw(_wrap_state_field(field), s.u, h)
    except _StageDomainError:
        return StepAttempt(state=s, h_next=0.5 * h, accepted=False, err_est=float("inf"))
    scale = tol_abs + tol_rel * np.abs(s.u)
    err_est = float(np.max(np.abs(err_vec) / scale))
    accepted = err_est <= 1.0
    h_next = h * _controller_factor(err_est)
    state = LatticeState(u5) if accepted else s
    return StepAttempt(state=state, h_next=h_next, accepted=accepted, err_est=err_est)


def _raw_field(config: IntegratorConfig):
    if config.form == "direct":
        return _volterra_raw

    def field(u):
        try:
            s = LatticeState(u)
        except ValueError as exc:
            raise _StageDomainError(str(exc)) from exc
        return pushforward_rhs(s, config.form, config.sigma)

    return field


def integrate(config: IntegratorConfig, s0: LatticeState) -> TrajectoryRecord:
    """Integrate from s0 over [t0, t1], sampling every record_every accepted steps.

    Endpoints are always sampled.  See the module docstring for the
    positivity policy; step-size underflow raises StepUnderflowError.
    """
    field = _raw_field(config)
    span = config.t1 - config.t0
    eps_t = 1e-12 * span
    guard = config.guard_positivity

    times: list[float] = []
    states: list[np.ndarray] = []
    f_values: list[float] = []
    spectra: list[np.ndarray] = []
    traces: list[tuple[float, ...]] = []

    def take_sample(t: float, u: np.ndarray):
        try:
            s = LatticeState(u)
        except ValueError as exc:
            raise FieldDomainError(
                f"cannot sample outside the state domain at t = {t:.6g}: {exc}"
            ) from exc
        L = lax_from_state(s)
        dense = L.densify()
        times.append(t)
        states.append(u.copy())
        f_values.append(objective_f(L))
        spectra.append(symmetric_eigen(dense).eigenvalues)
        traces.append(tuple(trace_power(dense, k) for k in TRACE_POWERS))

    t = config.t0
    u = np.array(s0.u, dtype=float)
    take_sample(t, u)
    accepted = 0
    rejected = 0
    since_sample = 0

    def advance(t_now: float, h_step: float) -> float:
        t_next = t_now + h_step
        if config.t1 - t_next <= eps_t:
            return config.t1
        return t_next

    if config.method == "rk4":
        while config.t1 - t > eps_t:
            h = min(config.h0, config.t1 - t)
            try:
                u_new = _rk4_raw(field, u, h)
            except _StageDomainError as exc:
                raise PositivityAbortError(
                    f"stage left the state domain at t = {t:.6g} with h = {h:.3g}: {exc}"
                ) from exc
            if not np.isfinite(u_new).all():
                raise PropagationError(f"non-finite state produced at t = {t:.6g}")
            if guard and not (u_new > 0.0).all():
                bad = int(np.argmin(u_new))
                raise PositivityAbortError(
                    f"site u_{bad + 1} = {u_new[bad]:.3g} at t = {t + h:.6g}; "
                    f"reduce h0 or use the adaptive method"
                )
            t = advance(t, h)
            u = u_new
            accepted += 1
            since_sample += 1
            if since_sample == config.record_every and config.t1 - t > eps_t:
                take_sample(t, u)
                since_sample = 0
    else:
        h = min(config.h0, span)
        while config.t1 - t > eps_t:
            if h < _UNDERFLOW_FRACTION * span:
                raise StepUnderflowError(
                    f"step size {h:.3g} underflowed at t = {t:.6g}; "
                    f"the problem is stiffer than the tolerances allow"
                )
            h_try = min(h, config.t1 - t)
            try:
                u5, err_vec = _dopri_raw(field, u, h_try)
            except _StageDomainError as exc:
                if not guard:
                    raise FieldDomainError(
                        f"stage left the state domain at t = {t:.6g}: {exc}"
                    ) from exc
                rejected += 1
                h = 0.5 * h_try
                continue
            scale = config.tol_abs + config.tol_rel * np.abs(u)
            with np.errstate(invalid="ignore", over="ignore"):
                err_est = float(np.max(np.abs(err_vec) / scale))
            if not (np.isfinite(err_est) and np.isfinite(u5).all()):
                rejected += 1
                h = _SHRINK_MIN * h_try
                continue
            if err_est <= 1.0:
                if not (u5 > 0.0).all():
                    if not guard:
                        raise FieldDomainError(
                            f"state left the positive cone at t = {t:.6g}; "
                            f"enable guard_positivity"
                        )
                    rejected += 1
                    h = 0.5 * h_try
                    continue
                t = advance(t, h_try)
                u = u5
                accepted += 1
                since_sample += 1
                if since_sample == config.record_every and config.t1 - t > eps_t:
                    take_sample(t, u)
                    since_sample = 0
                h = h_try * _controller_factor(err_est)
            else:
                rejected += 1
                h = h_try * _controller_factor(err_est)

    take_sample(config.t1, u)

    return TrajectoryRecord(
        config=config,
        times=np.array(times),
        states=np.array(states),
        f_values=np.array(f_values),
        spectra=np.array(spectra),
        traces=np.array(traces),
        accepted_steps=accepted,
        rejected_steps=rejected,
    )


@dataclass(frozen=True)
class InvariantSummary:
    """Drift of conserved quantities and the monotonicity count of f."""

    eigenvalue_drift: np.ndarray
    max_eigenvalue_drift: float
    trace_drift: dict
    f_initial: float
    f_final: float
    f_violations: int
    descent_expected: bool


def invariant_report(record: TrajectoryRecord) -> InvariantSummary:
    """Summarize conservation along a trajectory.

    Eigenvalues are matched by sorted order against the first sample.  The
    violation count compares consecutive f samples against the monotone
    direction the form and sign imply (the direct flow descends; a matrix
    form descends when its sign matches CALIBRATED_SIGN), with slack
    1e-12 * (1 + |f(t0)|) for roundoff on plateaus.
    """
    drift = np.abs(record.spectra - record.spectra[0]).max(axis=0)
    trace_drift = {
        k: float(np.abs(record.traces[:, i] - record.traces[0, i]).max())
        for i, k in enumerate(TRACE_POWERS)
    }
    f = record.f_values
    slack = _MONOTONE_SLACK * (1.0 + abs(float(f[0])))
    cfg = record.config
    descent = cfg.form == "direct" or cfg.sigma == CALIBRATED_SIGN
    deltas = np.diff(f)
    if descent:
        violations = int(np.sum(deltas > slack))
    else:
        violations = int(np.sum(deltas < -slack))
    return InvariantSummary(
        eigenvalue_drift=drift,
        max_eigenvalue_drift=float(drift.max()),
        trace_drift=trace_drift,
        f_initial=float(f[0]),
        f_final=float(f[-1]),
        f_violations=violations,
        descent_expected=descent,
    )


def format_invariant_summary(summary: InvariantSummary, record: TrajectoryRecord) -> str:
    direction = "nonincreasing" if summary.descent_expected else "nondecreasing"
    lines = [
        f"samples = {record.n_samples}, steps accepted = {record.accepted_steps}, "
        f"rejected = {record.rejected_steps}",
        f"max eigenvalue drift = {summary.max_eigenvalue_drift:.3e}",
        "trace drift: "
        + ", ".join(f"tr L^{k} {summary.trace_drift[k]:.3e}" for k in TRACE_POWERS),
        f"f: {summary.f_initial:.17g} -> {summary.f_final:.17g} "
        f"({direction}, violations = {summary.f_violations})",
    ]
    return "\n".join(lines)

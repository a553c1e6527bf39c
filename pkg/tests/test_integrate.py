import numpy as np
import numpy.testing as npt
import pytest

import importlib

# the package re-exports the integrate() function over the submodule name,
# so fetch the module itself for monkeypatching and attribute access
itg = importlib.import_module("volterra_lab.integrate")
from volterra_lab import lattice
from volterra_lab.lattice import CALIBRATED_SIGN, LatticeState, volterra_rhs
from volterra_lab.rng import SplitMix64, random_state, substream_seed


def _state(*u):
    return LatticeState(np.array(u, dtype=float))


def test_config_validation():
    with pytest.raises(ValueError):
        itg.IntegratorConfig(method="euler")
    with pytest.raises(ValueError):
        itg.IntegratorConfig(form="matrix")
    with pytest.raises(ValueError):
        itg.IntegratorConfig(sigma=0)
    with pytest.raises(ValueError):
        itg.IntegratorConfig(t0=1.0, t1=1.0)
    with pytest.raises(ValueError):
        itg.IntegratorConfig(h0=0.0)
    with pytest.raises(ValueError):
        itg.IntegratorConfig(tol_abs=0.0)
    with pytest.raises(ValueError):
        itg.IntegratorConfig(record_every=0)


def test_rk4_step_fixed_point_is_exact():
    s = _state(5.0)
    out = itg.rk4_step(volterra_rhs, s, 0.25)
    npt.assert_array_equal(out.u, [5.0])


def test_rk4_step_linear_field_value():
    # du/dt = u from u = 1: one step of h = 0.1 gives the quartic Taylor sum
    out = itg.rk4_step(lambda s: s.u, _state(1.0), 0.1)
    expect = 1.0 + 0.1 + 0.1**2 / 2.0 + 0.1**3 / 6.0 + 0.1**4 / 24.0
    assert out.u[0] == pytest.approx(expect, rel=1e-15)


def test_rk4_step_validation_and_errors():
    s = _state(1.0)
    with pytest.raises(ValueError):
        itg.rk4_step(volterra_rhs, s, 0.0)
    with pytest.raises(itg.PropagationError):
        itg.rk4_step(lambda st: np.array([np.nan]), s, 0.1)
    # strong decay drives a stage negative at this step size
    with pytest.raises(itg.PositivityAbortError):
        itg.rk4_step(lambda st: -100.0 * st.u, s, 0.1)


def test_adaptive_step_fixed_point():
    s = _state(5.0)
    att = itg.adaptive45_step(volterra_rhs, s, 0.3, 1e-10, 1e-10)
    assert att.accepted
    assert att.err_est == 0.0
    assert att.h_next == pytest.approx(5.0 * 0.3)
    npt.assert_array_equal(att.state.u, [5.0])


def test_adaptive_step_rejects_at_tight_tolerance():
    s = _state(1.0, 2.0)
    att = itg.adaptive45_step(volterra_rhs, s, 0.5, 1e-16, 1e-16)
    assert not att.accepted
    assert att.err_est > 1.0
    assert att.state is s
    assert att.h_next == pytest.approx(0.1)  # shrink clamp 0.2 h


def test_adaptive_step_stage_domain_counts_as_rejection():
    att = itg.adaptive45_step(
        lambda st: -100.0 * st.u, _state(1.0), 0.5, 1e-8, 1e-8
    )
    assert not att.accepted
    assert att.err_est == np.inf
    assert att.h_next == pytest.approx(0.25)


def test_integrate_fixed_point_conserves_everything():
    cfg = itg.IntegratorConfig(method="rk4", t1=10.0, h0=0.1, record_every=10)
    rec = itg.integrate(cfg, _state(5.0))
    assert np.all(rec.states == 5.0)
    summary = itg.invariant_report(rec)
    assert summary.max_eigenvalue_drift == 0.0
    assert summary.f_violations == 0
    assert summary.f_initial == summary.f_final


def test_integrate_sampling_stride_and_endpoints():
    cfg = itg.IntegratorConfig(method="rk4", t1=1.0, h0=0.1, record_every=3)
    rec = itg.integrate(cfg, _state(1.0, 2.0))
    assert rec.accepted_steps == 10
    assert rec.n_samples == 5  # t0, then steps 3, 6, 9, then t1
    assert rec.times[0] == 0.0
    assert rec.times[-1] == 1.0
    assert np.all(np.diff(rec.times) > 0.0)
    assert rec.states.shape == (5, 2)
    assert rec.spectra.shape == (5, 3)
    assert rec.traces.shape == (5, 3)


def test_integrate_partial_final_step():
    cfg = itg.IntegratorConfig(method="rk4", t1=1.0, h0=0.4)
    rec = itg.integrate(cfg, _state(1.0))
    assert rec.accepted_steps == 3  # 0.4 + 0.4 + 0.2
    assert rec.times[-1] == 1.0


def test_integrate_matches_across_methods():
    s0 = _state(1.0, 1.0)
    ref = itg.integrate(
        itg.IntegratorConfig(method="rk4", t1=5.0, h0=1e-4, record_every=10**9), s0
    )
    ada = itg.integrate(
        itg.IntegratorConfig(
            method="adaptive45", t1=5.0, h0=1e-2, tol_abs=1e-10, tol_rel=1e-10,
            record_every=10**9,
        ),
        s0,
    )
    assert np.abs(ada.states[-1] - ref.states[-1]).max() <= 1e-8
    assert ada.accepted_steps < ref.accepted_steps / 50


def test_adaptive_tolerance_controls_error():
    # tighter tolerances give smaller final-state error and more steps
    s0 = _state(1.0, 2.0)
    ref = itg.integrate(
        itg.IntegratorConfig(method="rk4", t1=2.0, h0=1e-5, record_every=10**9), s0
    )
    errs = []
    steps = []
    for tol in (1e-6, 1e-8, 1e-10):
        rec = itg.integrate(
            itg.IntegratorConfig(
                method="adaptive45", t1=2.0, h0=1e-2, tol_abs=tol, tol_rel=tol,
                record_every=10**9,
            ),
            s0,
        )
        errs.append(np.abs(rec.states[-1] - ref.states[-1]).max())
        steps.append(rec.accepted_steps)
    assert errs[0] > errs[2]
    assert steps[0] < steps[1] < steps[2]
    assert errs[2] <= 1e-8


def test_integrate_relaxes_to_boundary_equilibrium():
    # two sites drain into the far end: u -> (2, 0) and f -> 1.5
    rec = itg.integrate(
        itg.IntegratorConfig(
            method="adaptive45", t1=40.0, h0=1e-2, tol_abs=1e-12, tol_rel=1e-12,
            record_every=10**9,
        ),
        _state(1.0, 1.0),
    )
    npt.assert_allclose(rec.states[-1], [2.0, 0.0], rtol=0, atol=1e-8)
    assert rec.f_values[-1] == pytest.approx(1.5, abs=1e-8)
    summary = itg.invariant_report(rec)
    assert summary.f_violations == 0


def test_fixed_step_positivity_abort_direct():
    # the half-step stage overshoots and the combined step leaves the cone
    cfg = itg.IntegratorConfig(method="rk4", t1=2.0, h0=0.5)
    with pytest.raises(itg.PositivityAbortError):
        itg.integrate(cfg, _state(10.0, 1.0))


def test_fixed_step_positivity_abort_matrix_form():
    # matrix forms validate stage states, so the abort comes from a stage
    cfg = itg.IntegratorConfig(method="rk4", form="lax", t1=2.0, h0=0.5)
    with pytest.raises(itg.PositivityAbortError):
        itg.integrate(cfg, _state(10.0, 1.0))


def test_adaptive_guard_rejects_and_recovers():
    cfg = itg.IntegratorConfig(
        method="adaptive45", form="lax", t1=1.0, h0=0.5, tol_abs=1e-10, tol_rel=1e-10
    )
    rec = itg.integrate(cfg, _state(10.0, 1e-6))
    assert rec.rejected_steps >= 1
    assert rec.times[-1] == 1.0
    ref = itg.integrate(
        itg.IntegratorConfig(
            method="adaptive45", t1=1.0, h0=0.01, tol_abs=1e-10, tol_rel=1e-10
        ),
        _state(10.0, 1e-6),
    )
    npt.assert_allclose(rec.states[-1], ref.states[-1], rtol=0, atol=1e-8)


def test_adaptive_guard_off_raises_domain_error():
    cfg = itg.IntegratorConfig(
        method="adaptive45", form="lax", t1=1.0, h0=0.5,
        tol_abs=1e-10, tol_rel=1e-10, guard_positivity=False,
    )
    with pytest.raises(itg.FieldDomainError):
        itg.integrate(cfg, _state(10.0, 1e-6))


def test_step_underflow_from_hopeless_tolerance(monkeypatch):
    bad = lambda u: np.full_like(u, np.nan)
    monkeypatch.setattr(itg, "_volterra_raw", bad)
    cfg = itg.IntegratorConfig(method="adaptive45", t1=1.0, h0=1e-3)
    with pytest.raises(itg.StepUnderflowError):
        itg.integrate(cfg, _state(1.0, 1.0))


def test_invariant_report_conservation_on_flow():
    cfg = itg.IntegratorConfig(method="rk4", t1=5.0, h0=1e-3, record_every=100)
    rec = itg.integrate(cfg, _state(1.0, 1.0))
    summary = itg.invariant_report(rec)
    assert summary.descent_expected
    assert summary.max_eigenvalue_drift <= 1e-10
    assert all(summary.trace_drift[k] <= 1e-10 for k in itg.TRACE_POWERS)
    assert summary.f_violations == 0
    assert summary.f_final < summary.f_initial


def test_invariant_report_ascent_with_flipped_sign():
    cfg = itg.IntegratorConfig(
        method="rk4", form="lax", sigma=-CALIBRATED_SIGN, t1=1.0, h0=1e-3,
        record_every=100,
    )
    rec = itg.integrate(cfg, _state(1.0, 1.0))
    summary = itg.invariant_report(rec)
    assert not summary.descent_expected
    assert summary.f_violations == 0
    assert summary.f_final > summary.f_initial


def test_invariant_report_counts_violations():
    cfg = itg.IntegratorConfig()
    synthetic = itg.TrajectoryRecord(
        config=cfg,
        times=np.array([0.0, 0.5, 1.0]),
        states=np.ones((3, 2)),
        f_values=np.array([1.0, 1.1, 1.05]),
        spectra=np.zeros((3, 3)),
        traces=np.zeros((3, 3)),
        accepted_steps=2,
        rejected_steps=0,
    )
    summary = itg.invariant_report(synthetic)
    assert summary.f_violations == 1


def test_trace_samples_match_closed_forms():
    stream = SplitMix64(substream_seed(41, 0))
    s0 = LatticeState(random_state(6, stream))
    cfg = itg.IntegratorConfig(method="rk4", t1=1.0, h0=1e-3, record_every=200)
    rec = itg.integrate(cfg, s0)
    for row, u in zip(rec.traces, rec.states):
        tr2 = 2.0 * u.sum()
        tr4 = 2.0 * np.sum(u**2) + 4.0 * np.sum(u[:-1] * u[1:])
        assert row[0] == pytest.approx(tr2, rel=1e-12)
        assert abs(row[1]) <= 1e-13 * (1.0 + tr2) ** 1.5
        assert row[2] == pytest.approx(tr4, rel=1e-12)


def test_spectrum_samples_are_sign_symmetric():
    stream = SplitMix64(substream_seed(41, 1))
    s0 = LatticeState(random_state(5, stream))
    cfg = itg.IntegratorConfig(method="rk4", t1=1.0, h0=1e-3, record_every=250)
    rec = itg.integrate(cfg, s0)
    for lam in rec.spectra:
        assert np.abs(lam + lam[::-1]).max() <= 1e-10 * (1.0 + np.abs(lam).max())


def test_format_invariant_summary_mentions_the_numbers():
    cfg = itg.IntegratorConfig(method="rk4", t1=0.5, h0=1e-2, record_every=10)
    rec = itg.integrate(cfg, _state(1.0, 1.0))
    text = itg.format_invariant_summary(itg.invariant_report(rec), rec)
    assert "eigenvalue drift" in text
    assert "tr L^4" in text
    assert "violations = 0" in text

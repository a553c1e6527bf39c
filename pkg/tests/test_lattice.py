import math

import numpy as np
import numpy.testing as npt
import pytest

from volterra_lab import lattice
from volterra_lab.core import commutator, frobenius_inner
from volterra_lab.rng import SplitMix64, random_state, substream_seed


def test_state_validation():
    with pytest.raises(ValueError):
        lattice.LatticeState(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        lattice.LatticeState(np.array([1.0, -2.0]))
    with pytest.raises(ValueError):
        lattice.LatticeState(np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        lattice.LatticeState(np.array([[1.0, 2.0]]))
    with pytest.raises(ValueError):
        lattice.LatticeState(np.array([]))
    s = lattice.LatticeState(np.array([1.0, 2.0]))
    assert not s.u.flags.writeable
    assert s.n == 2


def test_lax_roundtrip_exact_perfect_squares():
    s = lattice.LatticeState(np.array([1.0, 4.0, 9.0]))
    lax = lattice.lax_from_state(s)
    npt.assert_array_equal(lax.c, [1.0, 2.0, 3.0])
    npt.assert_array_equal(lattice.state_from_lax(lax).u, s.u)


def test_lax_roundtrip_random():
    stream = SplitMix64(substream_seed(21, 0))
    for n in (1, 2, 5, 12):
        u = random_state(n, stream)
        s = lattice.LatticeState(u)
        back = lattice.state_from_lax(lattice.lax_from_state(s)).u
        npt.assert_allclose(back, u, rtol=1e-15, atol=0)


def test_lax_densify_structure():
    s = lattice.LatticeState(np.array([1.0, 4.0]))
    dense = lattice.lax_from_state(s).densify()
    expect = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 2.0], [0.0, 2.0, 0.0]])
    npt.assert_array_equal(dense, expect)
    assert not dense.flags.writeable
    assert lattice.lax_from_state(s).dim == 3


def test_lax_matrix_validation():
    with pytest.raises(ValueError):
        lattice.LaxMatrix(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        lattice.LaxMatrix(np.array([-1.0]))


def test_volterra_rhs_examples():
    s = lattice.LatticeState(np.array([1.0, 2.0, 3.0]))
    npt.assert_array_equal(lattice.volterra_rhs(s), [2.0, 4.0, -6.0])
    npt.assert_array_equal(
        lattice.volterra_rhs(lattice.LatticeState(np.array([5.0]))), [0.0]
    )
    npt.assert_array_equal(
        lattice.volterra_rhs(lattice.LatticeState(np.array([1.0, 1.0]))), [1.0, -1.0]
    )


def test_volterra_rhs_total_mass_telescopes():
    # sum of site derivatives cancels pairwise at the boundary conditions
    stream = SplitMix64(substream_seed(21, 1))
    for n in (1, 2, 3, 8, 20):
        u = random_state(n, stream)
        du = lattice.volterra_rhs(lattice.LatticeState(u))
        assert abs(du.sum()) <= 1e-12 * (1.0 + np.abs(du).sum())


def test_weight_matrix_values():
    k = lattice.build_K(3)
    npt.assert_array_equal(np.diag(k), [0.25, 0.5, 0.75])
    npt.assert_array_equal(k, np.diag(np.diag(k)))
    for n in (2, 3, 7, 40):
        # quarter-integer entries sum exactly in binary
        assert np.trace(lattice.build_K(n)) == n * (n + 1) / 8.0
    with pytest.raises(ValueError):
        lattice.build_K(1)


def test_skew_generator_values():
    s = lattice.LatticeState(np.array([1.0, 1.0]))
    a = lattice.build_A(s)
    expect = np.array([[0.0, 0.0, 0.5], [0.0, 0.0, 0.0], [-0.5, 0.0, 0.0]])
    npt.assert_array_equal(a, expect)
    a49 = lattice.build_A(lattice.LatticeState(np.array([4.0, 9.0])))
    assert a49[0, 2] == 3.0
    npt.assert_array_equal(
        lattice.build_A(lattice.LatticeState(np.array([4.0]))), np.zeros((2, 2))
    )


def test_skew_generator_band_structure():
    stream = SplitMix64(substream_seed(22, 0))
    for n in (2, 5, 13):
        s = lattice.LatticeState(random_state(n, stream))
        a = lattice.build_A(s)
        npt.assert_array_equal(a, -a.T)
        # only the second off-diagonals may be populated
        mask = np.zeros_like(a, dtype=bool)
        idx = np.arange(n - 1)
        mask[idx, idx + 2] = True
        mask[idx + 2, idx] = True
        assert np.all(a[~mask] == 0.0)


def test_skew_generator_equals_weight_bracket():
    # two routes to the same generator: direct entries vs [L^2, K]
    stream = SplitMix64(substream_seed(22, 1))
    for n in range(1, 31):
        s = lattice.LatticeState(random_state(n, stream))
        dense = lattice.lax_from_state(s).densify()
        bracket = commutator(dense @ dense, lattice.build_K(n + 1))
        scale = 1.0 + np.linalg.norm(dense) ** 2
        assert np.abs(lattice.build_A(s) - bracket).max() <= 1e-12 * scale


def test_objective_values():
    assert lattice.objective_f(
        lattice.lax_from_state(lattice.LatticeState(np.array([1.0, 1.0])))
    ) == 2.0
    assert lattice.objective_f(
        lattice.lax_from_state(lattice.LatticeState(np.array([1.0])))
    ) == 0.75
    with pytest.raises(ValueError):
        lattice.trace_objective(np.ones((2, 3)))


def test_objective_closed_form():
    # tr(K L^2) written out in site variables: sum_n (2n + 1) u_n / 4
    stream = SplitMix64(substream_seed(23, 0))
    for n in (1, 2, 4, 9, 17):
        u = random_state(n, stream)
        lax = lattice.lax_from_state(lattice.LatticeState(u))
        expect = sum((2 * (i + 1) + 1) * u[i] / 4.0 for i in range(n))
        assert lattice.objective_f(lax) == pytest.approx(expect, rel=1e-13)


def test_objective_is_linear_in_sites():
    stream = SplitMix64(substream_seed(23, 1))
    for _ in range(10):
        u = random_state(6, stream)
        alpha = 0.5 + stream.uniform()
        f1 = lattice.objective_f(lattice.lax_from_state(lattice.LatticeState(u)))
        f2 = lattice.objective_f(
            lattice.lax_from_state(lattice.LatticeState(alpha * u))
        )
        assert f2 == pytest.approx(alpha * f1, rel=1e-13)


def test_double_bracket_field_values():
    zero = lattice.double_bracket_field(
        lattice.lax_from_state(lattice.LatticeState(np.array([1.0])))
    )
    npt.assert_allclose(zero, np.zeros((2, 2)), rtol=0, atol=1e-15)
    field = lattice.double_bracket_field(
        lattice.lax_from_state(lattice.LatticeState(np.array([1.0, 1.0])))
    )
    expect = np.array([[0.0, -0.5, 0.0], [-0.5, 0.0, 0.5], [0.0, 0.5, 0.0]])
    npt.assert_allclose(field, expect, rtol=0, atol=1e-14)


def test_double_bracket_two_routes_agree():
    stream = SplitMix64(substream_seed(24, 0))
    for n in (1, 3, 8, 16):
        s = lattice.LatticeState(random_state(n, stream))
        lax = lattice.lax_from_state(s)
        dense = lax.densify()
        via_a = commutator(dense, lattice.build_A(s))
        via_k = lattice.double_bracket_field(lax)
        scale = 1.0 + np.linalg.norm(dense) ** 3
        assert np.abs(via_a - via_k).max() <= 1e-12 * scale


def test_lax_rhs_sign_and_validation():
    s = lattice.LatticeState(np.array([1.0, 1.0]))
    dot = lattice.lax_rhs(lattice.lax_from_state(s), sigma=-1)
    assert dot[0, 1] == pytest.approx(0.5, abs=1e-15)
    npt.assert_allclose(dot, dot.T, rtol=0, atol=1e-15)
    with pytest.raises(ValueError):
        lattice.lax_rhs(lattice.lax_from_state(s), sigma=0)
    with pytest.raises(ValueError):
        lattice.lax_rhs(lattice.lax_from_state(s), sigma=2)


def test_pushforward_forms_and_validation():
    s = lattice.LatticeState(np.array([1.0, 1.0]))
    direct = lattice.pushforward_rhs(s, "direct", lattice.CALIBRATED_SIGN)
    npt.assert_array_equal(direct, [1.0, -1.0])
    for form in ("lax", "bracket"):
        via = lattice.pushforward_rhs(s, form, lattice.CALIBRATED_SIGN)
        npt.assert_allclose(via, direct, rtol=0, atol=1e-14)
    with pytest.raises(ValueError):
        lattice.pushforward_rhs(s, "unknown", -1)


def test_pushforward_fixed_point():
    s = lattice.LatticeState(np.array([3.7]))
    for form in lattice.FORMS:
        npt.assert_allclose(
            lattice.pushforward_rhs(s, form, lattice.CALIBRATED_SIGN),
            [0.0],
            rtol=0,
            atol=1e-15,
        )


def test_pushforward_equivalence_sweep():
    # all three forms produce the same site velocities
    worst_abs = 0.0
    worst_rel = 0.0
    stream = SplitMix64(substream_seed(25, 0))
    for trial in range(200):
        n = 1 + stream.next_u64() % 20
        s = lattice.LatticeState(random_state(n, stream))
        direct = lattice.pushforward_rhs(s, "direct", lattice.CALIBRATED_SIGN)
        scale = 1.0 + np.abs(direct).max()
        for form in ("lax", "bracket"):
            gap = np.abs(
                lattice.pushforward_rhs(s, form, lattice.CALIBRATED_SIGN) - direct
            ).max()
            worst_abs = max(worst_abs, gap)
            worst_rel = max(worst_rel, gap / scale)
    assert worst_abs <= 1e-13
    assert worst_rel <= 1e-12


def test_sign_calibration_picks_descent():
    cal = lattice.calibrate_sign()
    assert cal.sigma == lattice.CALIBRATED_SIGN == -1
    assert cal.discrepancy[-1] <= 1e-12
    assert cal.discrepancy[+1] > 1e-3


def test_sign_calibration_stable_across_states():
    stream = SplitMix64(substream_seed(26, 0))
    for n in (2, 3, 5):
        s = lattice.LatticeState(random_state(n, stream))
        cal = lattice.calibrate_sign(state=s)
        assert cal.sigma == -1
        assert cal.discrepancy[-1] < cal.discrepancy[+1]


def test_weight_gradient_identity():
    # d f along [L, T] curves equals tr([L^2, K] T^T) for arbitrary T
    stream = SplitMix64(substream_seed(27, 0))
    for n in (2, 5, 11):
        s = lattice.LatticeState(random_state(n, stream))
        dense = lattice.lax_from_state(s).densify()
        k = lattice.build_K(n + 1)
        g = commutator(dense @ dense, k)
        t = np.array(
            [[stream.uniform_signed() for _ in range(n + 1)] for _ in range(n + 1)]
        )
        lhs = frobenius_inner(k, commutator(dense, t) @ dense + dense @ commutator(dense, t))
        rhs = frobenius_inner(g, t)
        scale = 1.0 + abs(lhs) + np.linalg.norm(g) * np.linalg.norm(t)
        assert abs(lhs - rhs) <= 1e-12 * scale

import numpy as np
import pytest

from mfgmix.errors import (
    MaxIterationsExceededError,
    NonUniqueStationaryError,
    SingularSystemError,
    UnsupportedCostError,
    ZeroProbabilityWithEntropyError,
)
from mfgmix.kernel import (
    CostSpec,
    SolverConfig,
    average_cost,
    average_cost_gradient,
    coupling_values,
    hjb_policy_step,
    linear_transition_cost,
    linear_transition_cost_deriv,
    row_nash_minimize,
    solve_hjb,
    solve_subsystem,
    stationary_distribution,
)
from oracles import (
    grid_minimize_row,
    kkt_row_residual,
    power_iteration_stationary,
    row_objective,
    simplex_grid,
)

NO_COUPLING = CostSpec(epsilon=0.0, coupling=lambda i, theta: 0.0)


def random_theta(rng, s):
    theta = rng.random(s) + 0.05
    return theta / theta.sum()


# ------------------------------------------------------------------- CostSpec


def test_cost_spec_rejects_inconsistent_setups():
    with pytest.raises(ValueError):
        CostSpec(epsilon=-0.1)
    with pytest.raises(ValueError):
        CostSpec(cost_kind="custom")
    with pytest.raises(ValueError):
        CostSpec(transition_cost=lambda p: p)
    # x*c(x) = -3x^3 is concave on [0, 1]
    with pytest.raises(ValueError):
        CostSpec(cost_kind="custom",
                 transition_cost=lambda p: -3.0 * np.asarray(p) ** 2,
                 transition_cost_deriv=lambda p: -6.0 * np.asarray(p))


def test_default_coupling_matches_two_state_form():
    # at S=2 the half-squared-distance coupling reduces to (t^2, (1-t)^2)
    # with t the state-1 probability
    for t in (0.0, 0.3, 0.5, 0.9):
        f = coupling_values(np.array([1 - t, t]), CostSpec(epsilon=0.0))
        assert np.allclose(f, [t ** 2, (1 - t) ** 2], atol=1e-15)


# --------------------------------------------------------------- average cost


def test_average_cost_symmetric_example():
    e = average_cost(np.full((2, 2), 0.5), np.zeros(2), np.array([0.5, 0.5]), NO_COUPLING)
    assert np.allclose(e, [-0.25, -0.25], atol=1e-15)


def test_average_cost_minimal_at_nash_rows():
    # replacing any row of the minimizer by a grid row cannot lower its entry
    rng = np.random.default_rng(4)
    grid = simplex_grid(2, 1e-3)
    for eps in (0.0, 0.05):
        spec = CostSpec(epsilon=eps)
        v = rng.normal(scale=0.4, size=2)
        v -= v.mean()
        p = row_nash_minimize(v, spec)
        e = average_cost(p, v, np.array([0.5, 0.5]), spec)
        base = row_objective(grid, v, eps)
        coupling = coupling_values(np.array([0.5, 0.5]), spec)
        for i in range(2):
            assert e[i] <= base.min() + coupling[i] + 1e-9


def test_average_cost_rejects_zero_probability_with_entropy():
    with pytest.raises(ZeroProbabilityWithEntropyError):
        average_cost(np.array([[1.0, 0.0], [0.5, 0.5]]), np.zeros(2),
                     np.array([0.5, 0.5]), CostSpec(epsilon=1.0))


def test_average_cost_entry_depends_on_its_row_only():
    spec = CostSpec(epsilon=0.05)
    v = np.array([0.1, -0.1])
    theta = np.array([0.4, 0.6])
    p1 = np.array([[0.7, 0.3], [0.2, 0.8]])
    p2 = np.array([[0.7, 0.3], [0.6, 0.4]])
    assert average_cost(p1, v, theta, spec)[0] == average_cost(p2, v, theta, spec)[0]


# ------------------------------------------------------------ row minimization


def test_row_minimize_symmetric_cases():
    for eps in (0.0, 0.05, 0.5):
        p = row_nash_minimize(np.zeros(2), CostSpec(epsilon=eps))
        assert np.allclose(p, 0.5, atol=1e-12)
        p3 = row_nash_minimize(np.zeros(3), CostSpec(epsilon=eps))
        assert np.allclose(p3, 1 / 3, atol=1e-12)


def test_row_minimize_linear_cost_first_order_condition():
    # for eps=0 the optimal interior entry solves p = (1 - V0 + V1)/2
    p = row_nash_minimize(np.array([-0.2, 0.2]), CostSpec(epsilon=0.0))
    assert np.allclose(p, [[0.7, 0.3], [0.7, 0.3]], atol=1e-14)
    ref = grid_minimize_row(np.array([-0.2, 0.2]), 0.0, 1e-4)
    assert np.abs(p[0] - ref).max() <= 2e-4


def test_row_minimize_matches_grid_search():
    rng = np.random.default_rng(10)
    for s in (2, 3):
        grid = simplex_grid(s, 1e-3)
        for eps in (0.0, 0.05):
            spec = CostSpec(epsilon=eps)
            for _ in range(10):
                v = rng.normal(scale=0.4, size=s)
                v -= v.mean()
                row = row_nash_minimize(v, spec)[0]
                ref = grid_minimize_row(v, eps, 1e-3, grid=grid)
                assert np.abs(row - ref).max() <= 2e-3


def test_row_minimize_positive_entries_and_stationarity_residual():
    rng = np.random.default_rng(1)
    spec = CostSpec(epsilon=0.05)
    for _ in range(20):
        v = rng.normal(scale=0.5, size=4)
        v -= v.mean()
        row = row_nash_minimize(v, spec, tolerance=1e-12)[0]
        assert row.min() > 0
        assert abs(row.sum() - 1.0) <= 1e-12
        assert kkt_row_residual(row, v, 0.05) <= 1e-10


def test_row_minimize_unique_under_random_brackets():
    rng = np.random.default_rng(2)
    spec = CostSpec(epsilon=0.05)
    v = rng.normal(scale=0.4, size=3)
    v -= v.mean()
    base = row_nash_minimize(v, spec)
    for _ in range(10):
        lo = rng.normal(scale=3)
        alt = row_nash_minimize(v, spec, nu_bracket=(lo, lo + abs(rng.normal()) + 1e-6))
        assert np.abs(alt - base).max() <= 1e-8


def test_row_minimize_rejects_custom_cost_without_entropy():
    spec = CostSpec(epsilon=0.0, cost_kind="custom",
                    transition_cost=lambda p: np.asarray(p, float),
                    transition_cost_deriv=lambda p: np.ones_like(np.asarray(p, float)))
    with pytest.raises(UnsupportedCostError):
        row_nash_minimize(np.array([0.1, -0.1]), spec)


def test_row_minimize_bisection_route_agrees_with_closed_form_route():
    # the same linear cost through the generic bisection path must reproduce
    # the Wright-omega fast path
    custom = CostSpec(epsilon=0.05, cost_kind="custom",
                      transition_cost=linear_transition_cost,
                      transition_cost_deriv=linear_transition_cost_deriv)
    fast = CostSpec(epsilon=0.05)
    rng = np.random.default_rng(3)
    for _ in range(10):
        v = rng.normal(scale=0.5, size=5)
        v -= v.mean()
        a = row_nash_minimize(v, fast)
        b = row_nash_minimize(v, custom)
        assert np.abs(a - b).max() <= 1e-10


def test_row_minimize_custom_convex_cost_against_grid():
    spec = CostSpec(epsilon=0.05, cost_kind="custom",
                    transition_cost=lambda p: np.asarray(p, float),
                    transition_cost_deriv=lambda p: np.ones_like(np.asarray(p, float)))
    rng = np.random.default_rng(5)
    grid = simplex_grid(3, 1e-3)
    for _ in range(5):
        v = rng.normal(scale=0.3, size=3)
        v -= v.mean()
        row = row_nash_minimize(v, spec)[0]
        ref = grid_minimize_row(v, 0.05, 1e-3, cost=lambda p: np.asarray(p, float), grid=grid)
        assert np.abs(row - ref).max() <= 2e-3


def test_row_minimize_custom_cost_handles_tiny_entries():
    # a wide value spread pushes some entries many orders below one; the
    # stationarity condition must still hold on the full support
    spec = CostSpec(epsilon=0.02, cost_kind="custom",
                    transition_cost=linear_transition_cost,
                    transition_cost_deriv=linear_transition_cost_deriv)
    v = np.array([-0.8, 0.0, 0.9])
    v = v - v.mean()
    row = row_nash_minimize(v, spec)[0]
    assert row.min() > 0
    assert kkt_row_residual(row, v, 0.02) <= 1e-9
    fast = row_nash_minimize(v, CostSpec(epsilon=0.02))[0]
    assert np.abs(np.log(row) - np.log(fast)).max() <= 1e-9


# ------------------------------------------------------------- policy iteration


def test_policy_step_symmetric_system():
    v, lam = hjb_policy_step(np.full((2, 2), 0.5), np.array([0.5, 0.5]), NO_COUPLING)
    assert np.allclose(v, 0.0, atol=1e-14)
    assert lam == pytest.approx(-0.25, abs=1e-14)


def test_policy_step_additive_coupling_shift():
    # adding a constant to the coupling shifts lam and leaves V unchanged
    rng = np.random.default_rng(6)
    p = row_nash_minimize(rng.normal(size=3) * 0.2, CostSpec(epsilon=0.05))
    theta = random_theta(rng, 3)
    kappa = 0.37
    base = CostSpec(epsilon=0.05)
    shifted = CostSpec(
        epsilon=0.05,
        coupling=lambda i, t, _w=0.5: _w * float((t - np.eye(t.size)[i]) @ (t - np.eye(t.size)[i])) + kappa,
    )
    v1, l1 = hjb_policy_step(p, theta, base)
    v2, l2 = hjb_policy_step(p, theta, shifted)
    assert np.allclose(v1, v2, atol=1e-12)
    assert l2 - l1 == pytest.approx(kappa, abs=1e-12)


def test_policy_step_two_state_closed_form():
    # transition rows (0.7, 0.3) with target 0.3 give V = (-0.2, 0.2), lam = 0
    v, lam = hjb_policy_step(np.array([[0.7, 0.3], [0.7, 0.3]]),
                             np.array([0.7, 0.3]), CostSpec(epsilon=0.0))
    assert np.allclose(v, [-0.2, 0.2], atol=1e-14)
    assert lam == pytest.approx(0.0, abs=1e-14)


def test_policy_step_detects_defective_policy():
    with pytest.raises(SingularSystemError):
        hjb_policy_step(np.eye(2), np.array([0.5, 0.5]), CostSpec(epsilon=0.0))


def test_solve_hjb_two_state_closed_form():
    v, lam, p, _ = solve_hjb(np.array([0.7, 0.3]), CostSpec(epsilon=0.0))
    assert np.allclose(v, [-0.2, 0.2], atol=1e-12)
    assert lam == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(p, [[0.7, 0.3], [0.7, 0.3]], atol=1e-12)


def test_solve_hjb_general_fixed_point():
    rng = np.random.default_rng(8)
    for s in (3, 5):
        theta = random_theta(rng, s)
        v, lam, p, _ = solve_hjb(theta, CostSpec(epsilon=0.0))
        assert np.allclose(v, 1.0 / s - theta, atol=1e-10)
        assert lam == pytest.approx(0.0, abs=1e-10)
        assert np.allclose(p, np.tile(theta, (s, 1)), atol=1e-10)


def test_solve_hjb_uniform_theta_full_symmetry():
    for eps in (0.0, 0.05, 0.3):
        for s in (2, 4):
            theta = np.full(s, 1.0 / s)
            v, lam, p, _ = solve_hjb(theta, CostSpec(epsilon=eps))
            assert np.allclose(v, 0.0, atol=1e-12)
            assert np.allclose(p, 1.0 / s, atol=1e-12)


def test_solve_hjb_iteration_budget():
    with pytest.raises(MaxIterationsExceededError) as info:
        solve_hjb(np.array([0.7, 0.3]), CostSpec(epsilon=0.0),
                  SolverConfig(max_policy_iterations=1))
    assert info.value.best is not None
    assert "last_policy_change" in info.value.diagnostic


def test_solve_hjb_warm_start_accepted():
    theta = np.array([0.25, 0.75])
    spec = CostSpec(epsilon=0.05)
    first = solve_subsystem(theta, spec)
    cfg = SolverConfig(warm_start_transition=first.transition)
    v, lam, p, iters = solve_hjb(theta, spec, cfg)
    assert np.allclose(p, first.transition, atol=1e-12)
    assert iters <= first.policy_iterations


# -------------------------------------------------------------- stationarity


def test_stationary_equal_rows_returns_the_row():
    row = np.array([0.2, 0.5, 0.3])
    pi = stationary_distribution(np.tile(row, (3, 1)))
    assert np.array_equal(pi, row)


def test_stationary_two_state_balance():
    p = np.array([[0.9, 0.1], [0.2, 0.8]])
    pi = stationary_distribution(p)
    assert np.allclose(pi, [2 / 3, 1 / 3], atol=1e-13)
    assert np.abs(pi - power_iteration_stationary(p)).max() <= 1e-10


def test_stationary_residual_small_on_random_chains():
    rng = np.random.default_rng(9)
    for s in (2, 5, 17):
        p = rng.random((s, s)) + 0.01
        p /= p.sum(axis=1, keepdims=True)
        pi = stationary_distribution(p)
        assert np.abs(pi - p.T @ pi).max() <= 1e-12


def test_stationary_identity_is_ambiguous():
    with pytest.raises(NonUniqueStationaryError):
        stationary_distribution(np.eye(4))


# ------------------------------------------------------------- full subsystem


def test_subsystem_two_state_closed_form():
    sol = solve_subsystem(np.array([0.7, 0.3]), CostSpec(epsilon=0.0))
    assert np.allclose(sol.distribution, [0.7, 0.3], atol=1e-12)
    assert np.allclose(sol.value, [-0.2, 0.2], atol=1e-12)


def test_subsystem_interior_theta_is_a_fixed_point():
    rng = np.random.default_rng(12)
    theta = random_theta(rng, 6)
    sol = solve_subsystem(theta, CostSpec(epsilon=0.0))
    assert np.abs(sol.distribution - theta).max() <= 1e-10


def test_subsystem_symmetric_with_entropy():
    sol = solve_subsystem(np.array([0.5, 0.5]), CostSpec(epsilon=0.05))
    assert np.allclose(sol.distribution, [0.5, 0.5], atol=1e-12)
    assert np.allclose(sol.value, [0.0, 0.0], atol=1e-12)


def test_subsystem_bellman_residual_bound():
    rng = np.random.default_rng(13)
    for eps in (0.0, 0.05, 0.3):
        for s in (2, 3, 8):
            sol = solve_subsystem(random_theta(rng, s), CostSpec(epsilon=eps))
            assert sol.hjb_residual <= 1e-9
            assert sol.fp_residual <= 1e-12
            assert abs(sol.value.sum()) <= 1e-10


def test_subsystem_positivity_with_entropy():
    rng = np.random.default_rng(14)
    spec = CostSpec(epsilon=0.05)
    for s in (2, 5):
        for _ in range(20):
            theta = rng.random(s)
            theta /= theta.sum()
            sol = solve_subsystem(theta, spec)
            assert sol.distribution.min() > 0
            assert sol.transition.min() > 0


def test_subsystem_continuity_in_theta():
    rng = np.random.default_rng(15)
    spec = CostSpec(epsilon=0.05)
    for _ in range(10):
        theta = random_theta(rng, 4)
        bump = rng.normal(size=4)
        bump -= bump.mean()
        bump *= 1e-6 / max(1e-30, np.abs(bump).max())
        sol_a = solve_subsystem(theta, spec)
        sol_b = solve_subsystem(theta + bump, spec)
        assert np.abs(sol_a.value - sol_b.value).max() <= 1e-4
        assert abs(sol_a.ergodic_cost - sol_b.ergodic_cost) <= 1e-4


def test_gradient_map_is_diagonally_monotone():
    # the pairing of matrix differences with gradient differences is positive
    rng = np.random.default_rng(16)
    spec = CostSpec(epsilon=0.05)
    v = rng.normal(size=3) * 0.3
    theta = random_theta(rng, 3)
    for _ in range(50):
        p1 = rng.random((3, 3)) + 1e-3
        p1 /= p1.sum(axis=1, keepdims=True)
        p2 = rng.random((3, 3)) + 1e-3
        p2 /= p2.sum(axis=1, keepdims=True)
        if np.array_equal(p1, p2):
            continue
        g1 = average_cost_gradient(p1, v, theta, spec)
        g2 = average_cost_gradient(p2, v, theta, spec)
        assert ((p1 - p2) * (g1 - g2)).sum() > 0

"""Single-population finite-state ergodic solver.

For a fixed coupling target theta on the S-state probability simplex, solve

    V(i) = min_{r in simplex} sum_j r_j (c(r_j) + eps*log(r_j) + V(j)) + F(i, theta) - lam
    pi(i) = sum_j P_ji pi(j),   sum_i pi(i) = 1,   sum_i V(i) = 0

where row i of the transition matrix P realizes the minimum in the first
equation. Policy iteration alternates a dense (S+1)-dimensional linear solve
for (V, lam) with the per-row convex minimization. Because the additive
coupling F(i, theta) is constant over each row's feasible set, every row of
the minimizer coincides: a single row problem serves the whole matrix.

The row problem for eps > 0 is handled through its stationarity conditions:
each entry solves the strictly increasing scalar equation

    c(x) + x*c'(x) + eps*(log(x) + 1) = nu - V(j)

on (0, 1], and the scalar multiplier nu is adjusted until the entries sum to
one. For the built-in linear cost c(p) = -(1-p)/2 the scalar equation reduces
to x + eps*log(x) = z, solved to machine precision by the Wright omega
function; custom costs fall back to bisection. For eps = 0 and the built-in
cost the minimizer is the Euclidean projection of -V onto the simplex.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import wrightomega, xlogy

from .core import MfgSolution, validate_simplex
from .errors import (
    MaxIterationsExceededError,
    NonconvergentRootFindError,
    NonUniqueStationaryError,
    PositivityViolationError,
    SingularSystemError,
    UnsupportedCostError,
    ZeroProbabilityWithEntropyError,
)

DEFAULT_COST = "default_linear"
CUSTOM_COST = "custom"


def linear_transition_cost(p):
    """Built-in transition cost c(p) = -(1-p)/2."""
    return 0.5 * (np.asarray(p, dtype=float) - 1.0)


def linear_transition_cost_deriv(p):
    return np.full_like(np.asarray(p, dtype=float), 0.5)


@dataclass(frozen=True)
class CostSpec:
    """Running-cost specification for one subsystem.

    epsilon          entropy weight; 0 disables the regularizer
    cost_kind        "default_linear" or "custom"
    transition_cost / transition_cost_deriv
                     c and c' for custom costs; both must accept numpy arrays.
                     x*c(x) must be convex on [0, 1] (checked on a grid).
    coupling         per-state coupling F(i, theta) -> float; None selects the
                     squared Euclidean distance from theta to the i-th simplex
                     vertex, scaled by coupling_weight
    coupling_weight  factor on the default squared-distance coupling; 1/2
                     makes the two-state reduction match the Bernoulli form
    """

    epsilon: float = 0.05
    cost_kind: str = DEFAULT_COST
    transition_cost: Callable | None = None
    transition_cost_deriv: Callable | None = None
    coupling: Callable | None = None
    coupling_weight: float = 0.5

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("entropy weight must be >= 0")
        if self.cost_kind not in (DEFAULT_COST, CUSTOM_COST):
            raise ValueError(f"unknown cost_kind {self.cost_kind!r}")
        if self.cost_kind == CUSTOM_COST:
            if self.transition_cost is None or self.transition_cost_deriv is None:
                raise ValueError("custom costs need transition_cost and its derivative")
            self._check_convexity()
        elif self.transition_cost is not None or self.transition_cost_deriv is not None:
            raise ValueError("cost callables require cost_kind='custom'")

    def _check_convexity(self):
        x = np.linspace(0.0, 1.0, 513)
        y = x * np.asarray(self.transition_cost(x), dtype=float)
        if not np.all(np.isfinite(y)):
            raise ValueError("x*c(x) must be finite on [0, 1]")
        second = np.diff(y, 2)
        if np.min(second) < -1e-9:
            raise ValueError("x*c(x) fails the convexity check on [0, 1]")

    def cost(self, x):
        if self.cost_kind == DEFAULT_COST:
            return linear_transition_cost(x)
        return np.asarray(self.transition_cost(x), dtype=float)

    def cost_deriv(self, x):
        if self.cost_kind == DEFAULT_COST:
            return linear_transition_cost_deriv(x)
        return np.asarray(self.transition_cost_deriv(x), dtype=float)


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and iteration budget for one subsystem solve."""

    policy_tolerance: float = 1e-10
    inner_root_tolerance: float = 1e-12
    max_policy_iterations: int = 500
    warm_start_transition: np.ndarray | None = None

    def __post_init__(self):
        if self.policy_tolerance <= 0 or self.inner_root_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_policy_iterations < 1:
            raise ValueError("max_policy_iterations must be >= 1")


def coupling_values(theta, spec):
    """Vector of coupling costs F(i, theta) for i = 0, ..., S-1."""
    theta = np.asarray(theta, dtype=float)
    s = theta.size
    if spec.coupling is None:
        # ||theta - T_i||^2 = ||theta||^2 - 2*theta_i + 1 for vertex T_i
        f = spec.coupling_weight * (theta @ theta - 2.0 * theta + 1.0)
    else:
        f = np.array([float(spec.coupling(i, theta)) for i in range(s)])
    if not np.all(np.isfinite(f)):
        raise ValueError("coupling returned a non-finite value")
    return f


def _check_transition(transition, epsilon):
    p = np.asarray(transition, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"transition matrix must be square, got shape {p.shape}")
    if np.any(p < 0) or np.max(np.abs(p.sum(axis=1) - 1.0)) > 1e-9:
        raise ValueError("transition matrix must be row-stochastic")
    if epsilon > 0 and np.any(p == 0.0):
        raise ZeroProbabilityWithEntropyError(
            "zero transition probability is incompatible with an entropy weight > 0"
        )
    return p


def _row_running_cost(p, spec):
    """Per-state running cost sum_j P_ij (c(P_ij) + eps*log(P_ij))."""
    run = (p * spec.cost(p)).sum(axis=1)
    if spec.epsilon > 0:
        run = run + spec.epsilon * xlogy(p, p).sum(axis=1)
    return run


def average_cost(transition, value, theta, spec):
    """Average cost per state for a fixed transition matrix.

    Entry i depends only on row i: the running cost of that row, the coupling
    at state i, and the expected continuation value.
    """
    p = _check_transition(transition, spec.epsilon)
    v = np.asarray(value, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return _row_running_cost(p, spec) + p @ v + coupling_values(theta, spec)


def average_cost_gradient(transition, value, theta, spec):
    """Entrywise partials of the per-state average cost with respect to P_ij."""
    p = _check_transition(transition, spec.epsilon)
    v = np.asarray(value, dtype=float)
    g = spec.cost(p) + p * spec.cost_deriv(p)
    if spec.epsilon > 0:
        g = g + spec.epsilon * (np.log(p) + 1.0)
    f = coupling_values(np.asarray(theta, dtype=float), spec)
    return g + v[None, :] + f[:, None]


# ----------------------------------------------------------- row minimization


def _project_simplex(z):
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    a = np.sort(z)[::-1]
    shift = (np.cumsum(a) - 1.0) / np.arange(1, z.size + 1)
    support = np.nonzero(a > shift)[0][-1]
    return np.maximum(z - shift[support], 0.0)


def _phi(spec, x):
    """Stationarity left-hand side c(x) + x*c'(x) + eps*(log(x) + 1)."""
    out = spec.cost(x) + x * spec.cost_deriv(x)
    if spec.epsilon > 0:
        out = out + spec.epsilon * (np.log(x) + 1.0)
    return out


def _entries_default(rhs, eps):
    """Roots of x - 1/2 + eps*(log(x) + 1) = rhs, clamped to (0, 1].

    Substituting u = x/eps turns x + eps*log(x) = z into u + log(u) = z/eps
    - log(eps), which the Wright omega function solves directly.
    """
    z = rhs + 0.5 - eps
    x = eps * wrightomega(z / eps - np.log(eps))
    return np.minimum(x, 1.0)


def _entries_bisect(rhs, spec, tol):
    """Vectorized bisection for phi(x) = rhs per entry on (0, 1].

    Runs on log(x) so that roots of any magnitude keep full relative
    precision; the entropy term makes phi strictly increasing there too.
    """
    rhs = np.asarray(rhs, dtype=float)
    clamped = float(_phi(spec, np.array([1.0]))[0]) <= rhs
    lo = np.full(rhs.shape, -700.0)
    hi = np.zeros(rhs.shape)
    t = 0.5 * (lo + hi)
    for _ in range(200):
        f = _phi(spec, np.exp(t)) - rhs
        if np.max(np.abs(np.where(clamped, 0.0, f))) <= tol:
            break
        if np.max(hi - lo) <= 1e-14:
            break
        above = f > 0
        hi = np.where(above, t, hi)
        lo = np.where(above, lo, t)
        t = 0.5 * (lo + hi)
    return np.where(clamped, 1.0, np.exp(t))


def _widen_bracket(f, lo, hi):
    f_lo, f_hi = f(lo), f(hi)
    width = max(hi - lo, 1e-3)
    for _ in range(80):
        if f_lo <= 0.0 <= f_hi:
            return lo, hi
        lo -= width
        hi += width
        width *= 2.0
        f_lo, f_hi = f(lo), f(hi)
    raise NonconvergentRootFindError("could not bracket the row-sum multiplier")


def _kkt_row(v, spec, tol, nu_bracket):
    """Minimizing row for eps > 0 via the stationarity conditions."""
    eps = spec.epsilon
    s = v.size
    default = spec.cost_kind == DEFAULT_COST

    def entries(nu):
        rhs = nu - v
        if default:
            return _entries_default(rhs, eps)
        return _entries_bisect(rhs, spec, tol)

    def excess(nu):
        return entries(nu).sum() - 1.0

    if nu_bracket is None:
        # at nu = phi(1/S) + min(V) every entry is at most 1/S, and at
        # nu = phi(1/S) + max(V) at least 1/S, so the sum always straddles 1
        anchor = float(_phi(spec, np.array([1.0 / s]))[0])
        lo, hi = anchor + v.min(), anchor + v.max()
    else:
        lo, hi = (float(nu_bracket[0]), float(nu_bracket[1]))
    lo, hi = _widen_bracket(excess, lo, hi)

    ftol = 1e-14 * s
    nu = 0.5 * (lo + hi)
    x = entries(nu)
    f = x.sum() - 1.0
    for _ in range(200):
        if abs(f) <= ftol:
            break
        if f > 0.0:
            hi = nu
        else:
            lo = nu
        if hi - lo <= 4.0 * np.finfo(float).eps * max(1.0, abs(lo), abs(hi)):
            # Bracket holds no further interior floats; the residual sum error
            # is at the inner root resolution and is absorbed below.
            break
        if default:
            # Newton step using dx/dnu = x/(eps + x) on unclamped entries,
            # safeguarded by the bisection bracket.
            slope = np.where(x < 1.0, x / (eps + x), 0.0).sum()
            step = nu - f / slope if slope > 0 else np.inf
            nu = step if lo < step < hi else 0.5 * (lo + hi)
        else:
            nu = 0.5 * (lo + hi)
        x = entries(nu)
        f = x.sum() - 1.0
    if abs(f) > 1e-8:
        raise NonconvergentRootFindError(
            f"row-sum multiplier search stalled with sum error {f:.3g}"
        )
    if np.any(x <= 0.0):
        raise NonconvergentRootFindError("row entry underflowed to zero")
    return x / x.sum()


def row_nash_minimize(value, spec, *, tolerance=1e-12, nu_bracket=None):
    """Transition matrix whose every row minimizes the running-plus-value cost.

    The coupling term is constant over each row's feasible set, so all rows of
    the minimizer are identical; one row problem is solved and tiled. For
    eps > 0 every entry is strictly positive. `nu_bracket` optionally seeds
    the multiplier bracket; any seed converges to the same row.
    """
    v = np.asarray(value, dtype=float)
    if spec.epsilon == 0.0:
        if spec.cost_kind != DEFAULT_COST:
            raise UnsupportedCostError(
                "eps = 0 with a custom transition cost may have flat or boundary "
                "minimizers; only the built-in linear cost is supported"
            )
        row = _project_simplex(-v)
    else:
        row = _kkt_row(v, spec, tolerance, nu_bracket)
    return np.tile(row, (v.size, 1))


# ------------------------------------------------------------ policy iteration


def hjb_policy_step(transition, theta, spec):
    """Policy evaluation: solve the linear system for (V, lam) at fixed P.

    The unknowns are the S value entries plus the ergodic cost; the zero-sum
    normalization of V closes the system at size S+1.
    """
    theta = np.asarray(theta, dtype=float)
    p = _check_transition(transition, spec.epsilon)
    s = p.shape[0]
    if theta.size != s:
        raise ValueError(f"theta has {theta.size} states but P is {s}x{s}")
    running = _row_running_cost(p, spec) + coupling_values(theta, spec)
    a = np.zeros((s + 1, s + 1))
    a[:s, :s] = np.eye(s) - p
    a[:s, s] = 1.0
    a[s, :s] = 1.0
    b = np.append(running, 0.0)
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"defective policy matrix: {exc}") from exc
    if not np.all(np.isfinite(sol)) or np.max(np.abs(a @ sol - b)) > 1e-8 * (1.0 + np.abs(b).max()):
        raise SingularSystemError("policy evaluation system is numerically singular")
    return sol[:s], float(sol[s])


def solve_hjb(theta, spec, config=None):
    """Policy iteration for the ergodic equation at fixed coupling target.

    Returns (V, lam, P, iterations). Alternates policy evaluation with the row
    minimization until the transition matrix moves by less than the policy
    tolerance in max norm, then re-evaluates once so the returned (V, lam)
    solve the linear system of the returned P exactly.
    """
    cfg = config if config is not None else SolverConfig()
    theta = validate_simplex(theta)
    s = theta.size
    if cfg.warm_start_transition is not None:
        p = _check_transition(cfg.warm_start_transition, spec.epsilon)
        if p.shape[0] != s:
            raise ValueError("warm-start transition has the wrong state count")
    else:
        p = np.full((s, s), 1.0 / s)
    value = lam = None
    delta = np.inf
    for iteration in range(1, cfg.max_policy_iterations + 1):
        value, lam = hjb_policy_step(p, theta, spec)
        p_new = row_nash_minimize(value, spec, tolerance=cfg.inner_root_tolerance)
        delta = float(np.max(np.abs(p_new - p)))
        p = p_new
        if delta < cfg.policy_tolerance:
            value, lam = hjb_policy_step(p, theta, spec)
            return value, lam, p, iteration
    raise MaxIterationsExceededError(
        f"policy iteration stalled at change {delta:.3g} after {cfg.max_policy_iterations} steps",
        best=(value, lam, p),
        diagnostic={"last_policy_change": delta},
    )


def stationary_distribution(transition):
    """Stationary distribution pi with pi = P' pi, normalized to unit mass.

    Requires a unique stationary distribution; with identical rows (the shape
    every minimizer here produces) that row is returned directly.
    """
    p = _check_transition(transition, 0.0)
    s = p.shape[0]
    if np.all(p == p[0]):
        # Rank-one chain: every start reaches the common row in one step.
        return p[0].copy()
    a = p.T - np.eye(s)
    if np.linalg.matrix_rank(a) < s - 1:
        raise NonUniqueStationaryError("transition matrix has multiple closed classes")
    m = a.copy()
    m[-1, :] = 1.0
    b = np.zeros(s)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(m, b)
    except np.linalg.LinAlgError as exc:
        raise NonUniqueStationaryError(f"stationary system is singular: {exc}") from exc
    if pi.min() < -1e-12:
        raise NonUniqueStationaryError("stationary solve produced negative mass")
    pi = np.maximum(pi, 0.0)
    return pi / pi.sum()


def solve_subsystem(theta, spec, config=None):
    """Solve one subsystem and package the solution with residual diagnostics.

    For eps > 0 the stationary distribution and the transition matrix are
    checked to be strictly positive.
    """
    cfg = config if config is not None else SolverConfig()
    theta = validate_simplex(theta)
    value, lam, p, iterations = solve_hjb(theta, spec, cfg)
    pi = stationary_distribution(p)
    minimizer = row_nash_minimize(value, spec, tolerance=cfg.inner_root_tolerance)
    bellman = average_cost(minimizer, value, theta, spec) - lam
    hjb_residual = float(np.max(np.abs(value - bellman)))
    fp_residual = float(np.max(np.abs(pi - p.T @ pi)))
    if spec.epsilon > 0 and (pi.min() <= 0.0 or p.min() <= 0.0):
        raise PositivityViolationError(
            f"entropy weight {spec.epsilon:g} should force strictly positive mass, "
            f"got min pi = {pi.min():.3g}, min P = {p.min():.3g}"
        )
    return MfgSolution(
        value=value,
        ergodic_cost=lam,
        distribution=pi,
        transition=p,
        hjb_residual=hjb_residual,
        fp_residual=fp_residual,
        policy_iterations=iterations,
    )

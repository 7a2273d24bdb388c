"""Mixture fitting: responsibilities, coupling targets, and the outer loop.

The fit alternates an expectation step (responsibilities, weights, and the
responsibility-weighted state frequencies theta) with a maximization step
that solves one S-state subsystem per (component, coordinate) pair. The
classical EM baseline shares the same loop but closes the maximization step
in explicit form (components = theta).

All component masses are handled in log space: with hundreds of coordinates
the plain product of per-coordinate probabilities underflows double
precision, so responsibilities are formed with log-sum-exp.
"""
from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import MixtureModel, validate_simplex
from .errors import (
    AllComponentsVanishError,
    EmptyClusterError,
    MfgmixError,
    OutOfDomainError,
    SubsystemError,
)
from .kernel import CostSpec, SolverConfig, solve_subsystem


@dataclass(frozen=True)
class Responsibilities:
    """Posterior component probabilities per sample.

    gamma         (N, K), rows sum to one
    log_evidence  (N,) log of the mixture mass of each sample
    """

    gamma: np.ndarray
    log_evidence: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if g.ndim != 2:
            raise ValueError("gamma must be (N, K)")
        if np.any(g < 0.0):
            raise ValueError("responsibilities must be nonnegative")
        if g.size and np.max(np.abs(g.sum(axis=1) - 1.0)) > 1e-10:
            raise ValueError("responsibility rows must sum to 1")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "log_evidence", np.asarray(self.log_evidence, dtype=float))


@dataclass(frozen=True)
class FitConfig:
    """Outer-loop configuration.

    epsilon is a convenience knob for the default cost spec; supplying a full
    CostSpec overrides it (the two must agree when both are given).
    empty_cluster_floor is a per-sample responsibility floor, scaled by N.
    """

    num_components: int
    epsilon: float = 0.05
    outer_tolerance: float = 1e-6
    max_outer_iterations: int = 200
    seed: int = 0
    empty_cluster_floor: float = 1e-8
    solver: SolverConfig = field(default_factory=SolverConfig)
    cost: CostSpec | None = None
    track_iterates: bool = False

    def __post_init__(self):
        if self.num_components < 1:
            raise ValueError("need at least one component")
        if self.outer_tolerance <= 0:
            raise ValueError("outer_tolerance must be positive")
        if self.empty_cluster_floor <= 0:
            raise ValueError("empty_cluster_floor must be positive")
        if self.cost is not None and self.cost.epsilon != self.epsilon:
            raise ValueError(
                f"cost.epsilon={self.cost.epsilon!r} disagrees with epsilon={self.epsilon!r}"
            )

    def effective_cost(self):
        return self.cost if self.cost is not None else CostSpec(epsilon=self.epsilon)


@dataclass(frozen=True)
class MStepDiagnostics:
    """Per-(component, coordinate) solve diagnostics, each of shape (K, D)."""

    ergodic_cost: np.ndarray
    hjb_residual: np.ndarray
    fp_residual: np.ndarray
    value_sum: np.ndarray
    policy_iterations: np.ndarray
    transition: np.ndarray  # (K, D, S, S), used to warm-start the next pass

    def worst_residual(self):
        return float(max(self.hjb_residual.max(), self.fp_residual.max()))


@dataclass(frozen=True)
class FitResult:
    model: MixtureModel
    responsibilities: Responsibilities
    iterations: int
    converged: bool
    theta_residual_trace: list
    loglik_trace: list
    subsystem_diagnostics: MStepDiagnostics | None
    warnings: list
    iterate_trace: list | None = None
    # per-iteration (max hjb residual, max fp residual, max |sum V|)
    solver_residual_trace: list | None = None


def _log_component_masses(model, data):
    """(N, K) matrix of log pi_k(x_n); -inf marks hard-zero masses."""
    if model.num_dims != data.num_dims or model.num_states != data.num_states:
        raise ValueError(
            f"model is (D={model.num_dims}, S={model.num_states}) but data is "
            f"(D={data.num_dims}, S={data.num_states})"
        )
    with np.errstate(divide="ignore"):
        logc = np.log(model.components)
    cols = np.arange(data.num_dims)
    out = np.empty((data.num_samples, model.num_components))
    for k in range(model.num_components):
        out[:, k] = logc[k, cols, data.samples].sum(axis=1)
    return out


def _log_joint(model, data):
    with np.errstate(divide="ignore"):
        logw = np.log(model.weights)
    return _log_component_masses(model, data) + logw[None, :]


def responsibilities(model, data):
    """Posterior probability of each component for each sample (log-sum-exp)."""
    a = _log_joint(model, data)
    peak = a.max(axis=1)
    if np.any(np.isneginf(peak)):
        bad = int(np.nonzero(np.isneginf(peak))[0][0])
        raise AllComponentsVanishError(
            f"every component assigns mass 0 to sample {bad}; "
            "some component has a hard zero at an observed state"
        )
    with np.errstate(invalid="ignore"):
        shifted = np.exp(a - peak[:, None])
    log_evidence = peak + np.log(shifted.sum(axis=1))
    gamma = shifted / shifted.sum(axis=1, keepdims=True)
    return Responsibilities(gamma=gamma, log_evidence=log_evidence)


def update_weights(resp):
    """Mixing coefficients: the mean responsibility of each component."""
    return validate_simplex(resp.gamma.mean(axis=0))


def _raw_theta(gamma, data):
    """Per-component weighted state frequencies; assumes positive column masses."""
    counts = np.empty((gamma.shape[1], data.num_dims, data.num_states))
    for state in range(data.num_states):
        counts[:, :, state] = gamma.T @ (data.samples == state)
    theta = counts / gamma.sum(axis=0)[:, None, None]
    return theta / theta.sum(axis=2, keepdims=True)


def update_theta(resp, data, floor=0.0):
    """Responsibility-weighted state frequencies, shape (K, D, S).

    theta[k, d, i] is the gamma_k-weighted fraction of samples whose d-th
    coordinate occupies state i. Raises EmptyClusterError when a component's
    total responsibility mass is at or below `floor`.
    """
    if data.num_samples != resp.gamma.shape[0]:
        raise ValueError("responsibilities and data disagree on sample count")
    mass = resp.gamma.sum(axis=0)
    weak = np.nonzero(mass <= floor)[0]
    if weak.size:
        raise EmptyClusterError(int(weak[0]), float(mass[weak[0]]))
    return _raw_theta(resp.gamma, data)


def _solve_cell(theta_cell, cost, solver, warm_cell):
    cfg = solver
    if warm_cell is not None:
        cfg = dataclasses.replace(solver, warm_start_transition=warm_cell)
    return solve_subsystem(theta_cell, cost, cfg)


def mfg_m_step(theta, cfg, warm=None, workers=1):
    """Solve the (K x D) independent subsystems for the current theta field.

    Returns the new component table (K, D, S) and solve diagnostics. `warm`
    optionally carries the previous pass's transition matrices. The solves
    are independent; `workers` > 1 maps them over a thread pool, with results
    written at fixed indices so the outcome does not depend on worker count.
    """
    theta = np.asarray(theta, dtype=float)
    k, d, s = theta.shape
    cost = cfg.effective_cost()
    components = np.empty((k, d, s))
    ergodic = np.empty((k, d))
    hjb_res = np.empty((k, d))
    fp_res = np.empty((k, d))
    value_sum = np.empty((k, d))
    policy_iters = np.empty((k, d), dtype=int)
    transition = np.empty((k, d, s, s))

    def run(cell):
        ki, di = cell
        try:
            sol = _solve_cell(theta[ki, di], cost, cfg.solver,
                              None if warm is None else warm[ki, di])
        except MfgmixError as exc:
            raise SubsystemError(ki, di, exc) from exc
        components[ki, di] = sol.distribution
        ergodic[ki, di] = sol.ergodic_cost
        hjb_res[ki, di] = sol.hjb_residual
        fp_res[ki, di] = sol.fp_residual
        value_sum[ki, di] = sol.value.sum()
        policy_iters[ki, di] = sol.policy_iterations
        transition[ki, di] = sol.transition

    cells = [(ki, di) for ki in range(k) for di in range(d)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, cells))
    else:
        for cell in cells:
            run(cell)
    diagnostics = MStepDiagnostics(
        ergodic_cost=ergodic,
        hjb_residual=hjb_res,
        fp_residual=fp_res,
        value_sum=value_sum,
        policy_iterations=policy_iters,
        transition=transition,
    )
    return components, diagnostics


def log_likelihood(model, data):
    """Total log mass of the data under the mixture.

    Returns -inf (rather than raising) when some sample has zero mass under
    every component.
    """
    a = _log_joint(model, data)
    peak = a.max(axis=1)
    finite = ~np.isneginf(peak)
    if not finite.all():
        return float("-inf")
    return float((peak + np.log(np.exp(a - peak[:, None]).sum(axis=1))).sum())


def modified_log_likelihood(model, data, epsilon):
    """Entropy-adjusted expected likelihood for two-state models.

    Each Bernoulli parameter mu is pushed through
    f(mu) = mu + (epsilon/2) * log(mu / (1 - mu)); the result must stay inside
    (0, 1) or OutOfDomainError is raised. With epsilon = 0 this is the plain
    expected-likelihood functional. Used to monitor entropy-regularized runs.
    """
    if model.num_states != 2:
        raise ValueError("the adjusted likelihood is defined for 2-state models")
    mu = model.components[:, :, 1]
    if np.any(mu <= 0.0) or np.any(mu >= 1.0):
        raise OutOfDomainError("Bernoulli parameters must lie strictly inside (0, 1)")
    f = mu + 0.5 * epsilon * np.log(mu / (1.0 - mu))
    if np.any(f <= 0.0) or np.any(f >= 1.0):
        raise OutOfDomainError(
            f"transformed parameter left (0, 1); range [{f.min():.3g}, {f.max():.3g}]"
        )
    resp = responsibilities(model, data)
    logf = np.log(f)
    log1mf = np.log1p(-f)
    x = data.samples  # (N, D) of {0, 1}
    per_sample = x @ logf.T + (1 - x) @ log1mf.T  # (N, K)
    with np.errstate(divide="ignore"):
        logw = np.log(model.weights)
    # gamma = 0 exactly where a weight is 0; that term contributes nothing
    with np.errstate(invalid="ignore"):
        terms = np.where(resp.gamma > 0, resp.gamma * (logw[None, :] + per_sample), 0.0)
    return float(terms.sum())


def _initial_model(data, cfg, rng):
    k = cfg.num_components
    weights = np.full(k, 1.0 / k)
    components = rng.random((k, data.num_dims, data.num_states))
    components /= components.sum(axis=2, keepdims=True)
    return MixtureModel(weights=weights, components=components)


def _guarded_theta(resp, data, floor, prev_theta, warnings):
    """Empty-cluster rule: a starved component keeps its previous theta."""
    mass = resp.gamma.sum(axis=0)
    weak = np.nonzero(mass <= floor)[0]
    if weak.size == 0:
        return _raw_theta(resp.gamma, data)
    if prev_theta is None:
        raise EmptyClusterError(int(weak[0]), float(mass[weak[0]]))
    keep = np.setdiff1d(np.arange(resp.gamma.shape[1]), weak)
    theta = prev_theta.copy()
    if keep.size:
        theta[keep] = _raw_theta(resp.gamma[:, keep], data)
    for ki in weak:
        warnings.append(f"component {int(ki)} starved (mass {mass[ki]:.3g}); kept previous theta")
    return theta


def _closed_form_m_step(theta, cfg, warm=None, workers=1):
    return theta.copy(), None


def _fit_loop(data, cfg, m_step, workers, init):
    rng = np.random.default_rng(cfg.seed)
    model = init if init is not None else _initial_model(data, cfg, rng)
    if model.num_dims != data.num_dims or model.num_states != data.num_states:
        raise ValueError("initial model and data disagree on (D, S)")
    if model.num_components != cfg.num_components:
        raise ValueError("initial model and config disagree on the component count")
    floor = cfg.empty_cluster_floor * data.num_samples
    theta_prev = None
    warm = None
    diagnostics = None
    theta_trace: list = []
    loglik_trace: list = []
    residual_trace: list = []
    iterate_trace: list = [] if cfg.track_iterates else None
    warnings: list = []
    converged = False
    iterations = 0
    for _ in range(cfg.max_outer_iterations):
        iterations += 1
        resp = responsibilities(model, data)
        weights = update_weights(resp)
        theta = _guarded_theta(resp, data, floor, theta_prev, warnings)
        components, diagnostics = m_step(theta, cfg, warm=warm, workers=workers)
        warm = None if diagnostics is None else diagnostics.transition
        model = MixtureModel(weights=weights, components=components)
        loglik_trace.append(log_likelihood(model, data))
        if diagnostics is not None:
            residual_trace.append((float(diagnostics.hjb_residual.max()),
                                   float(diagnostics.fp_residual.max()),
                                   float(np.abs(diagnostics.value_sum).max())))
        if iterate_trace is not None:
            iterate_trace.append((weights.copy(), components.copy()))
        if theta_prev is not None:
            residual = float(np.linalg.norm((theta - theta_prev).ravel()))
            theta_trace.append(residual)
            worst = 0.0 if diagnostics is None else diagnostics.worst_residual()
            if residual < cfg.outer_tolerance and worst <= 1e-8:
                theta_prev = theta
                converged = True
                break
        theta_prev = theta
    final_resp = responsibilities(model, data)
    return FitResult(
        model=model,
        responsibilities=final_resp,
        iterations=iterations,
        converged=converged,
        theta_residual_trace=theta_trace,
        loglik_trace=loglik_trace,
        subsystem_diagnostics=diagnostics,
        warnings=warnings,
        iterate_trace=iterate_trace,
        solver_residual_trace=residual_trace or None,
    )


def fit(data, cfg, *, workers=1, init=None):
    """Fit a mixture by alternating the expectation step with subsystem solves.

    Starts from uniform weights and components drawn uniformly in (0, 1) then
    row-normalized (reproducible through cfg.seed; pass `init` to override).
    Stops when the Euclidean norm of the flattened theta change drops below
    the outer tolerance and the last pass's worst subsystem residual is at
    most 1e-8; returns converged=False when the iteration budget runs out.
    """
    return _fit_loop(data, cfg, mfg_m_step, workers, init)


def em_baseline_fit(data, cfg, *, workers=1, init=None):
    """Classical EM: the same loop with the closed-form maximization step."""
    return _fit_loop(data, cfg, _closed_form_m_step, workers, init)

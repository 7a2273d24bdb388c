"""Shared domain types, simplex validation, and model persistence."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CorruptFileError,
    DimensionMismatchError,
    FormatVersionMismatchError,
    MassMismatchError,
    NegativeEntryError,
)

SIMPLEX_TOL = 1e-9
MODEL_FORMAT_HEADER = "MFGMIX v1"


def _as_float_vector(values, name):
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must contain only finite values")
    return v


def validate_simplex(values, tolerance=SIMPLEX_TOL):
    """Check that a raw vector lies on the probability simplex.

    Returns a renormalized copy so that downstream code can rely on an exact
    unit sum. Raises NegativeEntryError / MassMismatchError otherwise.
    """
    v = _as_float_vector(values, "probability vector")
    if np.any(v < 0.0):
        raise NegativeEntryError(f"negative entry {v.min():.3g} in probability vector")
    total = v.sum()
    if abs(total - 1.0) > tolerance:
        raise MassMismatchError(f"entries sum to {total!r}, expected 1 within {tolerance:g}")
    return v / total


def check_simplex(values, tolerance=SIMPLEX_TOL):
    """Like validate_simplex but returns the values verbatim (no renormalization).

    Used by the model loader, whose round-trip contract is bit-exact.
    """
    v = _as_float_vector(values, "probability vector")
    if np.any(v < 0.0):
        raise NegativeEntryError(f"negative entry {v.min():.3g} in probability vector")
    total = v.sum()
    if abs(total - 1.0) > tolerance:
        raise MassMismatchError(f"entries sum to {total!r}, expected 1 within {tolerance:g}")
    return v


def validate_stochastic(matrix, tolerance=SIMPLEX_TOL):
    """Validate a row-stochastic matrix; returns a row-renormalized copy."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"transition matrix must be 2-D, got shape {m.shape}")
    return np.vstack([validate_simplex(row, tolerance) for row in m])


def check_value_vector(values, tolerance=1e-10):
    """Validate the zero-sum normalization of a value vector."""
    v = _as_float_vector(values, "value vector")
    if abs(v.sum()) > tolerance:
        raise ValueError(f"value vector sums to {v.sum():.3g}, expected 0 within {tolerance:g}")
    return v


def _freeze(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MixtureModel:
    """Product-form categorical mixture.

    weights     (K,) mixing coefficients
    components  (K, D, S) per-component, per-coordinate state probabilities;
                for S=2 the Bernoulli parameter of (k, d) is components[k, d, 1]
    """

    weights: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        w = validate_simplex(self.weights)
        c = np.asarray(self.components, dtype=float)
        if c.ndim != 3:
            raise ValueError(f"components must be (K, D, S), got shape {c.shape}")
        if c.shape[0] != w.size:
            raise DimensionMismatchError(
                f"{w.size} weights but {c.shape[0]} component rows"
            )
        if np.any(c < 0.0):
            raise NegativeEntryError("negative component probability")
        sums = c.sum(axis=2)
        if np.max(np.abs(sums - 1.0)) > SIMPLEX_TOL:
            raise MassMismatchError("component rows must each sum to 1")
        object.__setattr__(self, "weights", _freeze(w))
        object.__setattr__(self, "components", _freeze(c / sums[:, :, None]))

    @property
    def num_components(self):
        return self.components.shape[0]

    @property
    def num_dims(self):
        return self.components.shape[1]

    @property
    def num_states(self):
        return self.components.shape[2]

    def bernoulli_parameters(self):
        """(K, D) success probabilities; defined for two-state models only."""
        if self.num_states != 2:
            raise ValueError("Bernoulli parameters require a 2-state model")
        return self.components[:, :, 1]


@dataclass(frozen=True)
class Dataset:
    """N samples of D categorical coordinates with values in {0, ..., S-1}."""

    samples: np.ndarray
    num_states: int
    labels: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim != 2:
            raise ValueError(f"samples must be (N, D), got shape {s.shape}")
        if not np.issubdtype(s.dtype, np.integer):
            raise ValueError("samples must be integer state indices")
        if self.num_states < 1:
            raise ValueError("num_states must be positive")
        if s.size and (s.min() < 0 or s.max() >= self.num_states):
            raise ValueError(
                f"sample states must lie in [0, {self.num_states}), "
                f"got range [{s.min()}, {s.max()}]"
            )
        object.__setattr__(self, "samples", _freeze(s))
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (s.shape[0],):
                raise ValueError("labels must be one integer per sample")
            object.__setattr__(self, "labels", _freeze(lab.astype(np.int64)))

    @property
    def num_samples(self):
        return self.samples.shape[0]

    @property
    def num_dims(self):
        return self.samples.shape[1]


@dataclass(frozen=True)
class MfgSolution:
    """Solution of one subsystem: value vector, ergodic cost, stationary
    distribution, optimal transition matrix, and residual diagnostics."""

    value: np.ndarray
    ergodic_cost: float
    distribution: np.ndarray
    transition: np.ndarray
    hjb_residual: float
    fp_residual: float
    policy_iterations: int

    def __post_init__(self):
        v = check_value_vector(self.value)
        pi = validate_simplex(self.distribution)
        p = validate_stochastic(self.transition)
        if np.max(np.abs(pi - p.T @ pi)) > 1e-10:
            raise ValueError("distribution is not stationary under transition")
        object.__setattr__(self, "value", _freeze(v))
        object.__setattr__(self, "distribution", _freeze(pi))
        object.__setattr__(self, "transition", _freeze(p))


# ------------------------------------------------------------------ persistence
#
# Model file layout (UTF-8 text, '\n' endings):
#   line 1            MFGMIX v1
#   line 2            K D S
#   line 3            K weights
#   lines 4..3+K*D    S probabilities per line, component-major then coordinate
#
# Reals are written with 17 significant digits, which round-trips IEEE doubles
# exactly; the loader keeps parsed values verbatim.


def _fmt(x):
    return format(float(x), ".17g")


def save_model(model, destination):
    """Write a model to `destination` (path or text file object)."""
    k, d, s = model.num_components, model.num_dims, model.num_states
    lines = [MODEL_FORMAT_HEADER, f"{k} {d} {s}", " ".join(_fmt(w) for w in model.weights)]
    for ki in range(k):
        for di in range(d):
            lines.append(" ".join(_fmt(p) for p in model.components[ki, di]))
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8") as fh:
            fh.write(text)


def _parse_reals(token_line, expected, what, lineno):
    tokens = token_line.split()
    if len(tokens) != expected:
        raise DimensionMismatchError(
            f"line {lineno}: expected {expected} values for {what}, got {len(tokens)}"
        )
    try:
        return np.array([float(t) for t in tokens])
    except ValueError as exc:
        raise CorruptFileError(f"line {lineno}: unreadable real in {what}: {exc}") from exc


def load_model(source):
    """Read a model written by save_model; the round trip is bit-exact."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise CorruptFileError("empty model file")
    if lines[0].strip() != MODEL_FORMAT_HEADER:
        raise FormatVersionMismatchError(f"unknown format header {lines[0]!r}")
    if len(lines) < 3:
        raise CorruptFileError("missing dimension or weight lines")
    dims = lines[1].split()
    if len(dims) != 3:
        raise CorruptFileError(f"dimension line must hold 'K D S', got {lines[1]!r}")
    try:
        k, d, s = (int(t) for t in dims)
    except ValueError as exc:
        raise CorruptFileError(f"non-integer dimension in {lines[1]!r}") from exc
    if k < 1 or d < 1 or s < 1:
        raise CorruptFileError(f"non-positive dimensions {k} {d} {s}")
    body = [ln for ln in lines[2:] if ln.strip()]
    if len(body) != 1 + k * d:
        raise DimensionMismatchError(
            f"expected 1 weight line plus {k * d} component lines, got {len(body)}"
        )
    weights = check_simplex(_parse_reals(body[0], k, "weights", 3))
    components = np.empty((k, d, s))
    for ki in range(k):
        for di in range(d):
            row = _parse_reals(body[1 + ki * d + di], s, f"component ({ki},{di})", 4 + ki * d + di)
            components[ki, di] = check_simplex(row)
    # Bypass __post_init__: its renormalization would perturb stored bits.
    model = MixtureModel.__new__(MixtureModel)
    object.__setattr__(model, "weights", _freeze(weights))
    object.__setattr__(model, "components", _freeze(components))
    return model

"""Command-line entry points tying ingestion, fitting, evaluation, exports.

Exit codes: 0 success, 2 usage error, 3 data error, 4 solver failure.
Every flag of a subcommand may also come from a key=value configuration file
passed with --config; explicitly given flags win. Each fit writes a flat
key=value manifest recording the resolved configuration, input and output
digests, library versions, and per-phase wall-clock timings.
"""
from __future__ import annotations

import argparse
import hashlib
import math
import os
import platform
import sys
import time
from dataclasses import dataclass

import numpy as np
import scipy

from . import __version__
from .core import load_model, save_model, validate_simplex
from .errors import (
    AllComponentsVanishError,
    BadMagicError,
    CorruptFileError,
    DimensionMismatchError,
    DimensionOverflowError,
    EmptyClassError,
    EmptyClusterError,
    FormatVersionMismatchError,
    IoFailureError,
    MassMismatchError,
    MaxIterationsExceededError,
    NegativeEntryError,
    NonconvergentRootFindError,
    NonUniqueStationaryError,
    NotSquareError,
    PositivityViolationError,
    SingularSystemError,
    SubsystemError,
    TruncatedFileError,
    UnsupportedCostError,
    ZeroProbabilityWithEntropyError,
)
from .ingest import (
    filter_by_labels,
    load_idx_images,
    load_idx_labels,
    quantize,
    states_to_bytes,
    synth_generate,
    write_idx_images,
    write_idx_labels,
)
from .kernel import CostSpec, SolverConfig, solve_subsystem
from .mixture import FitConfig, em_baseline_fit, fit, responsibilities
from .report import cluster_report, export_histogram_csv, export_parameter_images

USAGE_EXIT = 2
DATA_EXIT = 3
SOLVER_EXIT = 4

_SOLVER_ERRORS = (
    SubsystemError,
    MaxIterationsExceededError,
    NonconvergentRootFindError,
    SingularSystemError,
    NonUniqueStationaryError,
    PositivityViolationError,
    ZeroProbabilityWithEntropyError,
    UnsupportedCostError,
    AllComponentsVanishError,
    EmptyClusterError,
)
_DATA_ERRORS = (
    BadMagicError,
    TruncatedFileError,
    DimensionOverflowError,
    FormatVersionMismatchError,
    DimensionMismatchError,
    CorruptFileError,
    NegativeEntryError,
    MassMismatchError,
    NotSquareError,
    EmptyClassError,
    IoFailureError,
    OSError,
    ValueError,
)


def _parse_bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _parse_int_list(text):
    text = str(text).strip()
    if not text:
        return []
    return [int(tok) for tok in text.split(",")]


def _read_config(path):
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            overrides[key.strip().replace("_", "-")] = value.strip()
    return overrides


@dataclass(frozen=True)
class _Flag:
    name: str
    converter: object
    default: object = None
    required: bool = False
    is_switch: bool = False
    help: str = ""


def _install_flags(sub, flags):
    for flag in flags:
        if flag.is_switch:
            sub.add_argument(f"--{flag.name}", action="store_const", const=True,
                             default=None, help=flag.help)
        else:
            sub.add_argument(f"--{flag.name}", type=flag.converter, default=None,
                             help=flag.help)
    sub.add_argument("--config", type=str, default=None,
                     help="key=value file supplying defaults for any flag")


def _resolve(parser, ns, flags):
    overrides = _read_config(ns.config) if ns.config else {}
    resolved = {}
    for flag in flags:
        attr = flag.name.replace("-", "_")
        value = getattr(ns, attr)
        if value is None and flag.name in overrides:
            raw = overrides[flag.name]
            value = _parse_bool(raw) if flag.is_switch else flag.converter(raw)
        if value is None:
            value = flag.default
        if value is None and flag.required:
            parser.error(f"--{flag.name} is required")
        resolved[attr] = value
    return argparse.Namespace(**resolved)


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    """Ordered key=value record of one run; text form is diff-friendly."""

    entries: list

    def add(self, key, value):
        self.entries.append((key, str(value)))

    def text(self):
        return "".join(f"{k}={v}\n" for k, v in self.entries)

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.text())


def _new_manifest(command, resolved):
    manifest = RunManifest(entries=[])
    manifest.add("command", command)
    manifest.add("version", __version__)
    manifest.add("python", platform.python_version())
    manifest.add("numpy", np.__version__)
    manifest.add("scipy", scipy.__version__)
    for key in sorted(vars(resolved)):
        manifest.add(f"flag.{key}", getattr(resolved, key))
    return manifest


# ------------------------------------------------------------------------- fit

_FIT_FLAGS = [
    _Flag("images", str, required=True, help="IDX image file (optionally gzipped)"),
    _Flag("labels", str, help="IDX label file"),
    _Flag("classes", _parse_int_list, help="comma list of class labels to keep"),
    _Flag("K", int, help="number of mixture components (defaults to len(classes))"),
    _Flag("S", int, default=2, help="number of grey states (>= 2)"),
    _Flag("eps", float, default=0.05, help="entropy weight"),
    _Flag("tol", float, default=1e-6, help="outer-loop tolerance on theta"),
    _Flag("max-iter", int, default=200, help="outer iteration budget"),
    _Flag("seed", int, default=0, help="initialization seed"),
    _Flag("baseline", None, is_switch=True, default=False,
          help="run classical EM instead of the subsystem solves"),
    _Flag("threads", int, default=0, help="M-step worker cap (0: logical cores)"),
    _Flag("out", str, required=True, help="model file to write"),
    _Flag("trace", str, help="per-iteration trace CSV to write"),
]


def _cmd_fit(parser, ns):
    a = _resolve(parser, ns, _FIT_FLAGS)
    if a.K is None and a.classes:
        a.K = len(a.classes)
    if a.K is None or a.K < 1:
        parser.error("--K must be >= 1 (or derive it from --classes)")
    if a.S < 2:
        parser.error("--S must be >= 2")
    if a.eps < 0:
        parser.error("--eps must be >= 0")
    if a.classes is not None and len(a.classes) != a.K:
        parser.error(f"--classes lists {len(a.classes)} labels but --K is {a.K}")
    if a.classes and a.labels is None:
        parser.error("--classes requires --labels")
    threads = a.threads if a.threads and a.threads > 0 else (os.cpu_count() or 1)

    manifest = _new_manifest("fit", a)
    t0 = time.perf_counter()
    raw = load_idx_images(a.images)
    labels = load_idx_labels(a.labels) if a.labels else None
    data = quantize(raw, a.S, labels=labels)
    if a.classes is not None:
        data = filter_by_labels(data, a.classes)
    manifest.add("input.images.sha256", _sha256(a.images))
    if a.labels:
        manifest.add("input.labels.sha256", _sha256(a.labels))
    t1 = time.perf_counter()

    cfg = FitConfig(
        num_components=a.K,
        epsilon=a.eps,
        outer_tolerance=a.tol,
        max_outer_iterations=a.max_iter,
        seed=a.seed,
    )
    runner = em_baseline_fit if a.baseline else fit
    result = runner(data, cfg, workers=threads)
    t2 = time.perf_counter()

    save_model(result.model, a.out)
    if a.trace:
        _write_trace(result, a.trace)
    t3 = time.perf_counter()

    manifest.add("fit.samples", data.num_samples)
    manifest.add("fit.iterations", result.iterations)
    manifest.add("fit.converged", result.converged)
    manifest.add("fit.log_likelihood", format(result.loglik_trace[-1], ".17g"))
    for note in result.warnings:
        manifest.add("fit.warning", note)
    manifest.add("output.model.sha256", _sha256(a.out))
    if a.trace:
        manifest.add("output.trace.sha256", _sha256(a.trace))
    manifest.add("time.ingest_s", f"{t1 - t0:.3f}")
    manifest.add("time.fit_s", f"{t2 - t1:.3f}")
    manifest.add("time.write_s", f"{t3 - t2:.3f}")
    manifest.write(a.out + ".manifest")

    print(f"fitted {a.K} components on {data.num_samples} samples "
          f"in {result.iterations} iterations (converged={result.converged})")
    print(f"log-likelihood {result.loglik_trace[-1]:.6f}")
    print(f"model -> {a.out}")
    return 0


def _write_trace(result, path):
    lines = ["iteration,theta_residual,log_likelihood"]
    for i, loglik in enumerate(result.loglik_trace, start=1):
        residual = result.theta_residual_trace[i - 2] if i >= 2 else math.nan
        lines.append(f"{i},{residual:.17g},{loglik:.17g}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# ------------------------------------------------------------------------ eval

_EVAL_FLAGS = [
    _Flag("model", str, required=True),
    _Flag("images", str, required=True),
    _Flag("labels", str, required=True),
    _Flag("classes", _parse_int_list, help="comma list of class labels to keep"),
    _Flag("out-h", str, help="CSV of the aligned class-by-cluster table"),
]


def _cmd_eval(parser, ns):
    a = _resolve(parser, ns, _EVAL_FLAGS)
    model = load_model(a.model)
    raw = load_idx_images(a.images)
    labels = load_idx_labels(a.labels)
    data = quantize(raw, model.num_states, labels=labels)
    if a.classes is not None:
        if len(a.classes) != model.num_components:
            raise DimensionMismatchError(
                f"--classes lists {len(a.classes)} labels but the model has "
                f"{model.num_components} components"
            )
        data = filter_by_labels(data, a.classes)
    if model.num_dims != data.num_dims:
        raise DimensionMismatchError(
            f"model expects D={model.num_dims}, data has D={data.num_dims}"
        )
    resp = responsibilities(model, data)
    report = cluster_report(resp, data)
    class_names = a.classes if a.classes is not None else list(range(model.num_components))
    if a.out_h:
        export_histogram_csv(report, class_names, a.out_h)
        print(f"class-by-cluster table -> {a.out_h}")
    print("confusion rows (class -> cluster averages):")
    for cls, row in enumerate(report.confusion):
        print(f"  {class_names[cls]}: " + " ".join(f"{x:.4f}" for x in row))
    print(f"cluster -> class matching: {report.permutation.tolist()}")
    print(f"aligned diagonal mean: {report.diagonal_mean:.6f}")
    return 0


# ----------------------------------------------------------------------- solve

_SOLVE_FLAGS = [
    _Flag("theta", str, required=True, help="comma list forming a simplex vector"),
    _Flag("eps", float, default=0.05),
    _Flag("coupling-weight", float, default=0.5),
]


def _cmd_solve(parser, ns):
    a = _resolve(parser, ns, _SOLVE_FLAGS)
    try:
        theta = validate_simplex([float(t) for t in str(a.theta).split(",")])
    except (ValueError, NegativeEntryError, MassMismatchError) as exc:
        parser.error(f"--theta is not a probability vector: {exc}")
    if a.eps < 0:
        parser.error("--eps must be >= 0")
    spec = CostSpec(epsilon=a.eps, coupling_weight=a.coupling_weight)
    solution = solve_subsystem(theta, spec, SolverConfig())
    print(f"value:        {_vec(solution.value)}")
    print(f"ergodic cost: {solution.ergodic_cost:.12g}")
    print(f"distribution: {_vec(solution.distribution)}")
    print("transition rows:")
    for row in solution.transition:
        print(f"  {_vec(row)}")
    print(f"residuals: hjb {solution.hjb_residual:.3g}, fp {solution.fp_residual:.3g}")
    print(f"policy iterations: {solution.policy_iterations}")
    return 0


def _vec(v):
    return "(" + ", ".join(f"{x:.12g}" for x in v) + ")"


# ----------------------------------------------------------------------- synth

_SYNTH_FLAGS = [
    _Flag("model", str, required=True),
    _Flag("N", int, required=True, help="number of samples to draw"),
    _Flag("seed", int, default=0),
    _Flag("out-images", str, required=True),
    _Flag("out-labels", str, required=True),
]


def _cmd_synth(parser, ns):
    a = _resolve(parser, ns, _SYNTH_FLAGS)
    if a.N < 0:
        parser.error("--N must be >= 0")
    model = load_model(a.model)
    side = math.isqrt(model.num_dims)
    if side * side != model.num_dims:
        raise NotSquareError(f"D = {model.num_dims} is not a perfect square")
    data = synth_generate(model, a.N, a.seed)
    pixels = states_to_bytes(data.samples, model.num_states).reshape(a.N, side, side)
    write_idx_images(pixels, a.out_images)
    write_idx_labels(data.labels, a.out_labels)
    print(f"wrote {a.N} samples ({side}x{side}) -> {a.out_images}, {a.out_labels}")
    return 0


# ---------------------------------------------------------------------- export

_EXPORT_FLAGS = [
    _Flag("model", str, required=True),
    _Flag("side", int, required=True, help="image side; side*side must equal D"),
    _Flag("out-dir", str, required=True),
]


def _cmd_export(parser, ns):
    a = _resolve(parser, ns, _EXPORT_FLAGS)
    if a.side < 1:
        parser.error("--side must be >= 1")
    model = load_model(a.model)
    paths = export_parameter_images(model, a.side, a.out_dir)
    for path in paths:
        print(f"wrote {path}")
    return 0


# ------------------------------------------------------------------ dispatcher

_COMMANDS = {
    "fit": (_cmd_fit, _FIT_FLAGS, "fit a mixture to IDX images"),
    "eval": (_cmd_eval, _EVAL_FLAGS, "score a model's clustering against labels"),
    "solve": (_cmd_solve, _SOLVE_FLAGS, "solve one subsystem and print it"),
    "synth": (_cmd_synth, _SYNTH_FLAGS, "sample a dataset from a model"),
    "export": (_cmd_export, _EXPORT_FLAGS, "write component parameter images"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="mfgmix", description=__doc__)
    parser.add_argument("--version", action="version", version=f"mfgmix {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, (_, flags, help_text) in _COMMANDS.items():
        sub = subs.add_parser(name, help=help_text)
        _install_flags(sub, flags)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        handler = _COMMANDS[ns.command][0]
        return handler(parser, ns)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else USAGE_EXIT
    except _SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return SOLVER_EXIT
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DATA_EXIT


if __name__ == "__main__":
    sys.exit(main())

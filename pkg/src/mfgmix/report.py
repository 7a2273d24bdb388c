"""Clusterization scoring and figure-data exports.

The class-by-cluster matrix H averages responsibilities over the samples of
each class; a well-separated clustering puts the large entries on the
diagonal once clusters are matched to classes by optimal assignment.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import EmptyClassError, IoFailureError, NotSquareError


@dataclass(frozen=True)
class ClusterReport:
    """Confusion table H (rows: classes, columns: clusters), the cluster-to-
    class matching, the mean aligned diagonal, and per-class sample counts."""

    confusion: np.ndarray
    permutation: np.ndarray
    diagonal_mean: float
    class_sizes: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.confusion, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1]:
            raise ValueError("confusion table must be square")
        if np.max(np.abs(h.sum(axis=1) - 1.0)) > 1e-10:
            raise ValueError("confusion rows must each sum to 1")
        perm = np.asarray(self.permutation, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(h.shape[0])):
            raise ValueError("permutation must be a bijection on 0..K-1")
        object.__setattr__(self, "confusion", h)
        object.__setattr__(self, "permutation", perm)


def confusion_matrix(resp, data):
    """H[k, j]: mean responsibility for cluster j over the samples of class k.

    Labels must already be remapped to 0..K-1 (K = number of clusters); every
    row sums to one because responsibility rows do.
    """
    if data.labels is None:
        raise ValueError("confusion matrix needs labeled data")
    gamma = resp.gamma
    n, k = gamma.shape
    if data.num_samples != n:
        raise ValueError("responsibilities and data disagree on sample count")
    if data.labels.size and (data.labels.min() < 0 or data.labels.max() >= k):
        raise ValueError(f"labels must be remapped to 0..{k - 1}")
    h = np.empty((k, k))
    for cls in range(k):
        mask = data.labels == cls
        if not mask.any():
            raise EmptyClassError(f"class {cls} has no samples")
        h[cls] = gamma[mask].mean(axis=0)
    return h


def _assignment_value(h):
    rows, cols = linear_sum_assignment(-h)
    return float(h[rows, cols].sum())


def align_clusters(confusion):
    """Cluster-to-class matching that maximizes the matched total of H.

    Returns perm with perm[j] = class assigned to cluster j, maximizing
    sum_j H[perm[j], j] by optimal assignment. Among maximizers, the
    lexicographically smallest perm is selected by greedily fixing each
    cluster to the smallest class that still admits an optimal completion.
    """
    h = np.asarray(confusion, dtype=float)
    k = h.shape[0]
    best_total = _assignment_value(h)
    tol = 1e-12 * max(1.0, k)
    perm = np.empty(k, dtype=np.int64)
    free_classes = list(range(k))
    fixed_value = 0.0
    for j in range(k):
        remaining_clusters = list(range(j + 1, k))
        for c in list(free_classes):
            rest = [x for x in free_classes if x != c]
            completion = (
                _assignment_value(h[np.ix_(rest, remaining_clusters)])
                if remaining_clusters
                else 0.0
            )
            if fixed_value + h[c, j] + completion >= best_total - tol:
                perm[j] = c
                fixed_value += h[c, j]
                free_classes.remove(c)
                break
        else:
            raise RuntimeError("assignment refinement failed to place a cluster")
    return perm


def aligned_confusion(confusion, permutation):
    """Reorder columns so the cluster matched to class c sits in column c."""
    h = np.asarray(confusion, dtype=float)
    perm = np.asarray(permutation, dtype=np.int64)
    inverse = np.empty_like(perm)
    inverse[perm] = np.arange(perm.size)
    return h[:, inverse]


def cluster_report(resp, data):
    """Confusion matrix, alignment, and summary statistics in one pass."""
    h = confusion_matrix(resp, data)
    perm = align_clusters(h)
    aligned = aligned_confusion(h, perm)
    sizes = np.bincount(data.labels, minlength=h.shape[0])
    return ClusterReport(
        confusion=h,
        permutation=perm,
        diagonal_mean=float(np.mean(np.diag(aligned))),
        class_sizes=sizes,
    )


# ---------------------------------------------------------------- file exports


def export_parameter_images(model, side, destination):
    """Write one grey-scale PGM per component: the expected normalized level.

    Pixel (k, d) is round(255 * sum_i (i / (S-1)) * components[k, d, i]); for
    two-state models this is just the Bernoulli parameter scaled to bytes.
    """
    if model.num_dims != side * side:
        raise NotSquareError(f"D = {model.num_dims} is not {side}x{side}")
    levels = np.arange(model.num_states) / (model.num_states - 1)
    grey = np.clip(np.rint(255.0 * (model.components @ levels)), 0, 255).astype(np.uint8)
    out_dir = Path(destination)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for k in range(model.num_components):
            path = out_dir / f"component_{k:02d}.pgm"
            write_pgm(grey[k].reshape(side, side), path)
            paths.append(path)
    except OSError as exc:
        raise IoFailureError(f"writing parameter images failed: {exc}") from exc
    return paths


def write_pgm(image, destination):
    """Binary (P5) grey-scale PGM with maxval 255."""
    image = np.asarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    try:
        with open(destination, "wb") as fh:
            fh.write(header + image.tobytes())
    except OSError as exc:
        raise IoFailureError(f"writing PGM failed: {exc}") from exc


def read_pgm(source):
    """Parse a binary (P5) PGM written by write_pgm."""
    with open(source, "rb") as fh:
        raw = fh.read()
    fields = raw.split(maxsplit=4)
    if fields[0] != b"P5":
        raise ValueError("not a binary PGM file")
    cols, rows, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError("only maxval 255 is supported")
    payload = raw[raw.index(fields[3]) + len(fields[3]) + 1:]
    return np.frombuffer(payload[: rows * cols], dtype=np.uint8).reshape(rows, cols)


def export_histogram_csv(report, class_names, destination):
    """CSV of the aligned confusion rows, one line per class.

    Header is class,cluster_0,...,cluster_{K-1}; values carry 17 significant
    digits so the table round-trips exactly.
    """
    k = report.confusion.shape[0]
    names = [str(c) for c in class_names]
    if len(names) != k:
        raise ValueError(f"need {k} class names, got {len(names)}")
    aligned = aligned_confusion(report.confusion, report.permutation)
    lines = ["class," + ",".join(f"cluster_{j}" for j in range(k))]
    for cls in range(k):
        row = ",".join(format(x, ".17g") for x in aligned[cls])
        lines.append(f"{names[cls]},{row}")
    text = "\n".join(lines) + "\n"
    try:
        if hasattr(destination, "write"):
            destination.write(text)
        else:
            with open(destination, "w", encoding="utf-8") as fh:
                fh.write(text)
    except OSError as exc:
        raise IoFailureError(f"writing histogram CSV failed: {exc}") from exc

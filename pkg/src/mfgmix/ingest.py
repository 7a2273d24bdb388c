"""IDX image/label loading, grey-level quantization, and synthetic sampling.

IDX is the big-endian binary container used by the classic digit databases:
a 32-bit magic number, one 32-bit unsigned size per dimension, then the
payload as unsigned bytes. Images use magic 0x00000803 (three dimensions),
labels 0x00000801 (one dimension). Gzip-compressed files are inflated
transparently when the stream starts with the gzip magic 0x1f 0x8b.
"""
from __future__ import annotations

import gzip
import warnings
from dataclasses import dataclass

import numpy as np

from .core import Dataset
from .errors import (
    BadMagicError,
    DimensionOverflowError,
    TruncatedFileError,
    UnknownLabelWarning,
)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MAX_ELEMENTS = 1 << 32  # refuse headers that cannot describe a real desk-scale file


@dataclass(frozen=True)
class RawImageSet:
    """Unquantized images: N rows*cols byte vectors in 0-255."""

    pixels: np.ndarray  # (N, rows*cols) uint8
    rows: int
    cols: int
    magic: int = IMAGE_MAGIC

    def __post_init__(self):
        p = np.asarray(self.pixels, dtype=np.uint8)
        if p.ndim != 2 or p.shape[1] != self.rows * self.cols:
            raise ValueError(
                f"pixels must be (N, {self.rows * self.cols}), got shape {p.shape}"
            )
        object.__setattr__(self, "pixels", p)

    @property
    def num_images(self):
        return self.pixels.shape[0]


def _read_stream(source):
    if hasattr(source, "read"):
        raw = source.read()
    else:
        with open(source, "rb") as fh:
            raw = fh.read()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_header(raw, expected_magic, ndims, what):
    header = 4 + 4 * ndims
    if len(raw) < header:
        raise TruncatedFileError(f"{what}: header needs {header} bytes, stream has {len(raw)}")
    magic = int.from_bytes(raw[0:4], "big")
    if magic != expected_magic:
        raise BadMagicError(f"{what}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    dims = [int.from_bytes(raw[4 + 4 * i: 8 + 4 * i], "big") for i in range(ndims)]
    total = 1
    for d in dims:
        total *= d
    if total > MAX_ELEMENTS:
        raise DimensionOverflowError(f"{what}: header declares {total} elements")
    if len(raw) - header < total:
        raise TruncatedFileError(
            f"{what}: payload holds {len(raw) - header} bytes, header declares {total}"
        )
    if len(raw) - header > total:
        raise TruncatedFileError(
            f"{what}: {len(raw) - header - total} trailing bytes after declared payload"
        )
    return dims, raw[header:]


def load_idx_images(source):
    """Parse an IDX image file (path, file object, or gzip of either)."""
    raw = _read_stream(source)
    (n, rows, cols), payload = _parse_header(raw, IMAGE_MAGIC, 3, "image file")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(n, rows * cols)
    return RawImageSet(pixels=pixels, rows=rows, cols=cols)


def load_idx_labels(source):
    """Parse an IDX label file into an int array."""
    raw = _read_stream(source)
    (n,), payload = _parse_header(raw, LABEL_MAGIC, 1, "label file")
    return np.frombuffer(payload, dtype=np.uint8).astype(np.int64)


def write_idx_images(images, destination):
    """Write images ((N, rows, cols) or a RawImageSet) as IDX bytes."""
    if isinstance(images, RawImageSet):
        pixels = images.pixels.reshape(images.num_images, images.rows, images.cols)
    else:
        pixels = np.asarray(images, dtype=np.uint8)
        if pixels.ndim != 3:
            raise ValueError("images must be (N, rows, cols)")
    n, rows, cols = pixels.shape
    blob = (
        IMAGE_MAGIC.to_bytes(4, "big")
        + n.to_bytes(4, "big")
        + rows.to_bytes(4, "big")
        + cols.to_bytes(4, "big")
        + pixels.tobytes()
    )
    _write_bytes(blob, destination)


def write_idx_labels(labels, destination):
    labels = np.asarray(labels)
    if labels.ndim != 1 or (labels.size and (labels.min() < 0 or labels.max() > 255)):
        raise ValueError("labels must be a 1-D array of bytes")
    blob = LABEL_MAGIC.to_bytes(4, "big") + labels.size.to_bytes(4, "big") + labels.astype(np.uint8).tobytes()
    _write_bytes(blob, destination)


def _write_bytes(blob, destination):
    if hasattr(destination, "write"):
        destination.write(blob)
    else:
        with open(destination, "wb") as fh:
            fh.write(blob)


def quantize(raw, num_states, labels=None):
    """Quantize byte images into a categorical dataset with uniform bins.

    state = floor(pixel * S / 256); for S = 2 this puts pixels >= 128 (the
    ones whose normalized value exceeds one half) in state 1, the white state.
    """
    if num_states < 2:
        raise ValueError("need at least two states")
    states = (raw.pixels.astype(np.int64) * num_states) // 256
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (raw.num_images,):
            raise ValueError("labels must be one integer per image")
    return Dataset(samples=states, num_states=num_states, labels=labels)


def states_to_bytes(samples, num_states):
    """Map states back to bin-center bytes, so re-quantizing is the identity."""
    if num_states < 2 or num_states > 256:
        raise ValueError("byte images can represent 2..256 states")
    samples = np.asarray(samples, dtype=np.int64)
    return (((2 * samples + 1) * 256) // (2 * num_states)).astype(np.uint8)


def filter_by_labels(data, keep):
    """Retain samples whose label occurs in `keep`, in the original order.

    Labels are remapped onto 0..K-1 following the order of `keep`. A label in
    `keep` that never occurs in the data only triggers a warning.
    """
    if data.labels is None:
        raise ValueError("dataset carries no labels to filter on")
    keep = [int(k) for k in keep]
    if len(set(keep)) != len(keep):
        raise ValueError("duplicate labels in keep list")
    present = set(np.unique(data.labels).tolist())
    for lab in keep:
        if lab not in present:
            warnings.warn(f"label {lab} does not occur in the data", UnknownLabelWarning)
    if not keep:
        warnings.warn("empty keep list selects no samples", UnknownLabelWarning)
    mapping = {lab: i for i, lab in enumerate(keep)}
    mask = np.isin(data.labels, keep)
    remapped = np.array([mapping[int(l)] for l in data.labels[mask]], dtype=np.int64)
    return Dataset(samples=data.samples[mask], num_states=data.num_states, labels=remapped)


def synth_generate(model, num_samples, seed):
    """Draw samples from a mixture: component by weight, coordinates i.i.d.

    Sampling is inverse-CDF on cumulative probabilities with a seeded PCG64
    generator, so fixed seeds reproduce bitwise. Labels record the generating
    component.
    """
    rng = np.random.default_rng(seed)
    k, d, s = model.components.shape
    comp_idx = np.searchsorted(np.cumsum(model.weights), rng.random(num_samples), side="right")
    comp_idx = np.minimum(comp_idx, k - 1).astype(np.int64)
    u = rng.random((num_samples, d))
    cdf = model.components.cumsum(axis=2)
    states = np.empty((num_samples, d), dtype=np.int64)
    for ki in range(k):
        mask = comp_idx == ki
        if mask.any():
            states[mask] = (u[mask][:, :, None] > cdf[ki][None, :, :]).sum(axis=2)
    np.minimum(states, s - 1, out=states)
    return Dataset(samples=states, num_states=s, labels=comp_idx)

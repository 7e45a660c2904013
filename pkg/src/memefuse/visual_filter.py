"""Feature-map ingestion and the text-conditioned image encoding filter.

Feature maps arrive as MFM1 files: magic b"MFM1", two little-endian
uint32 extents (rows, cols), then rows*cols little-endian float32 values
in row-major order.  Values are widened to float64 on load.  The
reference extractor emits 49 regions x 512 channels.

The filter scores every region against the segment text: an affinity
matrix between hidden states and regions, a per-region attention over
words, and a cosine-distance relevance that scales each region row.
Regions whose features align with the attended text are suppressed;
orthogonal regions pass through unchanged.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import tensorcore as tc
from .errors import ParseError, ShapeError

MAGIC = b"MFM1"
DEFAULT_ROWS = 49
DEFAULT_COLS = 512


def load_feature_map(path, rows: int = DEFAULT_ROWS, cols: int = DEFAULT_COLS) -> tc.Tensor:
    """Read an MFM1 file and return its (rows, cols) float64 tensor."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read feature map {path}: {exc}") from exc
    if len(blob) < 12:
        raise ParseError(f"{path}: truncated header ({len(blob)} bytes)")
    if blob[:4] != MAGIC:
        raise ParseError(f"{path}: magic mismatch, got {blob[:4]!r}")
    got_rows, got_cols = struct.unpack_from("<II", blob, 4)
    if (got_rows, got_cols) != (rows, cols):
        raise ParseError(
            f"{path}: extents {got_rows}x{got_cols}, expected {rows}x{cols}"
        )
    payload = blob[12:]
    expected = rows * cols * 4
    if len(payload) != expected:
        raise ParseError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    if not np.isfinite(values).all():
        raise ParseError(f"{path}: non-finite entries in payload")
    return tc.Tensor(values.reshape(rows, cols))


def save_feature_map(path, values: np.ndarray):
    """Write a feature map in MFM1 layout (float32 payload)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"feature map must be 2-d, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.astype("<f4").tobytes())


class FilterParams:
    """The square correlation matrix scoring word/region affinity."""

    def __init__(self, affinity: tc.Tensor):
        if affinity.shape[0] != affinity.shape[1]:
            raise ShapeError(f"affinity matrix must be square, got {affinity.shape}")
        self.affinity = affinity

    @classmethod
    def init(cls, rng, width: int, std: float = 0.02):
        return cls(tc.Tensor(rng.normal(0.0, std, size=(width, width)),
                             requires_grad=True, name="filter.affinity"))

    def named(self):
        return {"filter.affinity": self.affinity}


@dataclass
class FilteredVisual:
    """Filtered regions plus the inspection extras the filter computed."""

    u: tc.Tensor          # (m, width) relevance-scaled regions
    relevance: tc.Tensor  # (m, 1) in [0, 2]; 0 = redundant with text
    alpha: tc.Tensor      # (n, m) word attention, columns sum to 1


def image_encoding_filter(h: tc.Tensor, f: tc.Tensor,
                          params: FilterParams) -> FilteredVisual:
    """Scale each region of `f` by its cosine distance to the attended text.

    affinity  = tanh(H . W_b . F^T)                      (n, m)
    alpha     = per-region softmax of affinity over words (columns sum 1)
    attended  = alpha^T . H                               (m, width)
    relevance = 1 - cosine(region, attended region text)  (m, 1)
    u         = relevance-scaled region rows              (m, width)
    """
    width = params.affinity.shape[0]
    if h.shape[1] != width:
        raise ShapeError(
            f"filter expects hidden width {width}, got {h.shape[1]}"
        )
    if f.shape[1] != width:
        raise ShapeError(
            f"filter expects feature width {width}, got {f.shape[1]}"
        )
    affinity = tc.tanh(tc.matmul(tc.matmul(h, params.affinity), tc.transpose(f)))
    alpha = tc.transpose(tc.softmax_rows(tc.transpose(affinity)))
    attended = tc.matmul(tc.transpose(alpha), h)
    relevance = tc.add_scalar(tc.scale(tc.row_cosine(f, attended), -1.0), 1.0)
    u = tc.scale_rows(f, relevance)
    return FilteredVisual(u=u, relevance=relevance, alpha=alpha)

"""k-hop structured self-attention over the rows of a feature matrix.

Used three times in the pipeline: over text hidden states, over filtered
visual regions, and over the stacked per-segment representations.  Each
hop is one softmax distribution over input rows; k hops give k attended
feature vectors.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensorcore as tc
from .errors import ShapeError


class MhaParams:
    """Score parameters: W1 (d, width) and W2 (k, d), plus a role tag."""

    def __init__(self, w1: tc.Tensor, w2: tc.Tensor, role: str):
        if w2.shape[1] != w1.shape[0]:
            raise ShapeError(
                f"attention params disagree: W2 {w2.shape} vs W1 {w1.shape}"
            )
        self.w1 = w1
        self.w2 = w2
        self.role = role

    @property
    def hops(self):
        return self.w2.shape[0]

    @property
    def width(self):
        return self.w1.shape[1]

    @classmethod
    def init(cls, rng, width: int, hidden: int, hops: int, role: str,
             std: float = 0.02):
        w1 = tc.Tensor(rng.normal(0.0, std, size=(hidden, width)),
                       requires_grad=True, name=f"attn.{role}.w1")
        w2 = tc.Tensor(rng.normal(0.0, std, size=(hops, hidden)),
                       requires_grad=True, name=f"attn.{role}.w2")
        return cls(w1, w2, role)

    def named(self):
        return {f"attn.{self.role}.w1": self.w1, f"attn.{self.role}.w2": self.w2}


@dataclass
class AttendedFeatures:
    """A: (k, rows) row-stochastic hop weights; M = A @ input: (k, width)."""

    a: tc.Tensor
    m: tc.Tensor


def multihop_attend(x: tc.Tensor, params: MhaParams) -> AttendedFeatures:
    """A = softmax_rows(W2 tanh(W1 X^T)); M = A X."""
    if x.shape[1] != params.width:
        raise ShapeError(
            f"attention '{params.role}' expects width {params.width}, "
            f"got {x.shape[1]}"
        )
    scores = tc.matmul(params.w2, tc.tanh(tc.matmul(params.w1, tc.transpose(x))))
    a = tc.softmax_rows(scores)
    m = tc.matmul(a, x)
    return AttendedFeatures(a=a, m=m)

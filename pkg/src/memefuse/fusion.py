"""Attentive fusion of the text and visual hop matrices into one vector.

Three stages per segment: (1) a weight-shared dense tower scores each
modality from its mean hop vector, and the pair of scores is softmaxed
into (s_text, s_visual); (2) each modality's hops are scaled by
1 + its score and stacked; (3) a second attention over the stacked rows
produces the mixing distribution gamma and the fused 512-vector.
The row attention exists to damp repeated hop features from very short
segments.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensorcore as tc
from .errors import ShapeError

TOWER_WIDTHS = (256, 64, 8, 1)


class AtmfParams:
    """Shared modality tower, row projection, and row-scoring vector."""

    def __init__(self, tower, proj: tc.Tensor, score: tc.Tensor):
        if tower[-1][0].shape[1] != 1:
            raise ShapeError("modality tower must end in a single scalar unit")
        if proj.shape[0] != proj.shape[1]:
            raise ShapeError(f"row projection must be square, got {proj.shape}")
        self.tower = tower  # [(w, b), ...] applied left to right
        self.proj = proj    # (width, width)
        self.score = score  # (width, 1)

    @classmethod
    def init(cls, rng, width: int, tower_widths=TOWER_WIDTHS, std: float = 0.02):
        tower = []
        fan_in = width
        for i, out in enumerate(tower_widths):
            w = tc.Tensor(rng.normal(0.0, std, size=(fan_in, out)),
                          requires_grad=True, name=f"atmf.tower.{i}.w")
            b = tc.Tensor(rng.normal(0.0, std, size=(1, out)),
                          requires_grad=True, name=f"atmf.tower.{i}.b")
            tower.append((w, b))
            fan_in = out
        proj = tc.Tensor(rng.normal(0.0, std, size=(width, width)),
                         requires_grad=True, name="atmf.proj")
        score = tc.Tensor(rng.normal(0.0, std, size=(width, 1)),
                          requires_grad=True, name="atmf.score")
        return cls(tower, proj, score)

    def named(self):
        out = {}
        for i, (w, b) in enumerate(self.tower):
            out[f"atmf.tower.{i}.w"] = w
            out[f"atmf.tower.{i}.b"] = b
        out["atmf.proj"] = self.proj
        out["atmf.score"] = self.score
        return out

    def run_tower(self, vec: tc.Tensor) -> tc.Tensor:
        """(1, width) -> (1, 1); tanh between layers, linear final scalar."""
        cur = vec
        last = len(self.tower) - 1
        for i, (w, b) in enumerate(self.tower):
            cur = tc.add(tc.matmul(cur, w), b)
            if i < last:
                cur = tc.tanh(cur)
        return cur


@dataclass
class FusedSegment:
    """Fused vector plus the attention internals kept for inspection."""

    x: tc.Tensor       # (1, width)
    s_text: tc.Tensor  # (1, 1), in (0, 1)
    s_visual: tc.Tensor
    gamma: tc.Tensor   # (1, 2k) distribution over stacked hop rows


def atmf_fuse(m: tc.Tensor, n: tc.Tensor, params: AtmfParams) -> FusedSegment:
    """Fuse text hops `m` and visual hops `n` (both (k, width))."""
    if m.shape != n.shape:
        raise ShapeError(f"hop matrices disagree: {m.shape} vs {n.shape}")
    z_text = params.run_tower(tc.mean_rows(m))
    z_visual = params.run_tower(tc.mean_rows(n))
    # pairwise softmax written as sigmoid of the score difference
    s_text = tc.sigmoid(tc.sub(z_text, z_visual))
    s_visual = tc.sigmoid(tc.sub(z_visual, z_text))
    q = tc.concat(
        [tc.scalar_mul(m, tc.add_scalar(s_text, 1.0)),
         tc.scalar_mul(n, tc.add_scalar(s_visual, 1.0))],
        axis=0,
    )
    p = tc.tanh(tc.matmul(q, tc.transpose(params.proj)))
    gamma = tc.softmax_rows(tc.transpose(tc.matmul(p, params.score)))
    x = tc.matmul(gamma, q)
    return FusedSegment(x=x, s_text=s_text, s_visual=s_visual, gamma=gamma)

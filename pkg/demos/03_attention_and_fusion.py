#!/usr/bin/env python3
"""Multi-hop attention and attentive fusion, inspected numerically.

Each attention hop is a distribution over input rows; fusion scores the
two modalities, scales them residually, and mixes the stacked hop rows
through a second attention.
"""

import numpy as np

from memefuse import tensorcore as tc
from memefuse.attention import MhaParams, multihop_attend
from memefuse.fusion import AtmfParams, atmf_fuse

rng = np.random.default_rng(7)
width = 8

print("== multi-hop attention ==")
x = tc.Tensor(rng.normal(size=(5, width)))
params = MhaParams.init(rng, width=width, hidden=6, hops=3, role="text", std=0.8)
out = multihop_attend(x, params)
print("hop weight matrix A (rows are distributions over the 5 inputs):")
for hop in out.a.data:
    print("  ", np.round(hop, 3), " sum", hop.sum())
print("attended features shape:", out.m.shape)

uniform = MhaParams(params.w1, tc.Tensor(np.zeros((2, 6)), requires_grad=True),
                    "text")
flat = multihop_attend(x, uniform)
print("zero score weights give uniform hops:", np.round(flat.a.data[0], 3))

print()
print("== attentive fusion ==")
fusion = AtmfParams.init(rng, width, tower_widths=(6, 1), std=0.5)
m = tc.Tensor(rng.normal(size=(3, width)))          # text hops
n = tc.Tensor(rng.normal(size=(3, width)) * 3.0)    # louder visual hops
fused = atmf_fuse(m, n, fusion)
print(f"modality scores: s_text={fused.s_text.item():.4f} "
      f"s_visual={fused.s_visual.item():.4f} (sum "
      f"{fused.s_text.item() + fused.s_visual.item():.1f})")
print("gamma over 2k stacked hop rows:", np.round(fused.gamma.data, 3))
print("fused vector shape:", fused.x.shape)

same = atmf_fuse(m, m, fusion)
print("identical modalities split evenly:", same.s_text.item(),
      same.s_visual.item())

swapped = atmf_fuse(n, m, fusion)
print("swapping modalities swaps the scores:",
      f"{swapped.s_text.item():.4f} / {swapped.s_visual.item():.4f}")

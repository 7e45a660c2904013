#!/usr/bin/env python3
"""From raw segment text to filtered visual regions.

Shows tokenization, trainable embeddings with deterministic OOV rows, the
two-layer BiLSTM encoding, and how the image encoding filter suppresses
regions that look like the text while passing orthogonal ones through.
"""

import numpy as np

from memefuse import tensorcore as tc
from memefuse.embeddings import EmbeddingTable, embed_segment, tokenize
from memefuse.text_encoder import LstmParams, bilstm_encode
from memefuse.visual_filter import FilterParams, image_encoding_filter

rng = np.random.default_rng(42)

print("== tokenize ==")
for text in ("SMILE MORE!", "don't panic"):
    print(f"{text!r} -> {tokenize(text)}")

print()
print("== embeddings (every token OOV here, rows are seeded by token) ==")
table = EmbeddingTable(dim=10, oov_seed=1)
tokens = tokenize("smile more !")
emb = embed_segment(tokens, table)
print("segment embedding shape:", emb.shape)
again = embed_segment(tokens, table)
print("same token, same row:", bool((emb.data == again.data).all()))

print()
print("== BiLSTM encoding ==")
lstm = LstmParams.init(rng, input_dim=10, units=4, std=0.3)
hidden = bilstm_encode(emb, lstm)
print("hidden matrix shape:", hidden.shape, "(tokens x 2*units)")

print()
print("== image encoding filter ==")
# craft regions: one parallel to the attended text, one orthogonal, two random
width = hidden.shape[1]
attended_direction = hidden.data.mean(axis=0)
orthogonal = np.zeros(width)
orthogonal[0], orthogonal[1] = attended_direction[1], -attended_direction[0]
regions = np.vstack([
    2.0 * attended_direction,
    orthogonal,
    rng.uniform(0, 1, size=(2, width)),
])
params = FilterParams(tc.Tensor(np.zeros((width, width)), requires_grad=True))
out = image_encoding_filter(hidden, tc.Tensor(regions), params)
print("per-region relevance (0 = redundant with text, 1 = orthogonal):")
for j, r in enumerate(out.relevance.data.reshape(-1)):
    print(f"  region {j}: {r:.4f}")
print("alpha columns sum to:", out.alpha.data.sum(axis=0))
print("filtered region 0 norm:", np.linalg.norm(out.u.data[0]),
      " (suppressed)")
print("filtered region 1 norm:", np.linalg.norm(out.u.data[1]),
      "vs raw", np.linalg.norm(regions[1]), " (passes through)")

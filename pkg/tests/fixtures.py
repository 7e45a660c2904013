"""Synthetic meme fixtures with planted label rules.

Desk-scale stand-ins for the real corpus: random feature maps, short
segments drawn from a closed vocabulary, and labels that are a pure
function of planted cue words, so a working model can overfit them.
"""

import numpy as np

from memefuse.data import AFFECTS, MemeSample, TaskLabelSet, save_dataset
from memefuse.embeddings import EmbeddingTable
from memefuse.model import ModelConfig
from memefuse.text_encoder import GATE_NAMES
from memefuse.visual_filter import save_feature_map

FILLERS = ["the", "a", "when", "you", "see", "it", "me", "my", "cat",
           "monday", "face", "again", "that", "look"]
SENTIMENT_CUES = {"good": 2, "bad": 0}          # otherwise neutral (1)
AFFECT_CUES = {"humor": "lol", "sarcasm": "sure",
               "offense": "ugh", "motivation": "rise"}


def fixture_config() -> ModelConfig:
    return ModelConfig(emb_dim=10, lstm_units=4, regions=4, hops_unimodal=2,
                       attn_hidden_unimodal=6, hops_segment=2,
                       attn_hidden_segment=4, tower_widths=(6, 1))


def fixture_table(seed=0) -> EmbeddingTable:
    """Random trainable rows for every word the fixture can emit."""
    rng = np.random.default_rng(seed)
    words = FILLERS + list(SENTIMENT_CUES) + list(AFFECT_CUES.values())
    rows = {w: rng.normal(0.0, 0.5, size=10) for w in words}
    return EmbeddingTable.from_rows(rows, dim=10, oov_seed=seed)


def _segment(rng, extra=None):
    words = list(rng.choice(FILLERS, size=rng.integers(3, 6)))
    if extra is not None:
        words.insert(int(rng.integers(0, len(words) + 1)), extra)
    return " ".join(words)


def build_fixture(out_dir, n_memes=24, seed=0, config=None):
    """Write `n_memes` synthetic memes (jsonl + feature maps) to out_dir.

    Sentiment cycles negative/neutral/positive via cue words; each affect
    bit is an independent coin whose cue word is planted when set.
    Returns the dataset path.
    """
    config = config or fixture_config()
    rng = np.random.default_rng(seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    samples = []
    for i in range(n_memes):
        sentiment = i % 3
        cue = {0: "bad", 2: "good"}.get(sentiment)
        bits = {a: int(rng.integers(0, 2)) for a in AFFECTS}
        levels = {}
        for a in AFFECTS:
            top = 3 if a != "motivation" else 1
            levels[a] = int(rng.integers(1, top + 1)) if bits[a] else 0
        segments = [_segment(rng, cue)]
        for a in AFFECTS:
            if bits[a]:
                segments.append(_segment(rng, AFFECT_CUES[a]))
        if len(segments) == 1:
            segments.append(_segment(rng))
        rng.shuffle(segments)
        segments = segments[:3]
        # cue words must survive the truncation for labels to stay learnable
        kept = " ".join(segments)
        for a in AFFECTS:
            if bits[a] and AFFECT_CUES[a] not in kept:
                segments[-1] = segments[-1] + " " + AFFECT_CUES[a]
        if cue and cue not in " ".join(segments):
            segments[0] = segments[0] + " " + cue
        fmap = rng.uniform(0.0, 1.0, size=(config.regions, config.width))
        fpath = out_dir / f"meme{i:03d}.mfm"
        save_feature_map(fpath, fmap)
        labels = TaskLabelSet(sentiment=sentiment, bits=bits, levels=levels)
        samples.append(MemeSample(f"meme{i:03d}", segments, str(fpath), labels))
    dataset = out_dir / "fixture.jsonl"
    save_dataset(samples, dataset)
    return dataset


def extract_arrays(params):
    """Dump model weights into the plain-python layout oracles.naive_forward
    expects."""

    def gates(cell):
        return {g: (cell.gates[g][0].data.tolist(),
                    cell.gates[g][1].data.tolist(),
                    cell.gates[g][2].data.reshape(-1).tolist())
                for g in GATE_NAMES}

    def attn(p):
        return (p.w1.data.tolist(), p.w2.data.tolist())

    return {
        "units": params.config.lstm_units,
        "lstm": [(gates(fwd), gates(bwd)) for fwd, bwd in params.lstm.layers],
        "affinity": params.filter.affinity.data.tolist(),
        "attn_text": attn(params.attn_text),
        "attn_visual": attn(params.attn_visual),
        "attn_segment": attn(params.attn_segment),
        "tower": [(w.data.tolist(), b.data.reshape(-1).tolist())
                  for w, b in params.atmf.tower],
        "proj": params.atmf.proj.data.tolist(),
        "score": params.atmf.score.data.reshape(-1).tolist(),
        "heads": {head: (w.data.tolist(), b.data.reshape(-1).tolist())
                  for head, (w, b) in params.heads.items()},
    }

"""End-to-end model: per-segment encode/filter/attend/fuse, segment-level
attention, per-task softmax heads, weighted NLL, Adam training, and
checkpoint IO.

Geometry is configurable so the verification suite can run the whole
pipeline at desk scale; defaults match the full-size system (200-d
embeddings, 256 LSTM units, 49 regions, 30/10 hops).
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass

import numpy as np

from . import tensorcore as tc
from .attention import MhaParams, multihop_attend
from .data import TaskSpec, default_class_weights, evaluate
from .embeddings import EmbeddingTable, embed_segment, tokenize
from .errors import ConfigError, ContractError, NumericError, ParseError
from .fusion import AtmfParams, atmf_fuse
from .text_encoder import LstmParams, bilstm_encode
from .visual_filter import FilterParams, image_encoding_filter, load_feature_map

log = logging.getLogger("memefuse.model")

CHECKPOINT_MAGIC = b"MFCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    """Network geometry.  `width` (= 2 * lstm_units) must equal the
    feature-map channel count so text and regions share one space."""

    emb_dim: int = 200
    lstm_units: int = 256
    regions: int = 49
    hops_unimodal: int = 30
    attn_hidden_unimodal: int = 350
    hops_segment: int = 10
    attn_hidden_segment: int = 100
    tower_widths: tuple = (256, 64, 8, 1)

    @property
    def width(self) -> int:
        return 2 * self.lstm_units

    @property
    def head_input(self) -> int:
        return self.hops_segment * self.width

    @classmethod
    def tiny(cls):
        """Reduced widths for gradient checks and oracle tests."""
        return cls(emb_dim=6, lstm_units=3, regions=4, hops_unimodal=2,
                   attn_hidden_unimodal=4, hops_segment=2,
                   attn_hidden_segment=3, tower_widths=(4, 1))

    def to_dict(self):
        d = asdict(self)
        d["tower_widths"] = list(self.tower_widths)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["tower_widths"] = tuple(d.get("tower_widths", (256, 64, 8, 1)))
        return cls(**d)


@dataclass
class TrainConfig:
    batch_size: int = 8
    epochs: int = 200
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decrement: float = 0.0001
    lr_decay_every: int = 10000
    lr_floor: float = 1e-4
    init_std: float = 0.02
    seed: int = 0
    class_weights: dict | None = None  # head -> per-class weights
    stop_at_accuracy: float | None = None

    def __post_init__(self):
        for name in ("batch_size", "epochs", "lr", "lr_decay_every"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


class ModelParams:
    """Every trainable tensor of one model, addressable by name."""

    def __init__(self, config: ModelConfig, spec: TaskSpec,
                 table: EmbeddingTable, lstm, filt, attn_text, attn_visual,
                 attn_segment, atmf, heads):
        self.config = config
        self.spec = spec
        self.table = table
        self.lstm = lstm
        self.filter = filt
        self.attn_text = attn_text
        self.attn_visual = attn_visual
        self.attn_segment = attn_segment
        self.atmf = atmf
        self.heads = heads  # head name -> (w, b)

    def named(self) -> dict[str, tc.Tensor]:
        out = {}
        out.update(self.table.trainable())
        out.update(self.lstm.named())
        out.update(self.filter.named())
        out.update(self.attn_text.named())
        out.update(self.attn_visual.named())
        out.update(self.attn_segment.named())
        out.update(self.atmf.named())
        for head, (w, b) in self.heads.items():
            out[f"head.{head}.w"] = w
            out[f"head.{head}.b"] = b
        return out

    def count(self) -> int:
        return sum(t.size for t in self.named().values())

    def zero_grads(self):
        for t in self.named().values():
            t.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named().items()}

    def restore(self, snap: dict[str, np.ndarray]):
        named = self.named()
        for name, values in snap.items():
            if name.startswith("embedding.oov.") and name not in named:
                self.table.restore_oov_row(name[len("embedding.oov."):], values)
            else:
                named[name].data[:] = values


def init_params(config: ModelConfig, spec: TaskSpec, table: EmbeddingTable,
                seed: int = 0, std: float = 0.02) -> ModelParams:
    """Gaussian N(0, std^2) everywhere except forget-gate biases (1.0) and
    head biases (0).  Deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    if table.dim != config.emb_dim:
        raise ConfigError(
            f"embedding table dim {table.dim} != config emb_dim {config.emb_dim}"
        )
    width = config.width
    lstm = LstmParams.init(rng, config.emb_dim, config.lstm_units, std=std)
    filt = FilterParams.init(rng, width, std=std)
    attn_text = MhaParams.init(rng, width, config.attn_hidden_unimodal,
                               config.hops_unimodal, "text", std=std)
    attn_visual = MhaParams.init(rng, width, config.attn_hidden_unimodal,
                                 config.hops_unimodal, "visual", std=std)
    attn_segment = MhaParams.init(rng, width, config.attn_hidden_segment,
                                  config.hops_segment, "segment", std=std)
    atmf = AtmfParams.init(rng, width, tower_widths=config.tower_widths, std=std)
    heads = {}
    for head, n_classes in spec.heads.items():
        w = tc.Tensor(rng.normal(0.0, std, size=(config.head_input, n_classes)),
                      requires_grad=True, name=f"head.{head}.w")
        b = tc.Tensor(np.zeros((1, n_classes)), requires_grad=True,
                      name=f"head.{head}.b")
        heads[head] = (w, b)
    params = ModelParams(config, spec, table, lstm, filt, attn_text,
                         attn_visual, attn_segment, atmf, heads)
    log.info("initialized %d parameters (seed %d)", params.count(), seed)
    return params


@dataclass
class MemePrediction:
    """Per-head probabilities (graph-attached) and argmax labels."""

    head_probs: dict                 # head -> Tensor (1, n_classes)
    labels: dict                     # head -> int
    attention: dict | None = None    # populated when collect_attention=True

    def probabilities(self) -> dict:
        return {h: t.data.reshape(-1).tolist() for h, t in self.head_probs.items()}


def forward_meme(sample, params: ModelParams, features: tc.Tensor | None = None,
                 collect_attention: bool = False) -> MemePrediction:
    """Run the full pipeline on one meme.

    Per segment: embed -> BiLSTM -> region filter -> text and visual
    multi-hop attention -> fusion.  The fused segment vectors are stacked,
    attended at meme level, flattened, and pushed through every head.
    """
    if not sample.segments:
        raise ContractError(f"{sample.id}: meme has no segments")
    if features is None:
        features = load_feature_map(sample.feature_path,
                                    rows=params.config.regions,
                                    cols=params.config.width)
    collected = {"segments": []} if collect_attention else None
    fused = []
    for seg_index, raw in enumerate(sample.segments):
        tokens = tokenize(raw)
        if not tokens:
            raise ContractError(
                f"{sample.id}: segment {seg_index} has no tokens after tokenizing"
            )
        embedded = embed_segment(tokens, params.table)
        hidden = bilstm_encode(embedded, params.lstm)
        filtered = image_encoding_filter(hidden, features, params.filter)
        text_att = multihop_attend(hidden, params.attn_text)
        visual_att = multihop_attend(filtered.u, params.attn_visual)
        seg = atmf_fuse(text_att.m, visual_att.m, params.atmf)
        fused.append(seg.x)
        if collect_attention:
            collected["segments"].append({
                "tokens": tokens,
                "text_attention": text_att.a.data.tolist(),
                "visual_attention": visual_att.a.data.tolist(),
                "word_region_attention": filtered.alpha.data.tolist(),
                "relevance": filtered.relevance.data.reshape(-1).tolist(),
                "gamma": seg.gamma.data.reshape(-1).tolist(),
                "s_text": seg.s_text.item(),
                "s_visual": seg.s_visual.item(),
            })
    stacked = fused[0] if len(fused) == 1 else tc.concat(fused, axis=0)
    meme_att = multihop_attend(stacked, params.attn_segment)
    flat = tc.flatten(meme_att.m)
    head_probs = {}
    labels = {}
    for head, (w, b) in params.heads.items():
        z = tc.softmax_rows(tc.add(tc.matmul(flat, w), b))
        head_probs[head] = z
        labels[head] = int(np.argmax(z.data))
    if collect_attention:
        collected["segment_attention"] = meme_att.a.data.tolist()
    return MemePrediction(head_probs=head_probs, labels=labels,
                          attention=collected)


def compute_loss(pred: MemePrediction, labels, spec: TaskSpec,
                 weights: dict) -> tc.Tensor:
    """Sum over heads of -w[gold] * log Z[gold]."""
    loss = None
    for head, n_classes in spec.heads.items():
        gold = spec.gold(labels, head)
        if not 0 <= gold < n_classes:
            raise ConfigError(f"gold label {gold} outside head {head} range")
        picker = np.zeros((1, n_classes))
        picker[0, gold] = -float(weights[head][gold])
        term = tc.sum_all(tc.mul(tc.log(pred.head_probs[head]), tc.Tensor(picker)))
        loss = term if loss is None else tc.add(loss, term)
    return loss


def batch_loss(samples, params, spec, weights, feature_cache,
               collect_labels=None) -> tc.Tensor:
    """Mean weighted NLL over a batch; optionally records argmax labels."""
    total = None
    for sample in samples:
        pred = forward_meme(sample, params, features=feature_cache(sample))
        if collect_labels is not None:
            collect_labels.append((sample, pred.labels))
        term = compute_loss(pred, sample.labels, spec, weights)
        total = term if total is None else tc.add(total, term)
    return tc.scale(total, 1.0 / len(samples))


class Adam:
    """Adam with per-parameter state keyed by name; parameters without a
    gradient this step are skipped (their moments stay put)."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state: dict[str, tuple] = {}

    def step(self, named: dict[str, tc.Tensor], lr: float):
        for name, p in named.items():
            if not p.has_grad:
                continue
            g = p.grad
            m, v, t = self.state.get(
                name, (np.zeros_like(p.data), np.zeros_like(p.data), 0))
            t += 1
            m = self.beta1 * m + (1 - self.beta1) * g
            v = self.beta2 * v + (1 - self.beta2) * (g * g)
            m_hat = m / (1 - self.beta1 ** t)
            v_hat = v / (1 - self.beta2 ** t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
            self.state[name] = (m, v, t)


def lr_at_step(cfg: TrainConfig, step: int) -> float:
    """Linear decrement every `lr_decay_every` optimizer steps, floored."""
    lr = cfg.lr - cfg.lr_decrement * (step // cfg.lr_decay_every)
    return max(lr, cfg.lr_floor)


class FeatureCache:
    """Loads each feature map once, keyed by path."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self._maps: dict[str, tc.Tensor] = {}

    def __call__(self, sample) -> tc.Tensor:
        t = self._maps.get(sample.feature_path)
        if t is None:
            t = load_feature_map(sample.feature_path, rows=self.config.regions,
                                 cols=self.config.width)
            self._maps[sample.feature_path] = t
        return t


def train(samples, params: ModelParams, spec: TaskSpec, cfg: TrainConfig,
          val_samples=None):
    """Shuffled mini-batch Adam training.

    Returns (params, epoch_log).  When a validation split is given, the
    parameters snapshot with the best validation macro-F1 is restored at
    the end.  A non-finite loss aborts with the offending batch ids.
    """
    if not samples:
        raise ContractError("train needs a non-empty dataset")
    weights = cfg.class_weights or default_class_weights(spec.task)
    for head, n_classes in spec.heads.items():
        if head not in weights or len(weights[head]) != n_classes:
            raise ConfigError(f"class weights for head {head} must have "
                              f"{n_classes} entries")
    rng = np.random.default_rng(cfg.seed)
    adam = Adam(cfg.beta1, cfg.beta2, cfg.eps)
    cache = FeatureCache(params.config)
    epoch_log = []
    best = None  # (score, snapshot)
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(samples))
        losses = []
        hits = {head: 0 for head in spec.heads}
        for start in range(0, len(order), cfg.batch_size):
            batch = [samples[i] for i in order[start:start + cfg.batch_size]]
            params.zero_grads()
            seen = []
            try:
                with tc.Tape() as tape:
                    loss = batch_loss(batch, params, spec, weights, cache,
                                      collect_labels=seen)
                tc.backward(loss, tape)
            except NumericError as exc:
                ids = [s.id for s in batch]
                raise NumericError(
                    f"training aborted at epoch {epoch} step {step} on batch "
                    f"{ids}: {exc}"
                ) from exc
            step += 1
            adam.step(params.named(), lr_at_step(cfg, step))
            losses.append(loss.item())
            for sample, labels in seen:
                for head in spec.heads:
                    if labels[head] == spec.gold(sample.labels, head):
                        hits[head] += 1
        accuracy = {head: hits[head] / len(samples) for head in spec.heads}
        record = {"epoch": epoch, "step": step, "lr": lr_at_step(cfg, step),
                  "loss": float(np.mean(losses)), "accuracy": accuracy}
        if val_samples:
            report = evaluate(predictor(params, cache), val_samples, spec)
            if report.average:
                score = report.average["macro_f1"]
            else:
                score = sum(h["macro_f1"] for h in report.heads.values()) \
                    / len(report.heads)
            record["val_macro_f1"] = score
            if best is None or score > best[0]:
                best = (score, params.snapshot())
        epoch_log.append(record)
        log.info("epoch %d loss %.6f acc %s", epoch, record["loss"], accuracy)
        if cfg.stop_at_accuracy is not None and \
                min(accuracy.values()) >= cfg.stop_at_accuracy:
            break
    if best is not None:
        params.restore(best[1])
    return params, epoch_log


def predictor(params: ModelParams, cache: FeatureCache | None = None):
    """Closure mapping a sample to its argmax labels (for data.evaluate)."""
    cache = cache or FeatureCache(params.config)

    def predict(sample):
        return forward_meme(sample, params, features=cache(sample)).labels

    return predict


def write_log(epoch_log, path):
    with open(path, "w", encoding="utf-8") as fh:
        for record in epoch_log:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# checkpoint IO
# ---------------------------------------------------------------------------

def config_digest(config: ModelConfig, spec: TaskSpec,
                  table: EmbeddingTable) -> bytes:
    vocab_fp = hashlib.sha256(
        "\x00".join(sorted(table.index, key=table.index.get)).encode("utf-8")
    ).hexdigest()
    blob = json.dumps(
        {"config": config.to_dict(), "task": spec.task, "vocab": vocab_fp},
        sort_keys=True,
    ).encode("utf-8")
    return hashlib.sha256(blob).digest()


def save_checkpoint(path, params: ModelParams):
    """Versioned binary: magic, version, config digest, then each named
    parameter as (name length, name, rank, extents, float64 LE values)."""
    named = params.named()
    digest = config_digest(params.config, params.spec, params.table)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(digest)))
        fh.write(digest)
        fh.write(struct.pack("<I", len(named)))
        for name in sorted(named):
            raw = name.encode("utf-8")
            arr = named[name].data
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path, params: ModelParams):
    """Fill `params` (built from the same config/task/table) from a file."""
    with open(path, "rb") as fh:
        blob = fh.read()
    off = 0

    def take(n):
        nonlocal off
        if off + n > len(blob):
            raise ParseError(f"{path}: truncated checkpoint")
        chunk = blob[off:off + n]
        off += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint file")
    (version,) = struct.unpack("<I", take(4))
    if version != CHECKPOINT_VERSION:
        raise ParseError(f"{path}: unsupported checkpoint version {version}")
    (digest_len,) = struct.unpack("<I", take(4))
    digest = take(digest_len)
    expected = config_digest(params.config, params.spec, params.table)
    if digest != expected:
        raise ConfigError(
            f"{path}: checkpoint was trained with a different "
            "config/task/vocabulary"
        )
    (count,) = struct.unpack("<I", take(4))
    loaded = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        extents = struct.unpack(f"<{rank}I", take(4 * rank))
        n_values = int(np.prod(extents)) if rank else 1
        values = np.frombuffer(take(8 * n_values), dtype="<f8").reshape(extents)
        loaded[name] = values.copy()
    params.restore(loaded)
    named = params.named()
    missing = set(named) - set(loaded)
    if missing:
        raise ParseError(f"{path}: checkpoint missing parameters {sorted(missing)}")
    return params

"""Dataset ingestion, label encoding, class weights, and F1 evaluation.

One JSONL object per meme:

    {"id": str, "segments": [str, ...], "feature_path": str,
     "sentiment": "negative"|"neutral"|"positive",
     "humor": 0|1, "sarcasm": 0|1, "offense": 0|1, "motivation": 0|1,
     "humor_level": 0-3, "sarcasm_level": 0-3, "offense_level": 0-3,
     "motivation_level": 0-1}

Label fields are optional for prediction-only files.  `feature_path` is
resolved relative to the JSONL file's directory when not absolute.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field

from .errors import ConfigError, ContractError, ParseError, ValidationError

log = logging.getLogger("memefuse.data")

SENTIMENTS = ("negative", "neutral", "positive")  # encoded 0, 1, 2
AFFECTS = ("humor", "sarcasm", "offense", "motivation")
LEVEL_COUNTS = {"humor": 4, "sarcasm": 4, "offense": 4, "motivation": 2}

TASK_SENTIMENT = "sentiment"
TASK_AFFECT = "affect_cls"
TASK_QUANT = "affect_quant"
TASKS = (TASK_SENTIMENT, TASK_AFFECT, TASK_QUANT)


@dataclass
class TaskLabelSet:
    """Gold labels for all three tasks; any field may be None at predict time."""

    sentiment: int | None = None
    bits: dict = field(default_factory=dict)    # affect -> 0|1
    levels: dict = field(default_factory=dict)  # affect -> level index

    def validate(self, sample_id: str):
        if self.sentiment is not None and not 0 <= self.sentiment < 3:
            raise ValidationError(f"{sample_id}: sentiment index {self.sentiment}")
        for affect in AFFECTS:
            bit = self.bits.get(affect)
            level = self.levels.get(affect)
            if bit is not None and bit not in (0, 1):
                raise ValidationError(f"{sample_id}: {affect} bit {bit}")
            if level is not None and not 0 <= level < LEVEL_COUNTS[affect]:
                raise ValidationError(f"{sample_id}: {affect} level {level}")
            if bit is not None and level is not None and (level > 0) != (bit == 1):
                raise ValidationError(
                    f"{sample_id}: {affect} level {level} conflicts with bit {bit}"
                )


@dataclass
class MemeSample:
    id: str
    segments: list
    feature_path: str
    labels: TaskLabelSet = field(default_factory=TaskLabelSet)


class TaskSpec:
    """Head inventory for one task: ordered head name -> class count."""

    def __init__(self, task: str):
        if task == TASK_SENTIMENT:
            self.heads = {"sentiment": 3}
        elif task == TASK_AFFECT:
            self.heads = {a: 2 for a in AFFECTS}
        elif task == TASK_QUANT:
            self.heads = {a: LEVEL_COUNTS[a] for a in AFFECTS}
        else:
            raise ConfigError(f"unknown task {task!r}, expected one of {TASKS}")
        self.task = task

    def gold(self, labels: TaskLabelSet, head: str) -> int:
        if self.task == TASK_SENTIMENT:
            value = labels.sentiment
        elif self.task == TASK_AFFECT:
            value = labels.bits.get(head)
        else:
            value = labels.levels.get(head)
        if value is None:
            raise ValidationError(f"missing {self.task} label for head {head}")
        return value

    def __repr__(self):
        return f"TaskSpec({self.task!r}, heads={self.heads})"


def _parse_labels(obj: dict, sample_id: str) -> TaskLabelSet:
    labels = TaskLabelSet()
    if "sentiment" in obj:
        raw = obj["sentiment"]
        if raw not in SENTIMENTS:
            raise ValidationError(
                f"{sample_id}: sentiment {raw!r} not in {SENTIMENTS}"
            )
        labels.sentiment = SENTIMENTS.index(raw)
    for affect in AFFECTS:
        if affect in obj:
            labels.bits[affect] = obj[affect]
        key = f"{affect}_level"
        if key in obj:
            labels.levels[affect] = obj[key]
    labels.validate(sample_id)
    return labels


def load_dataset(path, check_features: bool = True) -> list[MemeSample]:
    """Read a JSONL dataset; logs per-class counts after a clean parse."""
    samples = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            try:
                sample_id = str(obj["id"])
                segments = list(obj["segments"])
                feature_path = obj["feature_path"]
            except KeyError as exc:
                raise ParseError(f"{path}:{lineno}: missing field {exc}") from exc
            if not segments or any(not str(s).strip() for s in segments):
                raise ValidationError(f"{sample_id}: empty segment list or segment")
            resolved = feature_path if os.path.isabs(feature_path) \
                else os.path.join(base, feature_path)
            if check_features and not os.path.exists(resolved):
                raise FileNotFoundError(
                    f"{sample_id}: feature file {resolved} does not exist"
                )
            labels = _parse_labels(obj, sample_id)
            samples.append(MemeSample(sample_id, [str(s) for s in segments],
                                      resolved, labels))
    _log_summary(path, samples)
    return samples


def _log_summary(path, samples):
    n_seg = sum(len(s.segments) for s in samples)
    log.info("%s: %d memes, %d segments", path, len(samples), n_seg)
    by_sent = {name: 0 for name in SENTIMENTS}
    for s in samples:
        if s.labels.sentiment is not None:
            by_sent[SENTIMENTS[s.labels.sentiment]] += 1
    if any(by_sent.values()):
        log.info("sentiment counts: %s", by_sent)
    for affect in AFFECTS:
        present = sum(1 for s in samples if s.labels.bits.get(affect) == 1)
        if present:
            log.info("%s present: %d", affect, present)


def save_dataset(samples, path):
    """Serialize samples back to JSONL with a stable key order."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            obj = {"id": s.id, "segments": s.segments,
                   "feature_path": s.feature_path}
            if s.labels.sentiment is not None:
                obj["sentiment"] = SENTIMENTS[s.labels.sentiment]
            for affect in AFFECTS:
                if affect in s.labels.bits:
                    obj[affect] = s.labels.bits[affect]
                if affect in s.labels.levels:
                    obj[f"{affect}_level"] = s.labels.levels[affect]
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _confusion_counts(pred, gold, cls):
    tp = fp = fn = 0
    for p, g in zip(pred, gold):
        if p == cls and g == cls:
            tp += 1
        elif p == cls:
            fp += 1
        elif g == cls:
            fn += 1
    return tp, fp, fn


def macro_f1(pred, gold, classes) -> float:
    """Unweighted mean of per-class F1; absent classes stay in the mean as 0."""
    pred, gold = list(pred), list(gold)
    if not pred or len(pred) != len(gold):
        raise ContractError(
            f"macro_f1 needs equal non-empty sequences, got {len(pred)}/{len(gold)}"
        )
    total = 0.0
    for cls in classes:
        tp, fp, fn = _confusion_counts(pred, gold, cls)
        denom = 2 * tp + fp + fn
        total += (2 * tp / denom) if denom else 0.0
    return total / len(classes)


def micro_f1(pred, gold) -> float:
    """F1 from globally pooled TP/FP/FN; equals accuracy for single-label heads."""
    pred, gold = list(pred), list(gold)
    if not pred or len(pred) != len(gold):
        raise ContractError(
            f"micro_f1 needs equal non-empty sequences, got {len(pred)}/{len(gold)}"
        )
    classes = set(pred) | set(gold)
    tp = fp = fn = 0
    for cls in classes:
        t, f, n = _confusion_counts(pred, gold, cls)
        tp, fp, fn = tp + t, fp + f, fn + n
    denom = 2 * tp + fp + fn
    return (2 * tp / denom) if denom else 0.0


@dataclass
class MetricsReport:
    """Per-head macro/micro F1, plus the four-head average for affect tasks."""

    task: str
    heads: dict          # head -> {"macro_f1": float, "micro_f1": float}
    average: dict | None = None

    def to_dict(self):
        out = {"task": self.task, "heads": self.heads}
        if self.average is not None:
            out["average"] = self.average
        return out


def evaluate(predict_fn, samples, spec: TaskSpec) -> MetricsReport:
    """Score a predictor (sample -> dict head -> label) against gold labels."""
    if not samples:
        raise ContractError("evaluate needs a non-empty dataset")
    preds = {head: [] for head in spec.heads}
    golds = {head: [] for head in spec.heads}
    for sample in samples:
        answers = predict_fn(sample)
        for head in spec.heads:
            if head not in answers:
                raise ConfigError(f"predictor returned no label for head {head}")
            preds[head].append(answers[head])
            golds[head].append(spec.gold(sample.labels, head))
    heads = {}
    for head, n_classes in spec.heads.items():
        heads[head] = {
            "macro_f1": macro_f1(preds[head], golds[head], range(n_classes)),
            "micro_f1": micro_f1(preds[head], golds[head]),
        }
    average = None
    if spec.task in (TASK_AFFECT, TASK_QUANT):
        average = {
            key: sum(h[key] for h in heads.values()) / len(heads)
            for key in ("macro_f1", "micro_f1")
        }
    return MetricsReport(task=spec.task, heads=heads, average=average)


def default_class_weights(task: str) -> dict:
    """Loss weights per head, indexed by class id; minority classes weigh more."""
    if task == TASK_SENTIMENT:
        # table order [positive, neutral, negative] -> indices [2, 1, 0]
        return {"sentiment": [2.0, 1.5, 1.0]}
    if task == TASK_AFFECT:
        return {
            "humor": [1.5, 1.0],
            "sarcasm": [1.5, 1.0],
            "offense": [1.25, 1.0],
            "motivation": [1.0, 1.25],
        }
    if task == TASK_QUANT:
        return {a: [1.0] * LEVEL_COUNTS[a] for a in AFFECTS}
    raise ConfigError(f"unknown task {task!r}, expected one of {TASKS}")


# ---------------------------------------------------------------------------
# CSV conversion (published memotion layout -> JSONL)
# ---------------------------------------------------------------------------

_LEVEL_MAPS = {
    "humor": {"not_funny": 0, "funny": 1, "very_funny": 2, "hilarious": 3},
    "sarcasm": {"not_sarcastic": 0, "general": 1, "twisted_meaning": 2,
                "very_twisted": 3},
    "offense": {"not_offensive": 0, "slight": 1, "slightly_offensive": 1,
                "very_offensive": 2, "hateful_offensive": 3},
    "motivation": {"not_motivational": 0, "motivational": 1},
}
_SENTIMENT_MAP = {"very_negative": 0, "negative": 0, "neutral": 1,
                  "positive": 2, "very_positive": 2}
_COLUMN_ALIASES = {
    "humor": ("humour", "humor"),
    "sarcasm": ("sarcasm",),
    "offense": ("offensive", "offense"),
    "motivation": ("motivational", "motivation"),
}


def _norm(value: str) -> str:
    return value.strip().lower().replace(" ", "_")


def convert_csv(csv_path, out_path, feature_ext: str = ".mfm"):
    """Best-effort mapping of the published CSV layout to dataset JSONL.

    Columns used: image_name (id + feature file stem); text_corrected,
    falling back to text_ocr (segments, split on line breaks);
    humour/sarcasm/offensive/motivational (quantification levels, presence
    bits derived as level > 0); overall_sentiment folded to three classes
    (very_negative -> negative, very_positive -> positive).  Rows with no
    text or with unmappable label values are skipped and counted.
    """
    written = 0
    skipped = []
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(f"{csv_path}: no header row")
        cols = {_norm(c): c for c in reader.fieldnames}

        def col(*names):
            for n in names:
                if n in cols:
                    return cols[n]
            return None

        id_col = col("image_name", "image", "id")
        if id_col is None:
            raise ParseError(f"{csv_path}: no image_name/id column")
        text_cols = [c for c in (col("text_corrected"), col("text_ocr"),
                                 col("ocr_extracted_text")) if c]
        sent_col = col("overall_sentiment", "sentiment")
        affect_cols = {a: col(*_COLUMN_ALIASES[a]) for a in AFFECTS}

        with open(out_path, "w", encoding="utf-8") as out:
            for rownum, row in enumerate(reader, start=2):
                stem = os.path.splitext(os.path.basename(row[id_col].strip()))[0]
                text = ""
                for c in text_cols:
                    if row.get(c, "").strip():
                        text = row[c]
                        break
                segments = [seg.strip() for seg in text.splitlines() if seg.strip()]
                if not segments:
                    skipped.append((rownum, "no text"))
                    continue
                obj = {"id": stem, "segments": segments,
                       "feature_path": stem + feature_ext}
                ok = True
                if sent_col and row.get(sent_col, "").strip():
                    sent = _SENTIMENT_MAP.get(_norm(row[sent_col]))
                    if sent is None:
                        skipped.append((rownum, f"sentiment {row[sent_col]!r}"))
                        ok = False
                    else:
                        obj["sentiment"] = SENTIMENTS[sent]
                for affect in AFFECTS:
                    c = affect_cols[affect]
                    if not ok or not c or not row.get(c, "").strip():
                        continue
                    level = _LEVEL_MAPS[affect].get(_norm(row[c]))
                    if level is None:
                        skipped.append((rownum, f"{affect} {row[c]!r}"))
                        ok = False
                        break
                    obj[affect] = 1 if level > 0 else 0
                    obj[f"{affect}_level"] = level
                if ok:
                    out.write(json.dumps(obj, ensure_ascii=False) + "\n")
                    written += 1
    for rownum, why in skipped:
        log.warning("%s row %d skipped: %s", csv_path, rownum, why)
    log.info("%s: wrote %d memes, skipped %d", csv_path, written, len(skipped))
    return written, skipped

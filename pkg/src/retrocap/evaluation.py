"""Corpus BLEU and extraction-overlap statistics.

BLEU: modified n-gram precision with clipping, corpus-level counts, a
brevity penalty against the closest reference length (ties to the
shorter), and a geometric mean over orders 1..n. Tokenization is the
pipeline's lowercase word split so scores line up with training.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataFormatError
from .tokenizer import split_words

# The six overlap proportions, reconstructed from loosely worded prose;
# fixed here so the statistics are reproducible.
OVERLAP_COLUMNS = [
    "object words found in any reference",
    "relation words found in any reference",
    "images with >= 3 extracted objects found in references",
    "images with >= 1 extracted relation found in references",
    "images with >= 2 objects each found in >= 3 references",
    "images with >= 1 relation found in >= 3 references",
]


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hypotheses: list[str], reference_sets: list[list[str]], max_n: int = 4) -> tuple[float, ...]:
    """Corpus BLEU-1..BLEU-max_n (cumulative, with brevity penalty)."""
    if not hypotheses:
        raise ValueError("empty evaluation corpus")
    if len(hypotheses) != len(reference_sets):
        raise ValueError("hypothesis/reference count mismatch")
    if any(not refs for refs in reference_sets):
        raise ValueError("every hypothesis needs at least one reference")

    hyp_tokens = [split_words(h) for h in hypotheses]
    ref_tokens = [[split_words(r) for r in refs] for refs in reference_sets]

    clipped = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, refs in zip(hyp_tokens, ref_tokens):
        c = len(hyp)
        hyp_len += c
        ref_len += min((len(r) for r in refs), key=lambda rl: (abs(rl - c), rl))
        for n in range(1, max_n + 1):
            counts = _ngrams(hyp, n)
            if not counts:
                continue
            max_counts: Counter = Counter()
            for ref in refs:
                for gram, cnt in _ngrams(ref, n).items():
                    max_counts[gram] = max(max_counts[gram], cnt)
            clipped[n - 1] += sum(min(cnt, max_counts[gram]) for gram, cnt in counts.items())
            totals[n - 1] += sum(counts.values())

    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len) if hyp_len else 0.0
    precisions = [clipped[i] / totals[i] if totals[i] else 0.0 for i in range(max_n)]

    scores = []
    for n in range(1, max_n + 1):
        if any(precisions[i] == 0.0 for i in range(n)):
            scores.append(0.0)
            continue
        log_mean = sum(math.log(precisions[i]) for i in range(n)) / n
        scores.append(bp * math.exp(log_mean))
    return tuple(scores)


def _word_set(text: str) -> set[str]:
    return {w for w in split_words(text) if any(c.isalnum() for c in w)}


def overlap_stats(extractions: list[tuple[list[str], list[str]]],
                  reference_sets: list[list[str]]) -> list[float]:
    """Six proportions comparing extracted words with reference captions.

    extractions[i] is (object_words, relation_words) for image i; padding
    tokens must already be stripped. Columns 1-2 are word-level micro
    proportions; columns 3-6 are image-level proportions (see
    OVERLAP_COLUMNS).
    """
    if len(extractions) != len(reference_sets):
        raise ValueError("extraction/reference count mismatch")
    if not extractions:
        raise ValueError("no images to analyze")

    obj_hits = obj_total = rel_hits = rel_total = 0
    col3 = col4 = col5 = col6 = 0
    for (objects, relations), refs in zip(extractions, reference_sets):
        ref_sets = [_word_set(r) for r in refs]
        any_ref: set[str] = set().union(*ref_sets) if ref_sets else set()

        obj_in_any = [w for w in objects if w in any_ref]
        rel_in_any = [w for w in relations if w in any_ref]
        obj_hits += len(obj_in_any)
        obj_total += len(objects)
        rel_hits += len(rel_in_any)
        rel_total += len(relations)

        col3 += len(obj_in_any) >= 3
        col4 += len(rel_in_any) >= 1
        obj_3refs = [w for w in objects if sum(w in rs for rs in ref_sets) >= 3]
        rel_3refs = [w for w in relations if sum(w in rs for rs in ref_sets) >= 3]
        col5 += len(obj_3refs) >= 2
        col6 += len(rel_3refs) >= 1

    n = len(extractions)
    return [
        obj_hits / obj_total if obj_total else 0.0,
        rel_hits / rel_total if rel_total else 0.0,
        col3 / n,
        col4 / n,
        col5 / n,
        col6 / n,
    ]


@dataclass
class EvalReport:
    bleu1: float
    bleu2: float
    bleu3: float
    bleu4: float
    per_image: list[dict] = field(default_factory=list)
    overlap_stats: dict[str, float] | None = None

    def to_json(self) -> str:
        payload = {
            "bleu1": self.bleu1, "bleu2": self.bleu2,
            "bleu3": self.bleu3, "bleu4": self.bleu4,
            "per_image": self.per_image,
        }
        if self.overlap_stats is not None:
            payload["overlap_stats"] = self.overlap_stats
        return json.dumps(payload, indent=2)


def read_predictions(path: str | Path) -> dict[int, str]:
    """Predictions file: one {"image_id", "caption"} JSON object per line."""
    preds: dict[int, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                image_id, caption = int(rec["image_id"]), rec["caption"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"{path}:{lineno + 1}: bad prediction record: {exc}") from exc
            if image_id in preds:
                raise DataFormatError(f"{path}:{lineno + 1}: duplicate image_id {image_id}")
            preds[image_id] = caption
    return preds


def evaluate_predictions(predictions: dict[int, str],
                         references: dict[int, list[str]]) -> EvalReport:
    """Score predictions against per-image reference captions."""
    missing = [i for i in predictions if i not in references]
    if missing:
        raise DataFormatError(f"no references for image ids {sorted(missing)[:5]}")
    image_ids = sorted(predictions)
    hyps = [predictions[i] for i in image_ids]
    refs = [references[i] for i in image_ids]
    b1, b2, b3, b4 = bleu(hyps, refs)
    per_image = [
        {"image_id": i, "hypothesis": predictions[i], "references": references[i]}
        for i in image_ids
    ]
    return EvalReport(b1, b2, b3, b4, per_image)

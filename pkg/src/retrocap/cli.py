"""Command-line surface wiring the pipeline into reproducible runs.

Exit codes: 0 success, 2 usage error (bad flags, missing files),
3 data-format error, 4 numerical failure. Errors print one message to
stderr, never a traceback.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

from .config import load_config
from .errors import DataFormatError, NumericalError, RetrocapError
from .evaluation import (
    OVERLAP_COLUMNS,
    evaluate_predictions,
    overlap_stats,
    read_predictions,
)
from .orem import ExtractionThresholds, HighFreqHead, WordEmbeddings, assemble_prompt
from .store import build_store, load_captions, load_query_embedding, knn_retrieve
from .tagging import load_lexicon, load_prepositions
from .tokenizer import Tokenizer


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="retrocap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-datastore", help="validate embedding files and write a datastore manifest")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--ids", required=True)
    p.add_argument("--captions", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--word-embeddings")
    p.add_argument("--word-vocab")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("retrieve", help="top-k cosine retrieval from a datastore")
    p.add_argument("--query-emb", required=True)
    p.add_argument("--store", required=True, help="datastore manifest from build-datastore")
    p.add_argument("--k", type=int, default=7)
    p.add_argument("--exclude-image", type=int, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("extract", help="extract object/relation words and render the prompt")
    p.add_argument("--query-emb", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--head", required=True, help="head file prefix (weight/bias/vocab)")
    p.add_argument("--thresholds-json", default=None, help="JSON file overriding extraction thresholds")
    p.add_argument("--template", type=int, default=3, choices=(1, 2, 3))
    p.add_argument("--k", type=int, default=7)
    p.add_argument("--exclude-image", type=int, default=None)
    p.add_argument("--prepositions", default=None)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("train", help="run the training loop from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("generate", help="caption one image embedding from a checkpoint")
    p.add_argument("--image-emb", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--beam", type=int, default=5)
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--exclude-image", type=int, default=None)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("eval", help="score a predictions file against reference captions")
    p.add_argument("--pred", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("stats", help="overlap statistics between extractions and references")
    p.add_argument("--extractions", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--out", default=None)

    return parser


def _read_manifest(path: str) -> dict:
    try:
        manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid manifest JSON: {exc}") from exc
    for key in ("embeddings", "ids", "captions"):
        if key not in manifest:
            raise DataFormatError(f"{path}: manifest missing {key!r}")
    return manifest


def _load_thresholds(path: str | None) -> ExtractionThresholds:
    if path is None:
        return ExtractionThresholds()
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid thresholds JSON: {exc}") from exc
    known = {f.name for f in fields(ExtractionThresholds)}
    unknown = set(payload) - known
    if unknown:
        raise DataFormatError(f"{path}: unknown threshold keys {sorted(unknown)}")
    try:
        return ExtractionThresholds(**payload)
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def _cmd_build_datastore(args) -> int:
    store = build_store(args.embeddings, args.ids)
    captions = load_captions(args.captions)
    if set(captions) != set(store.ids):
        raise DataFormatError("caption ids do not match embedding store ids one-to-one")
    if bool(args.word_embeddings) != bool(args.word_vocab):
        raise DataFormatError("--word-embeddings and --word-vocab must be given together")
    if args.word_embeddings:
        WordEmbeddings.load(args.word_embeddings, args.word_vocab)  # validate
    manifest = {
        "embeddings": str(Path(args.embeddings).resolve()),
        "ids": str(Path(args.ids).resolve()),
        "captions": str(Path(args.captions).resolve()),
        "count": store.count,
        "dim": store.dim,
    }
    if args.word_embeddings:
        manifest["word_embeddings"] = str(Path(args.word_embeddings).resolve())
        manifest["word_vocab"] = str(Path(args.word_vocab).resolve())
    Path(args.out).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    if args.json:
        print(json.dumps(manifest))
    else:
        print(f"datastore ok: {store.count} vectors of dim {store.dim} -> {args.out}")
    return 0


def _cmd_retrieve(args) -> int:
    manifest = _read_manifest(args.store)
    store = build_store(manifest["embeddings"], manifest["ids"])
    query = load_query_embedding(args.query_emb)
    hits = knn_retrieve(query, store, args.k, args.exclude_image, workers=args.workers)
    if args.json:
        print(json.dumps([{"id": i, "score": s} for i, s in hits]))
    else:
        for rid, score in hits:
            print(f"{rid}\t{score:.6f}")
    return 0


def _cmd_extract(args) -> int:
    from .orem import extract_word_sets

    manifest = _read_manifest(args.store)
    if "word_embeddings" not in manifest:
        raise DataFormatError(f"{args.store}: manifest has no word embeddings (needed for extraction)")
    store = build_store(manifest["embeddings"], manifest["ids"])
    captions = load_captions(manifest["captions"])
    word_store = WordEmbeddings.load(manifest["word_embeddings"], manifest["word_vocab"])
    head = HighFreqHead.load(args.head)
    lexicon = load_lexicon(args.lexicon)
    prepositions = load_prepositions(args.prepositions)
    thresholds = _load_thresholds(args.thresholds_json)
    query = load_query_embedding(args.query_emb)

    sets = extract_word_sets(
        query, store, captions, word_store, head, lexicon, prepositions,
        thresholds, args.k, args.exclude_image,
    )
    tokenizer = Tokenizer.from_corpus([rec.text for rec in captions.values()])
    bundle = assemble_prompt(sets, args.template, tokenizer, thresholds)
    if args.json:
        print(json.dumps({
            "wt": sorted(sets.wt),
            "ws": sorted([tw.surface, tw.tag] for tw in sets.ws),
            "wn": sorted([tw.surface, tw.tag] for tw in sets.wn),
            "objects": sets.wo,
            "relations": sets.wr,
            "template_id": bundle.template_id,
            "rendered": bundle.rendered,
            "token_ids": bundle.token_ids,
        }))
    else:
        print("objects:", ", ".join(sets.wo) if sets.wo else "(none)")
        print("relations:", ", ".join(sets.wr) if sets.wr else "(none)")
        print("prompt:", bundle.rendered)
    return 0


def _cmd_train(args) -> int:
    from .training import Trainer

    config = load_config(args.config)
    trainer = Trainer(config)
    ckpt, metrics = trainer.train()
    final = metrics[-1]["loss"] if metrics else None
    if args.json:
        print(json.dumps({"checkpoint": str(ckpt), "steps": len(metrics), "final_loss": final}))
    else:
        print(f"checkpoint: {ckpt}")
        print(f"steps: {len(metrics)}  final loss: {final:.4f}")
    return 0


def _cmd_generate(args) -> int:
    from .training import load_pipeline

    pipeline = load_pipeline(args.checkpoint)
    query = load_query_embedding(args.image_emb)
    caption = pipeline.caption(
        query, exclude_image_id=args.exclude_image,
        beam_size=args.beam, max_len=args.max_len,
    )
    if args.json:
        print(json.dumps({"caption": caption}))
    else:
        print(caption)
    return 0


def _group_references(path: str) -> dict[int, list[str]]:
    refs: dict[int, list[str]] = {}
    for rec in load_captions(path).values():
        refs.setdefault(rec.image_id, []).append(rec.text)
    return {i: sorted(texts) for i, texts in refs.items()}


def _cmd_eval(args) -> int:
    predictions = read_predictions(args.pred)
    references = _group_references(args.refs)
    report = evaluate_predictions(predictions, references)
    text = report.to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


def _cmd_stats(args) -> int:
    extractions: list[tuple[list[str], list[str]]] = []
    image_ids: list[int] = []
    with open(args.extractions, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                image_ids.append(int(rec["image_id"]))
                extractions.append((list(rec["objects"]), list(rec["relations"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataFormatError(f"{args.extractions}:{lineno + 1}: bad record: {exc}") from exc
    references = _group_references(args.refs)
    missing = [i for i in image_ids if i not in references]
    if missing:
        raise DataFormatError(f"no references for image ids {sorted(missing)[:5]}")
    props = overlap_stats(extractions, [references[i] for i in image_ids])
    payload = {
        "images": len(image_ids),
        "columns": OVERLAP_COLUMNS,
        "proportions": props,
    }
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return 0


_COMMANDS = {
    "build-datastore": _cmd_build_datastore,
    "retrieve": _cmd_retrieve,
    "extract": _cmd_extract,
    "train": _cmd_train,
    "generate": _cmd_generate,
    "eval": _cmd_eval,
    "stats": _cmd_stats,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (DataFormatError, RetrocapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

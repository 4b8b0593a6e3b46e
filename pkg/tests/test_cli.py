import json

import numpy as np
import pytest

from retrocap.cli import main
from retrocap.emb1 import write_emb1

from conftest import OREM30, TRAIN50


@pytest.fixture(scope="module")
def datastore_manifest(tmp_path_factory):
    out = tmp_path_factory.mktemp("store") / "datastore.json"
    code = main([
        "build-datastore",
        "--embeddings", str(OREM30 / "captions.emb1"),
        "--ids", str(OREM30 / "captions.ids.jsonl"),
        "--captions", str(OREM30 / "captions.jsonl"),
        "--word-embeddings", str(OREM30 / "words.emb1"),
        "--word-vocab", str(OREM30 / "words.txt"),
        "--out", str(out),
    ])
    assert code == 0
    return out


def test_build_datastore_manifest_contents(datastore_manifest):
    manifest = json.loads(datastore_manifest.read_text())
    assert manifest["count"] == 150
    assert manifest["dim"] == 32
    assert "word_embeddings" in manifest


def test_retrieve_prints_k_lines(datastore_manifest, capsys):
    code = main([
        "retrieve", "--query-emb", str(OREM30 / "query0.emb1"),
        "--store", str(datastore_manifest), "--k", "7",
    ])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 7
    scores = [float(line.split("\t")[1]) for line in lines]
    assert scores == sorted(scores, reverse=True)


def test_retrieve_json_and_exclusion(datastore_manifest, capsys):
    code = main([
        "retrieve", "--query-emb", str(OREM30 / "query0.emb1"),
        "--store", str(datastore_manifest), "--k", "7",
        "--exclude-image", "5000", "--json",
    ])
    assert code == 0
    hits = json.loads(capsys.readouterr().out)
    assert len(hits) == 7
    assert all(h["id"] > 104 for h in hits)  # image 5000 owns caption ids 1..5


def test_extract_prints_prompt_and_caps(datastore_manifest, capsys):
    code = main([
        "extract", "--query-emb", str(OREM30 / "query0.emb1"),
        "--store", str(datastore_manifest),
        "--lexicon", str(OREM30 / "lexicon.tsv"),
        "--head", str(OREM30 / "head"),
        "--thresholds-json", str(OREM30 / "thresholds.json"),
        "--exclude-image", "5000", "--json",
    ])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert len(payload["objects"]) <= 6
    assert len(payload["relations"]) <= 3
    assert payload["rendered"].startswith("a photo contains objects: ")
    assert payload["rendered"].count("null") == 9 - len(payload["objects"]) - len(payload["relations"])


def test_unknown_flag_exits_2():
    assert main(["retrieve", "--nonsense", "x"]) == 2


def test_unknown_command_exits_2():
    assert main(["frobnicate"]) == 2


def test_missing_file_exits_2(tmp_path, datastore_manifest):
    code = main([
        "retrieve", "--query-emb", str(tmp_path / "missing.emb1"),
        "--store", str(datastore_manifest),
    ])
    assert code == 2


def test_malformed_emb1_exits_3(tmp_path, datastore_manifest):
    bad = tmp_path / "bad.emb1"
    bad.write_bytes(b"EMB1\x05\x00\x00\x00\x02\x00\x00\x00" + b"\x00" * 8)  # truncated
    code = main(["retrieve", "--query-emb", str(bad), "--store", str(datastore_manifest)])
    assert code == 3


def test_eval_command(tmp_path, capsys):
    pred = tmp_path / "pred.jsonl"
    refs = tmp_path / "refs.jsonl"
    pred.write_text('{"image_id": 1, "caption": "a man riding a bike"}\n')
    refs.write_text('{"id": 1, "image_id": 1, "text": "a man riding a bike"}\n')
    code = main(["eval", "--pred", str(pred), "--refs", str(refs)])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["bleu4"] == pytest.approx(1.0)


def test_stats_command(tmp_path, capsys):
    ext = tmp_path / "ext.jsonl"
    refs = tmp_path / "refs.jsonl"
    ext.write_text('{"image_id": 1, "objects": ["man"], "relations": ["riding"]}\n')
    refs.write_text('{"id": 1, "image_id": 1, "text": "a man riding a bike"}\n')
    code = main(["stats", "--extractions", str(ext), "--refs", str(refs)])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["images"] == 1
    assert payload["proportions"][0] == 1.0
    assert len(payload["columns"]) == 6


@pytest.mark.slow
def test_train_generate_round_trip(tmp_path, capsys):
    config = json.loads((TRAIN50 / "config.json").read_text())
    config["epochs"] = 1
    for key in ("image_embeddings", "image_ids", "captions", "caption_embeddings",
                "caption_ids", "word_embeddings", "word_vocab", "lexicon"):
        config["data"][key] = str(TRAIN50 / config["data"][key])
    config["data"]["out_dir"] = str(tmp_path / "run")
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(config))

    assert main(["train", "--config", str(cfg_path), "--json"]) == 0
    out = json.loads(capsys.readouterr().out)
    ckpt = out["checkpoint"]

    from retrocap.emb1 import read_emb1

    query = tmp_path / "q.emb1"
    write_emb1(query, read_emb1(TRAIN50 / "images.emb1")[:1])
    assert main(["generate", "--image-emb", str(query), "--checkpoint", ckpt,
                 "--beam", "3", "--exclude-image", "1"]) == 0
    first = capsys.readouterr().out
    assert main(["generate", "--image-emb", str(query), "--checkpoint", ckpt,
                 "--beam", "3", "--exclude-image", "1"]) == 0
    second = capsys.readouterr().out
    assert first == second and first.strip()


def test_numerical_failure_exits_4(monkeypatch, datastore_manifest):
    from retrocap import cli
    from retrocap.errors import NumericalError

    def boom(args):
        raise NumericalError("non-finite loss at caption id 7")

    monkeypatch.setitem(cli._COMMANDS, "retrieve", boom)
    code = cli.main(["retrieve", "--query-emb", "x", "--store", str(datastore_manifest)])
    assert code == 4

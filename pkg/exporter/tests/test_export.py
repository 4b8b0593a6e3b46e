import hashlib
import json
import struct
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from embexport.export import export_captions, export_images


@pytest.fixture()
def image_dir(tmp_path):
    d = tmp_path / "images"
    d.mkdir()
    rng = np.random.default_rng(1)
    for name in ("a.png", "b.png", "c.png"):
        Image.fromarray(rng.integers(0, 255, size=(40, 50, 3), dtype=np.uint8)).save(d / name)
    return d


@pytest.fixture()
def captions_file(tmp_path):
    path = tmp_path / "captions.jsonl"
    lines = [
        {"id": 1, "image_id": 0, "text": "a red cube on a table"},
        {"id": 2, "image_id": 0, "text": "the red cube sits on a table"},
        {"id": 3, "image_id": 1, "text": "a blue ball under a chair"},
        {"id": 4, "image_id": 1, "text": "the ball rolls under the chair"},
        {"id": 5, "image_id": 2, "text": "a green tree near a house"},
    ]
    path.write_text("\n".join(json.dumps(rec) for rec in lines) + "\n")
    return path


def read_emb1_header(path: Path):
    raw = path.read_bytes()
    magic, count, dim = struct.unpack_from("<4sII", raw, 0)
    return magic, count, dim, len(raw)


def test_export_images_shape_and_format(image_dir, tmp_path):
    manifest = export_images(image_dir, tmp_path / "imgs")
    magic, count, dim, size = read_emb1_header(tmp_path / "imgs.emb1")
    assert magic == b"EMB1"
    assert (count, dim) == (3, 512)
    assert size == 12 + 4 * 3 * 512  # no trailing bytes
    assert manifest.files["embeddings"]["count"] == 3
    ids = [json.loads(line) for line in (tmp_path / "imgs.ids.jsonl").read_text().splitlines()]
    assert len(ids) == 3
    assert all(set(rec) == {"id", "image_id"} for rec in ids)


def test_export_images_empty_directory(tmp_path):
    empty = tmp_path / "none"
    empty.mkdir()
    export_images(empty, tmp_path / "out")
    magic, count, dim, size = read_emb1_header(tmp_path / "out.emb1")
    assert (magic, count, dim) == (b"EMB1", 0, 512)
    assert size == 12


def test_export_images_skips_unreadable(image_dir, tmp_path):
    (image_dir / "broken.png").write_text("this is not a png")
    manifest = export_images(image_dir, tmp_path / "imgs")
    assert manifest.files["embeddings"]["count"] == 3
    assert any("broken.png" in w for w in manifest.warnings)


def test_export_images_deterministic_checksums(image_dir, tmp_path):
    m1 = export_images(image_dir, tmp_path / "one")
    m2 = export_images(image_dir, tmp_path / "two")
    assert m1.files["embeddings"]["sha256"] == m2.files["embeddings"]["sha256"]
    assert m1.files["ids"]["sha256"] == m2.files["ids"]["sha256"]


def test_export_captions_counts_and_blank_lines(captions_file, tmp_path):
    text = captions_file.read_text().splitlines()
    text.insert(2, "")  # blank line mid-corpus
    captions_file.write_text("\n".join(text) + "\n")
    manifest = export_captions(captions_file, tmp_path / "caps")
    _, count, dim, _ = read_emb1_header(tmp_path / "caps.emb1")
    assert (count, dim) == (5, 512)
    assert any("blank" in w for w in manifest.warnings)
    ids = [json.loads(line)["id"] for line in (tmp_path / "caps.ids.jsonl").read_text().splitlines()]
    assert ids == [1, 2, 3, 4, 5]


def test_similar_captions_embed_closer():
    from embexport.encoders import LiteEncoder

    enc = LiteEncoder()
    a = enc.encode_text("a red cube on a table")
    b = enc.encode_text("the red cube sits on a table")
    c = enc.encode_text("a green tree near a house")
    assert float(a @ b) > float(a @ c)


def run_primary_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "retrocap.cli", *args],
        capture_output=True, text=True,
    )


@pytest.fixture()
def primary_cli_available():
    probe = subprocess.run(
        [sys.executable, "-c", "import retrocap.cli"], capture_output=True
    )
    if probe.returncode != 0:
        pytest.skip("primary pipeline not installed in this environment")


def test_outputs_drive_primary_retrieve(captions_file, image_dir, tmp_path,
                                        primary_cli_available):
    """Exported files must pass the strict reader and serve retrieval."""
    export_captions(captions_file, tmp_path / "caps")
    export_images(image_dir, tmp_path / "imgs")

    manifest_path = tmp_path / "datastore.json"
    build = run_primary_cli(
        "build-datastore",
        "--embeddings", str(tmp_path / "caps.emb1"),
        "--ids", str(tmp_path / "caps.ids.jsonl"),
        "--captions", str(captions_file),
        "--out", str(manifest_path),
    )
    assert build.returncode == 0, build.stderr

    # one image row as the query file (single-row EMB1)
    raw = (tmp_path / "imgs.emb1").read_bytes()
    dim = struct.unpack_from("<I", raw, 8)[0]
    query = tmp_path / "query.emb1"
    query.write_bytes(struct.pack("<4sII", b"EMB1", 1, dim) + raw[12 : 12 + 4 * dim])

    retrieve = run_primary_cli(
        "retrieve", "--query-emb", str(query), "--store", str(manifest_path), "--k", "3",
    )
    assert retrieve.returncode == 0, retrieve.stderr
    assert len(retrieve.stdout.strip().splitlines()) == 3


def test_cli_round_trip(image_dir, tmp_path):
    from embexport.cli import main

    assert main(["images", "--dir", str(image_dir), "--out-prefix", str(tmp_path / "x")]) == 0
    assert main(["captions", "--jsonl", str(tmp_path / "missing.jsonl"),
                 "--out-prefix", str(tmp_path / "y")]) == 2
    assert main(["images", "--dir", str(image_dir), "--out-prefix", str(tmp_path / "z"),
                 "--model", "bogus"]) == 2

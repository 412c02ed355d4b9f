import hashlib
import json
import struct

import numpy as np
import pytest

from orthoaudit.design import ProtectedRecord
from orthoaudit.errors import AlignmentError, InvalidInput, UnknownCategory
from orthoaudit.glm import TrainConfig, fit_binary_probe, predict_scores
from orthoaudit.io import (
    file_digest,
    load_inputs,
    load_probe,
    read_embedding,
    read_embedding_csv,
    read_embedding_oemb,
    read_labels_csv,
    read_metadata_csv,
    save_probe,
    write_embedding_csv,
    write_embedding_oemb,
    write_json,
    write_labels_csv,
    write_metadata_csv,
)
from orthoaudit.linalg import EmbeddingMatrix


@pytest.fixture
def records():
    return (
        ProtectedRecord("a", 50.0, "Male", "White"),
        ProtectedRecord("b", 61.5, "Female", "Black"),
        ProtectedRecord("c", 70.0, "Female", "Asian"),
    )


# ---------------------------------------------------------------------------
# OEMB binary embeddings


def test_oemb_roundtrip_float64(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.standard_normal((7, 3))
    path = tmp_path / "e.oemb"
    write_embedding_oemb(path, data)
    back = read_embedding_oemb(path)
    np.testing.assert_array_equal(back, data)
    assert back.dtype == np.float64


def test_oemb_float32_upcasts(tmp_path):
    rng = np.random.default_rng(1)
    data = rng.standard_normal((5, 4))
    path = tmp_path / "e.oemb"
    write_embedding_oemb(path, data, dtype="f4")
    back = read_embedding_oemb(path)
    np.testing.assert_array_equal(back, data.astype("<f4").astype(np.float64))


def test_oemb_write_is_deterministic(tmp_path):
    data = np.arange(12.0).reshape(3, 4)
    p1, p2 = tmp_path / "a.oemb", tmp_path / "b.oemb"
    write_embedding_oemb(p1, data)
    write_embedding_oemb(p2, data)
    assert file_digest(p1) == file_digest(p2)


def test_oemb_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.oemb"
    path.write_bytes(b"NOPE" + b"\x00" * 30)
    with pytest.raises(InvalidInput, match="magic"):
        read_embedding_oemb(path)


def test_oemb_rejects_truncated_header(tmp_path):
    path = tmp_path / "short.oemb"
    path.write_bytes(b"OEM")
    with pytest.raises(InvalidInput, match="truncated"):
        read_embedding_oemb(path)


def test_oemb_rejects_payload_mismatch(tmp_path):
    path = tmp_path / "cut.oemb"
    header = struct.pack("<4sHQQB", b"OEMB", 1, 4, 2, 8)
    path.write_bytes(header + b"\x00" * (3 * 8))  # declares 8 values, has 3
    with pytest.raises(InvalidInput, match="payload"):
        read_embedding_oemb(path)


def test_oemb_rejects_unknown_dtype_and_version(tmp_path):
    path = tmp_path / "odd.oemb"
    path.write_bytes(struct.pack("<4sHQQB", b"OEMB", 1, 1, 1, 7) + b"\x00" * 8)
    with pytest.raises(InvalidInput, match="dtype"):
        read_embedding_oemb(path)
    path.write_bytes(struct.pack("<4sHQQB", b"OEMB", 9, 1, 1, 8) + b"\x00" * 8)
    with pytest.raises(InvalidInput, match="version"):
        read_embedding_oemb(path)


def test_oemb_write_rejects_bad_dtype(tmp_path):
    with pytest.raises(InvalidInput):
        write_embedding_oemb(tmp_path / "x.oemb", np.ones((2, 2)), dtype="f2")


# ---------------------------------------------------------------------------
# CSV embeddings and sniffing


def test_csv_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(2)
    e = EmbeddingMatrix(
        ids=np.array(["r0", "r1", "r2"]),
        data=rng.standard_normal((3, 5)) * 1e-7,  # exercise repr precision
    )
    path = tmp_path / "e.csv"
    write_embedding_csv(path, e)
    ids, data = read_embedding_csv(path)
    assert ids.tolist() == ["r0", "r1", "r2"]
    np.testing.assert_array_equal(data, e.data)


def test_csv_header_validation(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("foo,e0\nx,1.0\n")
    with pytest.raises(InvalidInput):
        read_embedding_csv(path)
    path.write_text("id\nx\n")
    with pytest.raises(InvalidInput):
        read_embedding_csv(path)
    path.write_text("id,e0,e1\nx,1.0\n")  # short row
    with pytest.raises(InvalidInput):
        read_embedding_csv(path)
    path.write_text("id,e0\n")  # header only
    with pytest.raises(InvalidInput):
        read_embedding_csv(path)


def test_read_embedding_sniffs_format(tmp_path):
    data = np.arange(6.0).reshape(2, 3)
    bpath = tmp_path / "e.oemb"
    cpath = tmp_path / "e.csv"
    write_embedding_oemb(bpath, data)
    write_embedding_csv(cpath, EmbeddingMatrix(ids=np.array(["x", "y"]), data=data))
    ids_b, data_b = read_embedding(bpath)
    ids_c, data_c = read_embedding(cpath)
    assert ids_b is None  # binary rows align positionally
    assert ids_c.tolist() == ["x", "y"]
    np.testing.assert_array_equal(data_b, data)
    np.testing.assert_array_equal(data_c, data)


# ---------------------------------------------------------------------------
# metadata and labels


def test_metadata_roundtrip(tmp_path, records):
    path = tmp_path / "meta.csv"
    splits = np.array(["train", "train", "test"])
    write_metadata_csv(path, records, splits)
    back_records, back_splits = read_metadata_csv(path)
    assert back_records == records
    assert back_splits.tolist() == splits.tolist()


def test_metadata_validation(tmp_path):
    path = tmp_path / "meta.csv"
    path.write_text("id,age,sex\nx,50,Male\n")
    with pytest.raises(InvalidInput, match="columns"):
        read_metadata_csv(path)
    path.write_text("id,age,sex,race,split\nx,fifty,Male,White,train\n")
    with pytest.raises(InvalidInput, match="age"):
        read_metadata_csv(path)
    path.write_text("id,age,sex,race,split\nx,50,Male,White,validation\n")
    with pytest.raises(InvalidInput, match="split"):
        read_metadata_csv(path)
    path.write_text("id,age,sex,race,split\nx,50,Male,Martian,train\n")
    with pytest.raises(UnknownCategory, match="Martian"):
        read_metadata_csv(path)
    path.write_text("id,age,sex,race,split\n")
    with pytest.raises(InvalidInput, match="rows"):
        read_metadata_csv(path)


def test_labels_roundtrip(tmp_path):
    path = tmp_path / "labels.csv"
    ids = ["a", "b", "c"]
    labels = {"effusion": np.array([0, 1, 1]), "edema": np.array([1, 0, 0])}
    write_labels_csv(path, ids, labels)
    back_ids, back = read_labels_csv(path)
    assert back_ids.tolist() == ids
    assert set(back) == {"effusion", "edema"}
    np.testing.assert_array_equal(back["effusion"], labels["effusion"])
    np.testing.assert_array_equal(back["edema"], labels["edema"])


def test_labels_validation(tmp_path):
    path = tmp_path / "labels.csv"
    path.write_text("id,finding\nx,2\n")
    with pytest.raises(InvalidInput, match="0/1"):
        read_labels_csv(path)
    path.write_text("id\nx\n")
    with pytest.raises(InvalidInput):
        read_labels_csv(path)
    path.write_text("id,finding\n")
    with pytest.raises(InvalidInput, match="rows"):
        read_labels_csv(path)


# ---------------------------------------------------------------------------
# probe serialization


def test_probe_roundtrip_bit_identical(tmp_path):
    rng = np.random.default_rng(3)
    e = rng.standard_normal((60, 4))
    y = rng.integers(0, 2, size=60).astype(float)
    y[:2] = [0, 1]
    cfg = TrainConfig(epochs=2, learning_rate=0.03, batch_size=16, seed=11, optimizer="sgd")
    model = fit_binary_probe(e, y, cfg)
    path = tmp_path / "probe.oprb"
    save_probe(path, model)
    back = load_probe(path)
    assert back.task == model.task
    assert back.config == model.config
    np.testing.assert_array_equal(back.weights, model.weights)
    np.testing.assert_array_equal(back.bias, model.bias)
    np.testing.assert_array_equal(predict_scores(back, e), predict_scores(model, e))


def test_probe_load_validation(tmp_path):
    path = tmp_path / "probe.oprb"
    path.write_bytes(b"XXXX" + b"\x00" * 80)
    with pytest.raises(InvalidInput, match="magic"):
        load_probe(path)
    path.write_bytes(b"OP")
    with pytest.raises(InvalidInput, match="truncated"):
        load_probe(path)


def test_probe_payload_length_checked(tmp_path):
    rng = np.random.default_rng(4)
    e = rng.standard_normal((30, 3))
    y = rng.integers(0, 2, size=30).astype(float)
    y[:2] = [0, 1]
    model = fit_binary_probe(e, y, TrainConfig(epochs=1))
    path = tmp_path / "probe.oprb"
    save_probe(path, model)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])  # drop the bias
    with pytest.raises(InvalidInput, match="payload"):
        load_probe(path)


# ---------------------------------------------------------------------------
# digests and JSON


def test_file_digest_is_sha256(tmp_path):
    path = tmp_path / "blob"
    path.write_bytes(b"hello world\n")
    assert file_digest(path) == hashlib.sha256(b"hello world\n").hexdigest()


def test_write_json_key_order_stable(tmp_path):
    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    write_json(p1, {"b": 1, "a": [1, 2]})
    write_json(p2, {"a": [1, 2], "b": 1})
    assert p1.read_bytes() == p2.read_bytes()
    assert json.loads(p1.read_text()) == {"a": [1, 2], "b": 1}


# ---------------------------------------------------------------------------
# joined input loading


def write_bundle(tmp_path, records, data, splits, labels=None, embedding_format="oemb"):
    meta_path = tmp_path / "metadata.csv"
    write_metadata_csv(meta_path, records, splits)
    if embedding_format == "oemb":
        emb_path = tmp_path / "embedding.oemb"
        write_embedding_oemb(emb_path, data)
    else:
        emb_path = tmp_path / "embedding.csv"
        ids = np.array([r.rid for r in records])
        write_embedding_csv(emb_path, EmbeddingMatrix(ids=ids, data=data))
    labels_path = None
    if labels is not None:
        labels_path = tmp_path / "labels.csv"
        write_labels_csv(labels_path, [r.rid for r in records], labels)
    return emb_path, meta_path, labels_path


def test_load_inputs_binary_positional(tmp_path, records):
    data = np.arange(9.0).reshape(3, 3)
    splits = np.array(["train", "train", "test"])
    labels = {"finding": np.array([0, 1, 0])}
    emb, meta, lab = write_bundle(tmp_path, records, data, splits, labels)
    bundle = load_inputs(emb, meta, lab)
    assert bundle.embedding.ids.tolist() == ["a", "b", "c"]
    np.testing.assert_array_equal(bundle.embedding.data, data)
    assert bundle.records == records
    np.testing.assert_array_equal(bundle.labels["finding"], [0, 1, 0])


def test_load_inputs_row_count_mismatch(tmp_path, records):
    data = np.ones((4, 2))  # one extra row
    splits = np.array(["train", "train", "test"])
    meta_path = tmp_path / "metadata.csv"
    write_metadata_csv(meta_path, records, splits)
    emb_path = tmp_path / "embedding.oemb"
    write_embedding_oemb(emb_path, data)
    with pytest.raises(AlignmentError, match="rows"):
        load_inputs(emb_path, meta_path)


def test_load_inputs_csv_id_mismatch(tmp_path, records):
    data = np.ones((3, 2))
    splits = np.array(["train", "train", "test"])
    meta_path = tmp_path / "metadata.csv"
    write_metadata_csv(meta_path, records, splits)
    emb_path = tmp_path / "embedding.csv"
    wrong = EmbeddingMatrix(ids=np.array(["a", "WRONG", "c"]), data=data)
    write_embedding_csv(emb_path, wrong)
    with pytest.raises(AlignmentError, match="WRONG"):
        load_inputs(emb_path, meta_path)


def test_load_inputs_duplicate_metadata_ids(tmp_path):
    dup = (
        ProtectedRecord("a", 50.0, "Male", "White"),
        ProtectedRecord("a", 60.0, "Female", "Black"),
    )
    meta_path = tmp_path / "metadata.csv"
    write_metadata_csv(meta_path, dup, np.array(["train", "test"]))
    emb_path = tmp_path / "embedding.oemb"
    write_embedding_oemb(emb_path, np.ones((2, 2)))
    with pytest.raises(InvalidInput, match="duplicate"):
        load_inputs(emb_path, meta_path)


def test_load_inputs_label_id_mismatch(tmp_path, records):
    data = np.ones((3, 2))
    splits = np.array(["train", "train", "test"])
    emb, meta, _ = write_bundle(tmp_path, records, data, splits)
    labels_path = tmp_path / "labels.csv"
    write_labels_csv(labels_path, ["a", "b", "zzz"], {"finding": np.array([0, 1, 1])})
    with pytest.raises(AlignmentError, match="zzz"):
        load_inputs(emb, meta, labels_path)

"""File formats: embeddings, metadata, labels, probe models, provenance.

Embeddings travel either as a flat binary container or as CSV.  The
binary layout is fixed and little-endian throughout:

    bytes 0..3   magic "OEMB"
    u16          format version (currently 1)
    u64          n rows
    u64          d columns
    u8           dtype tag: 4 = float32, 8 = float64
    payload      n*d values, row-major

The binary file carries no row ids; rows align positionally with the
metadata CSV.  The CSV form has a header ``id,e0,...,e<d-1>`` and
carries ids explicitly.  Metadata is ``id,age,sex,race,split``; labels
are ``id`` plus one 0/1 column per pathology.

Probe models serialize to an "OPRB" record with the task tag, shapes,
the full hyperparameter snapshot, and float64 parameters, so a loaded
model predicts bit-identically.
"""

import csv
import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from .design import ProtectedRecord
from .errors import AlignmentError, InvalidInput, ShapeMismatch
from .glm import ProbeModel, TrainConfig
from .linalg import EmbeddingMatrix

_OEMB_MAGIC = b"OEMB"
_OEMB_VERSION = 1
_OEMB_HEADER = struct.Struct("<4sHQQB")

_OPRB_MAGIC = b"OPRB"
_OPRB_VERSION = 1
_OPRB_HEADER = struct.Struct("<4sHBQQdIIqBddd")

_TASK_TAGS = {"binary": 1, "regression": 2, "multinomial": 3}
_TAG_TASKS = {v: k for k, v in _TASK_TAGS.items()}

_DTYPE_TAGS = {4: np.dtype("<f4"), 8: np.dtype("<f8")}

_SPLITS = ("train", "test")


def write_embedding_oemb(path, e, dtype="f8"):
    """Write an embedding as an OEMB binary file."""
    data = e.data if isinstance(e, EmbeddingMatrix) else np.asarray(e, dtype=np.float64)
    if data.ndim != 2:
        raise InvalidInput("embedding must be 2-D")
    if dtype == "f4":
        tag, payload = 4, np.ascontiguousarray(data, dtype="<f4")
    elif dtype == "f8":
        tag, payload = 8, np.ascontiguousarray(data, dtype="<f8")
    else:
        raise InvalidInput(f"dtype must be 'f4' or 'f8', got {dtype!r}")
    n, d = data.shape
    with open(path, "wb") as fh:
        fh.write(_OEMB_HEADER.pack(_OEMB_MAGIC, _OEMB_VERSION, n, d, tag))
        fh.write(payload.tobytes())


def read_embedding_oemb(path):
    """Read an OEMB file into a float64 array (ids are positional)."""
    with open(path, "rb") as fh:
        header = fh.read(_OEMB_HEADER.size)
        if len(header) < _OEMB_HEADER.size:
            raise InvalidInput(f"{path}: truncated header")
        magic, version, n, d, tag = _OEMB_HEADER.unpack(header)
        if magic != _OEMB_MAGIC:
            raise InvalidInput(f"{path}: bad magic {magic!r}")
        if version != _OEMB_VERSION:
            raise InvalidInput(f"{path}: unsupported version {version}")
        if tag not in _DTYPE_TAGS:
            raise InvalidInput(f"{path}: unknown dtype tag {tag}")
        dt = _DTYPE_TAGS[tag]
        payload = fh.read()
    expected = n * d * dt.itemsize
    if len(payload) != expected:
        raise InvalidInput(
            f"{path}: payload is {len(payload)} bytes, header declares {expected}"
        )
    arr = np.frombuffer(payload, dtype=dt).reshape(n, d)
    return np.ascontiguousarray(arr, dtype=np.float64)


def write_embedding_csv(path, e):
    data = e.data if isinstance(e, EmbeddingMatrix) else np.asarray(e, dtype=np.float64)
    ids = e.ids if isinstance(e, EmbeddingMatrix) else np.arange(data.shape[0])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + [f"e{j}" for j in range(data.shape[1])])
        for i in range(data.shape[0]):
            writer.writerow([ids[i]] + [repr(float(v)) for v in data[i]])


def read_embedding_csv(path):
    """Read the CSV embedding form; returns (ids, data)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id":
            raise InvalidInput(f"{path}: expected header starting with 'id'")
        d = len(header) - 1
        if d < 1:
            raise InvalidInput(f"{path}: no embedding columns")
        ids = []
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d + 1:
                raise InvalidInput(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    if not rows:
        raise InvalidInput(f"{path}: no data rows")
    return np.asarray(ids), np.asarray(rows, dtype=np.float64)


def read_embedding(path):
    """Sniff OEMB vs CSV by magic bytes; returns (ids_or_None, data)."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == _OEMB_MAGIC:
        return None, read_embedding_oemb(path)
    ids, data = read_embedding_csv(path)
    return ids, data


def write_metadata_csv(path, records, splits):
    splits = np.asarray(splits)
    if splits.shape[0] != len(records):
        raise ShapeMismatch(f"{splits.shape[0]} splits for {len(records)} records")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "age", "sex", "race", "split"])
        for rec, split in zip(records, splits):
            writer.writerow([rec.rid, repr(float(rec.age)), rec.sex, rec.race, split])


def read_metadata_csv(path):
    """Read metadata; returns (records, splits).  Category and range
    validation happens in the ProtectedRecord constructor."""
    records = []
    splits = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"id", "age", "sex", "race", "split"}
        missing = required - set(reader.fieldnames or ())
        if missing:
            raise InvalidInput(f"{path}: missing metadata columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                age = float(row["age"])
            except ValueError:
                raise InvalidInput(f"{path}:{lineno}: age {row['age']!r} is not a number")
            records.append(ProtectedRecord(rid=row["id"], age=age, sex=row["sex"], race=row["race"]))
            if row["split"] not in _SPLITS:
                raise InvalidInput(
                    f"{path}:{lineno}: split must be one of {_SPLITS}, got {row['split']!r}"
                )
            splits.append(row["split"])
    if not records:
        raise InvalidInput(f"{path}: no metadata rows")
    return tuple(records), np.asarray(splits)


def write_labels_csv(path, ids, labels):
    """``labels`` maps pathology name -> 0/1 vector aligned with ids."""
    names = list(labels)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + names)
        for i, rid in enumerate(ids):
            writer.writerow([rid] + [int(labels[name][i]) for name in names])


def read_labels_csv(path):
    """Read labels; returns (ids, {name: int vector})."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id" or len(header) < 2:
            raise InvalidInput(f"{path}: expected header 'id,<label>[,...]'")
        names = header[1:]
        ids = []
        cols = [[] for _ in names]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise InvalidInput(f"{path}:{lineno}: expected {len(header)} fields")
            ids.append(row[0])
            for j, v in enumerate(row[1:]):
                if v not in ("0", "1"):
                    raise InvalidInput(f"{path}:{lineno}: label {names[j]!r} must be 0/1, got {v!r}")
                cols[j].append(int(v))
    if not ids:
        raise InvalidInput(f"{path}: no label rows")
    return np.asarray(ids), {name: np.asarray(col, dtype=np.int64) for name, col in zip(names, cols)}


def save_probe(path, model):
    """Serialize a ProbeModel to the OPRB binary record."""
    cfg = model.config
    header = _OPRB_HEADER.pack(
        _OPRB_MAGIC,
        _OPRB_VERSION,
        _TASK_TAGS[model.task],
        model.d,
        model.k_out,
        cfg.learning_rate,
        cfg.epochs,
        cfg.batch_size,
        cfg.seed,
        1 if cfg.optimizer == "adam" else 0,
        cfg.beta1,
        cfg.beta2,
        cfg.epsilon,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.bias, dtype="<f8").tobytes())


def load_probe(path):
    with open(path, "rb") as fh:
        header = fh.read(_OPRB_HEADER.size)
        if len(header) < _OPRB_HEADER.size:
            raise InvalidInput(f"{path}: truncated header")
        (magic, version, tag, d, k, lr, epochs, batch, seed,
         adam, beta1, beta2, eps) = _OPRB_HEADER.unpack(header)
        if magic != _OPRB_MAGIC:
            raise InvalidInput(f"{path}: bad magic {magic!r}")
        if version != _OPRB_VERSION:
            raise InvalidInput(f"{path}: unsupported version {version}")
        if tag not in _TAG_TASKS:
            raise InvalidInput(f"{path}: unknown task tag {tag}")
        payload = fh.read()
    expected = (d * k + k) * 8
    if len(payload) != expected:
        raise InvalidInput(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    flat = np.frombuffer(payload, dtype="<f8")
    cfg = TrainConfig(
        epochs=epochs,
        learning_rate=lr,
        batch_size=batch,
        seed=seed,
        optimizer="adam" if adam else "sgd",
        beta1=beta1,
        beta2=beta2,
        epsilon=eps,
    )
    return ProbeModel(
        task=_TAG_TASKS[tag],
        weights=flat[: d * k].reshape(d, k).copy(),
        bias=flat[d * k:].copy(),
        config=cfg,
    )


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True, eq=False)
class InputBundle:
    """Embedding, metadata, and labels joined and alignment-checked."""

    embedding: EmbeddingMatrix
    records: tuple
    splits: np.ndarray
    labels: dict


def load_inputs(embedding_path, metadata_path, labels_path=None):
    """Load and join the input files.

    Binary embeddings align with metadata by position (and must agree on
    n); CSV embeddings align by id.  Labels, when given, must cover the
    same ids in the same order.
    """
    records, splits = read_metadata_csv(metadata_path)
    meta_ids = np.asarray([r.rid for r in records])
    if np.unique(meta_ids).shape[0] != meta_ids.shape[0]:
        raise InvalidInput(f"{metadata_path}: duplicate ids")

    emb_ids, data = read_embedding(embedding_path)
    if data.shape[0] != meta_ids.shape[0]:
        raise AlignmentError(
            f"embedding has {data.shape[0]} rows, metadata has {meta_ids.shape[0]}"
        )
    if emb_ids is not None and not np.array_equal(emb_ids, meta_ids):
        bad = np.nonzero(emb_ids != meta_ids)[0][0]
        raise AlignmentError(
            f"embedding/metadata ids disagree at row {bad} "
            f"({emb_ids[bad]!r} vs {meta_ids[bad]!r})"
        )
    embedding = EmbeddingMatrix(ids=meta_ids, data=data)

    labels = {}
    if labels_path is not None:
        label_ids, labels = read_labels_csv(labels_path)
        if not np.array_equal(label_ids, meta_ids):
            if label_ids.shape[0] != meta_ids.shape[0]:
                raise AlignmentError(
                    f"labels have {label_ids.shape[0]} rows, metadata has {meta_ids.shape[0]}"
                )
            bad = np.nonzero(label_ids != meta_ids)[0][0]
            raise AlignmentError(
                f"labels/metadata ids disagree at row {bad} "
                f"({label_ids[bad]!r} vs {meta_ids[bad]!r})"
            )
    return InputBundle(embedding=embedding, records=records, splits=splits, labels=labels)

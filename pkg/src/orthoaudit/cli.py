"""Command-line interface.

Subcommands cover every pipeline stage: ``synth`` writes a synthetic
dataset in the standard input formats, ``orthogonalize`` corrects an
embedding (train and test splits independently), ``audit`` runs the full
protocol on original and corrected embeddings, and ``probe`` /
``influence`` / ``pca`` expose the individual stages.

Options come from flags or from a ``--config`` file of key=value lines
(flags win).  Machine outputs keep full float precision; the stdout
summary rounds to three decimals.  Exit codes: 0 success, 2 invalid
configuration or spec, 3 row alignment failure, 4 missing data,
5 numerical failure.
"""

import argparse
import csv
import dataclasses
import os
import sys

import numpy as np

from .design import RACES, DesignMatrix, encode_design
from .errors import (
    AlignmentError,
    Diverged,
    InvalidInput,
    MissingData,
    RankDeficient,
    ShapeMismatch,
    UndefinedMetric,
    UnknownCategory,
    ZeroVariance,
)
from .glm import TrainConfig, predict_scores
from .io import (
    file_digest,
    load_inputs,
    load_probe,
    save_probe,
    write_embedding_oemb,
    write_json,
    write_labels_csv,
    write_metadata_csv,
)
from .linalg import DEFAULT_TOL, EmbeddingMatrix, orthogonalize, orthogonalize_unseen, thin_qr
from .metrics import auc, confusion_metrics, regression_metrics
from .pca import group_marginals, pca_fit, pca_transform
from .pipeline import audit, fit_probe, task_seed
from .stats import influence_report
from .synth import biased_spec, generate, no_signal_spec

_CONFIG_KEYS = {
    "embedding", "metadata", "labels", "model", "out",
    "seed", "restarts", "tol", "threshold", "threads",
    "epochs", "learning_rate", "batch_size", "optimizer",
    "split", "components", "task", "label",
    "n", "d", "preset", "leak", "sigma", "train_fraction",
}

_EXIT_OK = 0
_EXIT_CONFIG = 2
_EXIT_ALIGNMENT = 3
_EXIT_MISSING = 4
_EXIT_NUMERICAL = 5


def _read_config(path):
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InvalidInput(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _CONFIG_KEYS:
                raise InvalidInput(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value.strip()
    return values


class _Options:
    """Flag/config merge: an explicit flag beats the config file, which
    beats the default."""

    def __init__(self, args):
        self.args = args
        path = getattr(args, "config", None)
        self.cfg = _read_config(path) if path else {}

    def get(self, key, cast=str, default=None):
        val = getattr(self.args, key, None)
        if val is not None:
            return val
        if key in self.cfg:
            raw = self.cfg[key]
            try:
                return cast(raw)
            except ValueError:
                raise InvalidInput(f"config key {key}={raw!r} is not a valid {cast.__name__}")
        return default

    def require(self, key, cast=str):
        val = self.get(key, cast)
        if val is None:
            raise InvalidInput(f"missing required option --{key.replace('_', '-')}")
        return val

    def train_config(self, seed):
        return TrainConfig(
            epochs=self.get("epochs", int, 10),
            learning_rate=self.get("learning_rate", float, 1e-4),
            batch_size=self.get("batch_size", int, 256),
            seed=seed,
            optimizer=self.get("optimizer", str, "adam"),
        )


def _outdir(opts):
    out = opts.require("out")
    os.makedirs(out, exist_ok=True)
    return out


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _digests(paths):
    return {os.path.basename(p): file_digest(p) for p in paths}


# ---------------------------------------------------------------- synth

def cmd_synth(opts):
    out = _outdir(opts)
    seed = opts.get("seed", int, 0)
    n = opts.get("n", int, 5000)
    d = opts.get("d", int, 32)
    preset = opts.get("preset", str, "biased")
    if preset == "biased":
        spec = biased_spec(n=n, d=d, seed=seed, leak=opts.get("leak", float, 4.0))
    elif preset in ("null", "none"):
        spec = no_signal_spec(n=n, d=d, seed=seed)
    else:
        raise InvalidInput(f"preset must be 'biased' or 'null', got {preset!r}")
    sigma = opts.get("sigma", float)
    if sigma is not None:
        spec = dataclasses.replace(spec, sigma=sigma)
    frac = opts.get("train_fraction", float)
    if frac is not None:
        spec = dataclasses.replace(spec, train_fraction=frac)

    ds = generate(spec)
    emb_path = os.path.join(out, "embedding.oemb")
    meta_path = os.path.join(out, "metadata.csv")
    labels_path = os.path.join(out, "labels.csv")
    write_embedding_oemb(emb_path, ds.embedding)
    write_metadata_csv(meta_path, ds.records, ds.splits)
    write_labels_csv(labels_path, ds.embedding.ids, {"finding": ds.labels})

    truth_path = os.path.join(out, "truth.json")
    write_json(truth_path, {
        "n": spec.n, "d": spec.d, "seed": spec.seed, "sigma": spec.sigma,
        "preset": preset,
        "b": [[float(v) for v in row] for row in spec.b],
        "w_star": [float(v) for v in spec.w_star],
        "gamma": [float(v) for v in spec.gamma],
    })
    write_json(os.path.join(out, "provenance.json"), {
        "command": "synth",
        "seed": seed,
        "outputs": _digests([emb_path, meta_path, labels_path, truth_path]),
    })
    print(f"wrote {spec.n} rows x {spec.d} dims to {out}")
    return _EXIT_OK


# ------------------------------------------------------- orthogonalize

def _split_bundle(bundle):
    design = encode_design(bundle.records)
    parts = {}
    for split in ("train", "test"):
        mask = bundle.splits == split
        if not mask.any():
            raise MissingData(f"metadata has no rows with split={split!r}")
        ids = bundle.embedding.ids[mask]
        parts[split] = (
            EmbeddingMatrix(ids=ids, data=bundle.embedding.data[mask]),
            DesignMatrix(ids=ids, data=design.data[mask], columns=design.columns),
            mask,
        )
    return parts, design


def cmd_orthogonalize(opts):
    out = _outdir(opts)
    emb_path = opts.require("embedding")
    meta_path = opts.require("metadata")
    tol = opts.get("tol", float, DEFAULT_TOL)
    bundle = load_inputs(emb_path, meta_path)
    parts, design = _split_bundle(bundle)

    outputs = []
    ranks = {}
    for split, fn in (("train", orthogonalize), ("test", orthogonalize_unseen)):
        e, x, mask = parts[split]
        corrected = fn(e, x, tol)
        ranks[split] = thin_qr(x.data, tol).rank
        cpath = os.path.join(out, f"corrected_{split}.oemb")
        mpath = os.path.join(out, f"metadata_{split}.csv")
        write_embedding_oemb(cpath, corrected)
        recs = [r for r, m in zip(bundle.records, mask) if m]
        write_metadata_csv(mpath, recs, np.asarray([split] * len(recs)))
        outputs.extend([cpath, mpath])

    write_json(os.path.join(out, "provenance.json"), {
        "command": "orthogonalize",
        "tolerance": tol,
        "columns": list(design.columns),
        "rank": ranks,
        "inputs": _digests([emb_path, meta_path]),
        "outputs": _digests(outputs),
    })
    print(f"corrected train ({parts['train'][0].n} rows, rank {ranks['train']}) "
          f"and test ({parts['test'][0].n} rows, rank {ranks['test']}) -> {out}")
    return _EXIT_OK


# --------------------------------------------------------------- audit

def write_reports(result, out):
    """Render the audit result dict as plot-ready CSV tables."""
    os.makedirs(out, exist_ok=True)

    rows = []
    for side, tables in result["influence"].items():
        for label, t in tables.items():
            for i, feat in enumerate(t["features"]):
                rows.append([side, label, feat, t["coef_mean"][i], t["coef_std"][i],
                             t["p_mean"][i], t["p_std"][i]])
    _write_csv(os.path.join(out, "influence.csv"),
               ["side", "label", "feature", "coef_mean", "coef_std", "p_mean", "p_std"],
               rows)

    rows = []
    for side, table in result["extraction"].items():
        for attr in ("sex", "age"):
            entry = table[attr]
            if entry.get("undefined"):
                rows.append([side, attr, "", "undefined", "", ""])
                continue
            for metric, (mean, std) in entry.items():
                rows.append([side, attr, "", metric, mean, std])
        for cls, entry in table["race"].items():
            if entry.get("undefined"):
                rows.append([side, "race", cls, "undefined", "", ""])
                continue
            for metric, (mean, std) in entry.items():
                rows.append([side, "race", cls, metric, mean, std])
    _write_csv(os.path.join(out, "extraction.csv"),
               ["side", "attribute", "class", "metric", "mean", "std"],
               rows)

    rows = []
    for label, entry in result["downstream"].items():
        if entry.get("undefined"):
            rows.append([label, None, None, None, None, None, True])
            continue
        rows.append([label, entry["original"][0], entry["original"][1],
                     entry["corrected"][0], entry["corrected"][1],
                     entry["delta_pct"], False])
    _write_csv(os.path.join(out, "downstream.csv"),
               ["label", "original_mean", "original_std", "corrected_mean",
                "corrected_std", "delta_pct", "undefined"],
               rows)

    rows = []
    for side, per_label in result["subgroups"].items():
        for label, attrs in per_label.items():
            for attr, rep in attrs.items():
                for g in rep["groups"]:
                    rows.append([side, label, attr, g["group"], g["n"],
                                 g["auc"], g["delta"], g["delta_pct"]])
    _write_csv(os.path.join(out, "subgroup_auc.csv"),
               ["side", "label", "attribute", "group", "n", "auc", "delta", "delta_pct"],
               rows)

    marg_rows = []
    summary_rows = []
    explained_rows = []
    for side, table in result["pca"].items():
        for j, ratio in enumerate(table["explained_variance_ratio"]):
            explained_rows.append([side, j, ratio])
        for row in table["rows"]:
            edges = table["edges"][row["component"]]
            summary_rows.append([side, row["component"], row["group"], row["n"],
                                 row["mean"], row["std"]])
            for b, count in enumerate(row["counts"]):
                marg_rows.append([side, row["component"], row["group"], b,
                                  edges[b], edges[b + 1], count])
    _write_csv(os.path.join(out, "pca_explained.csv"),
               ["side", "component", "variance_ratio"], explained_rows)
    _write_csv(os.path.join(out, "pca_summary.csv"),
               ["side", "component", "group", "n", "mean", "std"], summary_rows)
    _write_csv(os.path.join(out, "pca_marginals.csv"),
               ["side", "component", "group", "bin", "lo", "hi", "count"], marg_rows)

    write_json(os.path.join(out, "summary.json"), result)


def _print_audit_summary(result):
    print(f"{'label':<24} {'original':>16} {'corrected':>16} {'delta':>8}")
    for label, entry in result["downstream"].items():
        if entry.get("undefined"):
            print(f"{label:<24} {'undefined':>16}")
            continue
        o = f"{entry['original'][0]:.3f} ± {entry['original'][1]:.3f}"
        c = f"{entry['corrected'][0]:.3f} ± {entry['corrected'][1]:.3f}"
        print(f"{label:<24} {o:>16} {c:>16} {entry['delta_pct']:>+7.2f}%")
    ext = result["extraction"]
    for attr, metric in (("sex", "auc"), ("age", "r_squared")):
        pair = []
        for side in ("original", "corrected"):
            entry = ext[side][attr]
            pair.append("undefined" if entry.get("undefined") else f"{entry[metric][0]:.3f}")
        print(f"{attr + ' probe ' + metric:<24} {pair[0]:>16} {pair[1]:>16}")


def cmd_audit(opts):
    out = _outdir(opts)
    emb_path = opts.require("embedding")
    meta_path = opts.require("metadata")
    labels_path = opts.get("labels")
    if labels_path is None:
        raise MissingData("audit requires a labels file (--labels)")
    seed = opts.get("seed", int, 0)
    bundle = load_inputs(emb_path, meta_path, labels_path)
    if not bundle.labels:
        raise MissingData(f"{labels_path}: no label columns")

    result = audit(
        bundle.embedding, bundle.records, bundle.splits, bundle.labels,
        train_config=opts.train_config(seed),
        restarts=opts.get("restarts", int, 10),
        seed=seed,
        tol=opts.get("tol", float, DEFAULT_TOL),
        threshold=opts.get("threshold", float, 0.0),
        threads=opts.get("threads", int),
    )
    result["inputs"] = _digests([emb_path, meta_path, labels_path])
    write_reports(result, out)
    _print_audit_summary(result)
    return _EXIT_OK


# --------------------------------------------------------------- probe

_PROBE_TASKS = ("sex", "age", "race", "label")


def _probe_target(task, label, bundle, mask):
    records = [r for r, m in zip(bundle.records, mask) if m]
    if task == "sex":
        return np.array([1 if r.sex == "Female" else 0 for r in records])
    if task == "age":
        return np.array([r.age for r in records])
    if task == "race":
        return np.array([RACES.index(r.race) for r in records])
    if label is None:
        raise InvalidInput("--task label needs --label NAME")
    if label not in bundle.labels:
        raise MissingData(f"labels file has no column {label!r}")
    return np.asarray(bundle.labels[label])[mask]


def cmd_probe(opts):
    out = _outdir(opts)
    emb_path = opts.require("embedding")
    meta_path = opts.require("metadata")
    task = opts.get("task", str, "label")
    if task not in _PROBE_TASKS:
        raise InvalidInput(f"task must be one of {_PROBE_TASKS}, got {task!r}")
    label = opts.get("label")
    labels_path = opts.get("labels")
    if task == "label" and labels_path is None:
        raise MissingData("probe --task label requires a labels file (--labels)")
    bundle = load_inputs(emb_path, meta_path, labels_path)

    split = opts.get("split", str, "train")
    if split not in ("train", "test", "all"):
        raise InvalidInput(f"split must be train/test/all, got {split!r}")
    mask = np.ones(bundle.embedding.n, bool) if split == "all" else bundle.splits == split
    if not mask.any():
        raise MissingData(f"no rows in split {split!r}")

    seed = opts.get("seed", int, 0)
    cfg = opts.train_config(task_seed(seed, f"probe:{task}:{label or ''}", 0))
    glm_task = "binary" if task in ("sex", "label") else task
    target = _probe_target(task, label, bundle, mask)
    model = fit_probe(glm_task, bundle.embedding.data[mask], target, cfg)

    name = label if task == "label" else task
    model_path = os.path.join(out, f"probe_{name}.oprb")
    save_probe(model_path, model)

    # evaluate on the complementary split when one exists
    eval_split = {"train": "test", "test": "train"}.get(split, "all")
    eval_mask = np.ones(bundle.embedding.n, bool) if eval_split == "all" else bundle.splits == eval_split
    if not eval_mask.any():
        eval_split, eval_mask = split, mask
    z = predict_scores(model, bundle.embedding.data[eval_mask])
    eval_target = _probe_target(task, label, bundle, eval_mask)
    report = {"task": task, "label": label, "trained_on": split,
              "evaluated_on": eval_split, "n_train": int(mask.sum()),
              "n_eval": int(eval_mask.sum()), "seed": seed}
    try:
        if glm_task == "binary":
            report["auc"] = auc(z[:, 0], eval_target)
            rep = confusion_metrics(z[:, 0], eval_target, opts.get("threshold", float, 0.0))
            report.update({k: rep.values[k] for k in
                           ("sensitivity", "specificity", "precision", "f1", "accuracy")})
        elif glm_task == "age":
            rep = regression_metrics(z[:, 0], eval_target)
            report.update(rep.values)
        else:
            report["auc_per_class"] = {
                RACES[k]: auc(z[:, k], (eval_target == k).astype(int))
                for k in range(len(RACES))
            }
    except UndefinedMetric as exc:
        report["undefined"] = str(exc)
    write_json(os.path.join(out, f"probe_{name}.json"), report)
    print(f"saved {model_path}")
    return _EXIT_OK


# ----------------------------------------------------------- influence

def cmd_influence(opts):
    out = _outdir(opts)
    emb_path = opts.require("embedding")
    meta_path = opts.require("metadata")
    model_path = opts.require("model")
    bundle = load_inputs(emb_path, meta_path)
    model = load_probe(model_path)

    split = opts.get("split", str, "test")
    if split not in ("train", "test", "all"):
        raise InvalidInput(f"split must be train/test/all, got {split!r}")
    mask = np.ones(bundle.embedding.n, bool) if split == "all" else bundle.splits == split
    if not mask.any():
        raise MissingData(f"no rows in split {split!r}")

    records = [r for r, m in zip(bundle.records, mask) if m]
    x = encode_design(records)
    z = predict_scores(model, bundle.embedding.data[mask])

    rows = []
    payload = {"model": os.path.basename(model_path), "task": model.task,
               "split": split, "n": int(mask.sum()), "outputs": []}
    for k in range(model.k_out):
        name = f"output_{k}" if model.k_out > 1 else "output"
        rep = influence_report(z[:, k], x, name)
        payload["outputs"].append({
            "name": name,
            "features": list(rep.features),
            "coefficients": [float(v) for v in rep.coefficients],
            "standard_errors": [float(v) for v in rep.standard_errors],
            "t_statistics": [float(v) for v in rep.t_statistics],
            "p_values": [float(v) for v in rep.p_values],
            "dof": rep.dof,
            "r_squared": rep.r_squared,
        })
        for i, feat in enumerate(rep.features):
            rows.append([name, feat, rep.coefficients[i], rep.standard_errors[i],
                         rep.t_statistics[i], rep.p_values[i]])
    _write_csv(os.path.join(out, "influence.csv"),
               ["output", "feature", "coefficient", "standard_error", "t", "p"],
               rows)
    write_json(os.path.join(out, "influence.json"), payload)
    for entry in payload["outputs"]:
        for feat, coef, p in zip(entry["features"], entry["coefficients"], entry["p_values"]):
            print(f"{entry['name']:<10} {feat:<12} coef {coef:+.3f}  p {p:.3f}")
    return _EXIT_OK


# ----------------------------------------------------------------- pca

def cmd_pca(opts):
    out = _outdir(opts)
    emb_path = opts.require("embedding")
    meta_path = opts.require("metadata")
    bundle = load_inputs(emb_path, meta_path)

    split = opts.get("split", str, "test")
    if split not in ("train", "test", "all"):
        raise InvalidInput(f"split must be train/test/all, got {split!r}")
    mask = np.ones(bundle.embedding.n, bool) if split == "all" else bundle.splits == split
    if not mask.any():
        raise MissingData(f"no rows in split {split!r}")

    k = opts.get("components", int, 2)
    data = bundle.embedding.data[mask]
    model = pca_fit(data, k=k)
    proj = pca_transform(model, data)
    sexes = np.array([r.sex for r, m in zip(bundle.records, mask) if m])
    marg = group_marginals(proj, sexes)

    _write_csv(os.path.join(out, "pca_explained.csv"),
               ["component", "variance_ratio"],
               [[j, float(v)] for j, v in enumerate(model.explained_variance_ratio)])
    _write_csv(os.path.join(out, "pca_summary.csv"),
               ["component", "group", "n", "mean", "std"],
               [[r.component, r.group, r.n, r.mean, r.std] for r in marg.rows])
    rows = []
    for r in marg.rows:
        edges = marg.edges[r.component]
        for b, count in enumerate(r.counts):
            rows.append([r.component, r.group, b, float(edges[b]), float(edges[b + 1]), int(count)])
    _write_csv(os.path.join(out, "pca_marginals.csv"),
               ["component", "group", "bin", "lo", "hi", "count"], rows)
    print("explained variance: "
          + ", ".join(f"{v:.3f}" for v in model.explained_variance_ratio))
    return _EXIT_OK


# ---------------------------------------------------------------- main

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="orthoaudit",
        description="Audit and remove linear protected-feature influence "
                    "from embedding matrices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **flags):
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value options file")
        p.add_argument("--out", help="output directory")
        for flag, kwargs in flags.items():
            p.add_argument(f"--{flag.replace('_', '-')}", dest=flag, **kwargs)
        p.set_defaults(func=fn)
        return p

    add("synth", cmd_synth,
        seed={"type": int}, n={"type": int}, d={"type": int},
        preset={"choices": ["biased", "null"]}, leak={"type": float},
        sigma={"type": float}, train_fraction={"type": float})
    add("orthogonalize", cmd_orthogonalize,
        embedding={}, metadata={}, tol={"type": float})
    add("audit", cmd_audit,
        embedding={}, metadata={}, labels={}, seed={"type": int},
        restarts={"type": int}, tol={"type": float}, threshold={"type": float},
        threads={"type": int}, epochs={"type": int},
        learning_rate={"type": float}, batch_size={"type": int},
        optimizer={"choices": ["adam", "sgd"]})
    add("probe", cmd_probe,
        embedding={}, metadata={}, labels={}, task={"choices": list(_PROBE_TASKS)},
        label={}, split={"choices": ["train", "test", "all"]},
        seed={"type": int}, threshold={"type": float}, epochs={"type": int},
        learning_rate={"type": float}, batch_size={"type": int},
        optimizer={"choices": ["adam", "sgd"]})
    add("influence", cmd_influence,
        embedding={}, metadata={}, model={},
        split={"choices": ["train", "test", "all"]})
    add("pca", cmd_pca,
        embedding={}, metadata={}, split={"choices": ["train", "test", "all"]},
        components={"type": int})
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(_Options(args))
    except AlignmentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_ALIGNMENT
    except (InvalidInput, UnknownCategory, ShapeMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_CONFIG
    except (MissingData, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_MISSING
    except (Diverged, RankDeficient, ZeroVariance, UndefinedMetric) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

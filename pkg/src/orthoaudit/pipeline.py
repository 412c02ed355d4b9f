"""End-to-end audit: everything measured once on the original embedding
and once on its orthogonalized counterpart.

Protocol per side (original / corrected):
  * one logistic probe per pathology label, trained over ``restarts``
    random initializations on the train split, scored on the test split;
  * protected-attribute probes (sex logistic, age linear, race
    multinomial) under the same restart protocol;
  * influence of the protected columns on each pathology probe's test
    logits, aggregated over restarts;
  * downstream AUC mean/std and the percent change between sides;
  * per-subgroup AUC deltas on the restart-averaged scores;
  * two-component PCA of the test split with per-sex marginals.

Independent trainings run concurrently; each task's seed is derived
from (base seed, task name, restart index), so results do not depend on
scheduling order.  OD_THREADS caps the worker count.
"""

import dataclasses
import os
import zlib
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _backend
from .design import RACES, SEXES, DesignMatrix, encode_design
from .errors import InvalidInput, UndefinedMetric
from .glm import (
    TrainConfig,
    fit_binary_probe,
    fit_linear_probe,
    fit_multinomial_probe,
    predict_scores,
)
from .linalg import DEFAULT_TOL, EmbeddingMatrix, orthogonalize, orthogonalize_unseen, thin_qr
from .metrics import auc, confusion_metrics, regression_metrics, subgroup_auc_delta
from .pca import group_marginals, pca_fit, pca_transform
from .stats import aggregate_reports, influence_report

SIDES = ("original", "corrected")


def thread_count(requested=None):
    """Worker count: explicit argument, then OD_THREADS, then CPU count."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("OD_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise InvalidInput(f"OD_THREADS={env!r} is not an integer")
    return os.cpu_count() or 1


def task_seed(base_seed, name, restart):
    """Seed for one (task, restart) pair, independent of submission order."""
    ss = np.random.SeedSequence(
        (base_seed & 0x7FFFFFFFFFFFFFFF, zlib.crc32(name.encode()), restart)
    )
    return int(ss.generate_state(1)[0])


def fit_probe(task, e, target, cfg):
    """Dispatch to the probe family for ``task`` (binary/age/race)."""
    if task == "binary":
        return fit_binary_probe(e, target, cfg)
    if task == "age":
        return fit_linear_probe(e, target, cfg)
    if task == "race":
        return fit_multinomial_probe(e, target, cfg, n_classes=len(RACES))
    raise InvalidInput(f"unknown probe task {task!r}")


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.shape[0] > 1 else 0.0
    return [mean, std]


def _split_matrices(embedding, records, splits, tol):
    design = encode_design(records)
    splits = np.asarray(splits)
    out = {}
    for split in ("train", "test"):
        mask = splits == split
        if not mask.any():
            raise InvalidInput(f"no rows in the {split!r} split")
        e = EmbeddingMatrix(ids=embedding.ids[mask], data=embedding.data[mask])
        x = DesignMatrix(ids=design.ids[mask], data=design.data[mask], columns=design.columns)
        out[split] = (e, x, mask)
    e_tr, x_tr, _ = out["train"]
    e_te, x_te, _ = out["test"]
    corrected_train = orthogonalize(e_tr, x_tr, tol)
    corrected_test = orthogonalize_unseen(e_te, x_te, tol)
    return out, corrected_train, corrected_test, design


def audit(embedding, records, splits, labels, *, train_config=None,
          restarts=10, seed=0, tol=DEFAULT_TOL, threshold=0.0, threads=None):
    """Run the full audit; returns a JSON-ready nested dict."""
    if restarts < 1:
        raise InvalidInput(f"restarts must be >= 1, got {restarts}")
    base_cfg = train_config if train_config is not None else TrainConfig()
    split_data, corr_train, corr_test, design = _split_matrices(
        embedding, records, splits, tol
    )
    e_train, x_train, train_mask = split_data["train"]
    e_test, x_test, test_mask = split_data["test"]

    sides = {
        "original": (e_train.data, e_test.data),
        "corrected": (corr_train.data, corr_test.data),
    }

    age_train = np.array([r.age for r in records])[train_mask]
    age_test = np.array([r.age for r in records])[test_mask]
    sex_train = np.array([1 if r.sex == "Female" else 0 for r in records])[train_mask]
    sex_test = np.array([1 if r.sex == "Female" else 0 for r in records])[test_mask]
    race_train = np.array([RACES.index(r.race) for r in records])[train_mask]
    race_test = np.array([RACES.index(r.race) for r in records])[test_mask]
    race_names_test = np.array([r.race for r in records])[test_mask]
    sex_names_test = np.array([r.sex for r in records])[test_mask]

    label_names = list(labels)
    labels_train = {name: np.asarray(labels[name])[train_mask] for name in label_names}
    labels_test = {name: np.asarray(labels[name])[test_mask] for name in label_names}

    # submit every (task, side, restart) training; seeds depend only on
    # the task identity, never on executor scheduling
    jobs = {}
    with ThreadPoolExecutor(max_workers=thread_count(threads)) as pool:
        def submit(task, name, side, target):
            x_tr, x_te = sides[side]
            for r in range(restarts):
                cfg = dataclasses.replace(
                    base_cfg, seed=task_seed(seed, f"{name}:{side}", r)
                )
                jobs[(name, side, r)] = pool.submit(
                    _train_and_score, task, x_tr, target, x_te, cfg
                )

        for side in SIDES:
            for name in label_names:
                submit("binary", f"pathology:{name}", side, labels_train[name])
            submit("binary", "sex", side, sex_train)
            submit("age", "age", side, age_train)
            submit("race", "race", side, race_train)
        scores = {key: fut.result() for key, fut in jobs.items()}

    result = {
        "config": {
            "seed": seed,
            "restarts": restarts,
            "tol": tol,
            "threshold": threshold,
            "backend": _backend.backend_name(),
            "train": dataclasses.asdict(base_cfg),
        },
        "design": {
            "columns": list(design.columns),
            "rank_train": thin_qr(x_train.data, tol).rank,
            "rank_test": thin_qr(x_test.data, tol).rank,
        },
        "counts": {"train": int(e_train.n), "test": int(e_test.n)},
    }

    result["influence"] = {
        side: _influence_tables(scores, label_names, side, restarts, x_test)
        for side in SIDES
    }
    result["extraction"] = {
        side: _extraction_table(
            scores, side, restarts, sex_test, age_test, race_test, threshold
        )
        for side in SIDES
    }
    result["downstream"], result["subgroups"] = _downstream_tables(
        scores, label_names, restarts, labels_test, race_names_test, sex_names_test
    )
    result["pca"] = {
        "original": _pca_table(e_test.data, sex_names_test),
        "corrected": _pca_table(corr_test.data, sex_names_test),
    }
    return result


def _train_and_score(task, x_train, target, x_eval, cfg):
    model = fit_probe(task, x_train, target, cfg)
    return predict_scores(model, x_eval)


def _influence_tables(scores, label_names, side, restarts, x_test):
    tables = {}
    for name in label_names:
        reports = [
            influence_report(scores[(f"pathology:{name}", side, r)][:, 0], x_test, name)
            for r in range(restarts)
        ]
        agg = aggregate_reports(reports)
        tables[name] = {
            "features": list(agg.features),
            "coef_mean": [float(v) for v in agg.coef_mean],
            "coef_std": [float(v) for v in agg.coef_std],
            "p_mean": [float(v) for v in agg.p_mean],
            "p_std": [float(v) for v in agg.p_std],
            "n_reports": agg.n_reports,
        }
    return tables


def _extraction_table(scores, side, restarts, sex_test, age_test, race_test, threshold):
    out = {}

    sex_scores = [scores[("sex", side, r)][:, 0] for r in range(restarts)]
    sex = {}
    try:
        per_metric = {}
        for s in sex_scores:
            per_metric.setdefault("auc", []).append(auc(s, sex_test))
            rep = confusion_metrics(s, sex_test, threshold)
            for key in ("sensitivity", "specificity", "precision", "f1", "accuracy"):
                per_metric.setdefault(key, []).append(rep.values[key])
        sex = {key: _mean_std(vals) for key, vals in per_metric.items()}
    except UndefinedMetric:
        sex = {"undefined": True}
    out["sex"] = sex

    age_metrics = {}
    for r in range(restarts):
        rep = regression_metrics(scores[("age", side, r)][:, 0], age_test)
        age_metrics.setdefault("mae", []).append(rep.values["mae"])
        age_metrics.setdefault("r_squared", []).append(rep.values["r_squared"])
    out["age"] = {key: _mean_std(vals) for key, vals in age_metrics.items()}

    race = {}
    for k, race_name in enumerate(RACES):
        members = race_test == k
        vals = {}
        try:
            for r in range(restarts):
                z = scores[("race", side, r)]
                vals.setdefault("auc", []).append(auc(z[:, k], members.astype(int)))
                pred = z.argmax(axis=1) == k
                tp = np.count_nonzero(pred & members)
                fn = np.count_nonzero(~pred & members)
                fp = np.count_nonzero(pred & ~members)
                tn = np.count_nonzero(~pred & ~members)
                vals.setdefault("sensitivity", []).append(
                    tp / (tp + fn) if tp + fn else 0.0
                )
                vals.setdefault("specificity", []).append(
                    tn / (tn + fp) if tn + fp else 0.0
                )
                vals.setdefault("accuracy", []).append((tp + tn) / members.shape[0])
            race[race_name] = {key: _mean_std(v) for key, v in vals.items()}
        except UndefinedMetric:
            race[race_name] = {"undefined": True}
    out["race"] = race
    return out


def _downstream_tables(scores, label_names, restarts, labels_test,
                       race_names_test, sex_names_test):
    downstream = {}
    subgroups = {side: {} for side in SIDES}
    for name in label_names:
        y = labels_test[name]
        entry = {}
        defined = True
        for side in SIDES:
            try:
                aucs = [
                    auc(scores[(f"pathology:{name}", side, r)][:, 0], y)
                    for r in range(restarts)
                ]
                entry[side] = _mean_std(aucs)
            except UndefinedMetric:
                defined = False
        if defined:
            orig, corr = entry["original"][0], entry["corrected"][0]
            entry["delta_pct"] = (corr - orig) / orig * 100.0
            entry["undefined"] = False
            for side in SIDES:
                mean_score = np.mean(
                    [scores[(f"pathology:{name}", side, r)][:, 0] for r in range(restarts)],
                    axis=0,
                )
                subgroups[side][name] = {
                    "race": _subgroup_dict(mean_score, y, race_names_test),
                    "sex": _subgroup_dict(mean_score, y, sex_names_test),
                }
        else:
            entry = {"undefined": True}
        downstream[name] = entry
    return downstream, subgroups


def _subgroup_dict(score, y, group_names):
    rep = subgroup_auc_delta(score, y, group_names)
    return {
        "overall": float(rep.overall),
        "groups": [
            {
                "group": g.group,
                "n": g.n,
                "auc": None if g.auc is None else float(g.auc),
                "delta": None if g.delta is None else float(g.delta),
                "delta_pct": None if g.delta_pct is None else float(g.delta_pct),
            }
            for g in rep.groups
        ],
    }


def _pca_table(data, sex_names):
    model = pca_fit(data, k=2)
    proj = pca_transform(model, data)
    marg = group_marginals(proj, sex_names)
    return {
        "explained_variance_ratio": [float(v) for v in model.explained_variance_ratio],
        "edges": [[float(v) for v in e] for e in marg.edges],
        "rows": [
            {
                "group": row.group,
                "component": row.component,
                "n": row.n,
                "mean": row.mean,
                "std": row.std,
                "counts": [int(c) for c in row.counts],
            }
            for row in marg.rows
        ],
    }

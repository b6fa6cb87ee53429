"""Command-line pipeline: ``ecogspeech <command> --out RUN_DIR [options]``.

Every command writes into a fresh run directory and finishes with a
``manifest.json`` holding the full configuration, the tool version, the
checksums of the inputs and of every output file. All randomness comes from
``--seed`` through :func:`ecogspeech.seeding.derive_seed`.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import warnings
from collections import Counter
from pathlib import Path

import numpy as np

from . import __version__
from . import evaluation as ev
from . import search as srch
from . import structure, xfreq
from .dataset import (
    BLOCKS,
    EXCLUDED,
    cv_inventory,
    load_tensor,
    rasterize_features,
    save_tensor,
    stratified_folds,
    subsample_training,
    task_labels,
)
from .errors import EcogSpeechError, FormatError, InvalidInputError
from .models import TrainConfig, predict_proba, save_model, spec_for, train
from .seeding import derive_seed
from .signal_processing import (
    FEATURE_BANDS,
    FilterTensor,
    RawRecording,
    preprocess,
    preprocess_filters,
)
from .synth import SynthConfig, synth_generate

WORKERS_ENV = "ECOGSPEECH_WORKERS"


# ---------------------------------------------------------------- helpers

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_plain(obj), indent=1, sort_keys=True) + "\n")


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise FormatError(f"{path} is not valid JSON: {err}") from err


def write_tsv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r[c]) for c in columns])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "nan" if not math.isfinite(v) else repr(float(v))
    return v


def _fresh_dir(path):
    path = Path(path)
    if path.exists() and (not path.is_dir() or any(path.iterdir())):
        raise InvalidInputError(f"output directory {path} exists and is not empty")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolve(path, default_name):
    path = Path(path)
    if path.is_dir():
        path = path / default_name
    if not path.exists():
        raise InvalidInputError(f"input {path} does not exist")
    return path


def _write_manifest(out, args, inputs):
    outputs = {}
    for p in sorted(Path(out).rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            outputs[p.relative_to(out).as_posix()] = _sha256(p)
    config = {k: v for k, v in vars(args).items()
              if k not in ("out", "workers", "func") and k not in inputs}
    write_json(Path(out) / "manifest.json", {
        "tool": "ecogspeech",
        "version": __version__,
        "command": args.command,
        "config": config,
        "inputs": {k: _sha256(v) for k, v in sorted(inputs.items())},
        "outputs": outputs,
    })


def _csv_list(text, cast=str):
    return [cast(x) for x in str(text).split(",") if x.strip()]


def _task_dataset(tensor, labels, bands, task):
    """Rasterized dataset on task labels; trials outside the task are dropped."""
    projected = task_labels(labels, task)
    keep = np.array([lab is not EXCLUDED for lab in projected])
    if not keep.any():
        raise InvalidInputError(f"no trials carry a label for task {task!r}")
    idx = np.flatnonzero(keep)
    sub = tensor.select(idx)
    ds = rasterize_features(sub, [projected[i] for i in idx], bands,
                            provenance={"task": task})
    kept_labels = set(ds.labels)
    source = [labels[i] for i in idx if projected[i] in kept_labels]
    return ds, source


def _load_spectral(path):
    tensor, labels, _ = load_tensor(_resolve(path, "tensor.json"))
    if isinstance(tensor, FilterTensor):
        raise InvalidInputError("this command needs a band-resolution tensor")
    if labels is None:
        raise InvalidInputError("tensor bundle carries no trial labels")
    return tensor, labels


def _default_train_config(model):
    if model == "logistic":
        return TrainConfig(learning_rate=0.01, batch_size=32, max_epochs=60, weight_decay=1e-4)
    return TrainConfig(learning_rate=0.01, batch_size=32, max_epochs=60, weight_decay=1e-4,
                       init_scale=0.05)


def _fold_chance(ds, folds, seed):
    y = ds.y
    return [ev.chance_accuracy(Counter(y[f.train].tolist()), y[f.test].tolist(),
                               seed=derive_seed(seed, "chance", f.fold_id)).mean
            for f in folds]


def _predictions_record(ds, source_labels, folds, probs, test_acc, chance, task, bands,
                        model):
    fold_of = np.zeros(ds.n_trials, dtype=int)
    for f in folds:
        fold_of[f.test] = f.fold_id
    return {
        "kind": "predictions",
        "task": task,
        "bands": list(bands),
        "model": model,
        "classes": list(ds.classes),
        "labels": list(ds.labels),
        "source_labels": list(source_labels),
        "fold": fold_of,
        "probs": np.round(probs, 12),
        "test_accuracy": test_acc,
        "chance": chance,
    }


def _load_predictions(path):
    rec = read_json(_resolve(path, "predictions.json"))
    if rec.get("kind") != "predictions":
        raise FormatError(f"{path} is not a predictions file")
    probs = np.asarray(rec["probs"], dtype=float)
    if probs.shape != (len(rec["labels"]), len(rec["classes"])):
        raise FormatError("prediction matrix does not match labels and classes")
    return rec, probs


def _summary_from_predictions(rec, probs):
    index = {c: i for i, c in enumerate(rec["classes"])}
    true_idx = np.array([index[lab] for lab in rec["labels"]])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ev.confusion_from_probs(probs, true_idx, tuple(rec["classes"]))


def _mean_sem(values):
    v = np.asarray(values, dtype=float)
    sem = float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    return float(np.mean(v)), sem


# --------------------------------------------------------------- commands

def cmd_synth(args):
    out = _fresh_dir(args.out)
    classes = tuple(_csv_list(args.classes)) if args.classes else None
    if classes is None and args.n_classes:
        classes = cv_inventory()[:args.n_classes]
    cfg = SynthConfig(
        classes=classes, trials_per_class=args.trials, n_electrodes=args.electrodes,
        snr=args.snr, beta_coupling=args.beta_coupling, beta_desync=args.beta_desync,
        resolution=args.resolution, seed=derive_seed(args.seed, "synth"),
    )
    tensor, labels, truth = synth_generate(cfg)
    save_tensor(tensor, out / "tensor.json", labels, {"source": "synthetic"})
    write_json(out / "ground_truth.json", truth.to_dict())
    write_json(out / "synth_config.json", cfg.to_dict())
    _write_manifest(out, args, {})
    return 0


def _read_events(path):
    times, labels = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if not reader.fieldnames or not {"time", "label"} <= set(reader.fieldnames):
            raise FormatError("events file needs tab-separated 'time' and 'label' columns")
        for row in reader:
            times.append(float(row["time"]))
            labels.append(row["label"])
    return times, labels


def cmd_preprocess(args):
    out = _fresh_dir(args.out)
    with np.load(args.raw) as f:
        if "voltage" not in f or "sample_rate" not in f:
            raise FormatError("raw file needs 'voltage' and 'sample_rate' arrays")
        raw = RawRecording(
            f["voltage"], float(f["sample_rate"]),
            frozenset(f["bad_channels"].tolist()) if "bad_channels" in f else frozenset(),
            tuple(f["baseline_window"].tolist()) if "baseline_window" in f else None,
        )
    times, labels = _read_events(args.events)
    allow_flat = not args.strict_flat
    if args.resolution == "filter":
        tensor = preprocess_filters(raw, times, rate=args.filter_rate, allow_flat=allow_flat)
    else:
        bands = args.band or list(FEATURE_BANDS)
        tensor = preprocess(raw, times, bands=bands, allow_flat=allow_flat)
    save_tensor(tensor, out / "tensor.json", labels, {"source": "recording"})
    _write_manifest(out, args, {"raw": args.raw, "events": args.events})
    return 0


def cmd_train(args):
    out = _fresh_dir(args.out)
    tensor, labels = _load_spectral(args.tensor)
    bands = args.band or ["high_gamma"]
    ds, source = _task_dataset(tensor, labels, bands, args.task)
    folds = stratified_folds(ds, args.folds, derive_seed(args.seed, "folds"))
    hidden = tuple(_csv_list(args.hidden, int)) if args.hidden else ()
    model = "deep" if hidden else "logistic"
    spec = spec_for(ds, hidden, args.nonlinearity)
    base = _default_train_config(model)
    probs = np.zeros((ds.n_trials, len(ds.classes)))
    test_acc = []
    (out / "models").mkdir()
    for f in folds:
        cfg = TrainConfig(**{**base.to_dict(), "seed": derive_seed(args.seed, "train", f.fold_id)})
        m = train(ds, f.without_test(), spec, cfg)
        save_model(m, out / "models" / f"fold{f.fold_id}.json")
        p = predict_proba(m, ds.features[f.test].astype(float))
        probs[f.test] = p
        test_acc.append(float(np.mean(np.argmax(p, axis=1) == ds.y[f.test])))
    chance = _fold_chance(ds, folds, args.seed)
    write_json(out / "predictions.json", _predictions_record(
        ds, source, folds, probs, test_acc, chance, args.task, bands,
        {"family": model, "hidden": list(hidden), "nonlinearity": args.nonlinearity,
         "config": base.to_dict()}))
    _write_manifest(out, args, {"tensor": _resolve(args.tensor, "tensor.json")})
    return 0


def cmd_search(args):
    out = _fresh_dir(args.out)
    tensor, labels = _load_spectral(args.tensor)
    bands = args.band or ["high_gamma"]
    ds, source = _task_dataset(tensor, labels, bands, args.task)
    folds = stratified_folds(ds, args.folds, derive_seed(args.seed, "folds"))
    result = srch.run_search(ds, folds, args.search_budget, derive_seed(args.seed, "search"),
                             model=args.model, log_path=out / "search_log.jsonl",
                             workers=args.workers)
    write_json(out / "search.json", {
        **result.summary(),
        "candidates": [c.to_dict() for c in result.candidates],
        "val_accuracy": result.val_accuracy,
    })
    chance = _fold_chance(ds, folds, args.seed)
    winner = result.candidates[result.winner]
    write_json(out / "predictions.json", _predictions_record(
        ds, source, folds, result.test_probs, result.test_accuracy, chance, args.task, bands,
        {"family": args.model, "winner": winner.to_dict()}))
    _write_manifest(out, args, {"tensor": _resolve(args.tensor, "tensor.json")})
    return 0


def evaluate_predictions(rec, probs):
    """Accuracy, chance and information metrics for one predictions record."""
    summary = _summary_from_predictions(rec, probs)
    acc_mean, acc_sem = _mean_sem(rec["test_accuracy"])
    chance_mean, chance_sem = _mean_sem(rec["chance"])
    soft = ev.channel_report(summary, "soft")
    hard = ev.channel_report(summary, "hard")
    result = {
        "task": rec["task"],
        "n_classes": len(rec["classes"]),
        "n_trials": len(rec["labels"]),
        "accuracy": acc_mean,
        "accuracy_sem": acc_sem,
        "pooled_accuracy": summary.accuracy,
        "chance": chance_mean,
        "chance_sem": chance_sem,
        "accuracy_over_chance": acc_mean / chance_mean if chance_mean > 0 else None,
        "wolpaw_bits": soft.wolpaw,
        "capacity_bits": soft.capacity,
        "capacity_hard_bits": hard.capacity,
        "mutual_information_bits": soft.mutual_information,
        "itr_bits_per_s": soft.itr,
        "capacity_prior": soft.capacity_prior,
    }
    if rec["task"] == "cv":
        pred = [rec["classes"][i] for i in np.argmax(probs, axis=1)]
        result["restricted"] = {}
        for task in ("consonant", "vowel", "location", "degree"):
            try:
                result["restricted"][task] = ev.restrict_to_task(pred, rec["labels"], task)
            except EcogSpeechError:
                result["restricted"][task] = None
    return summary, result


def cmd_evaluate(args):
    out = _fresh_dir(args.out)
    rec, probs = _load_predictions(args.predictions)
    summary, result = evaluate_predictions(rec, probs)
    write_json(out / "evaluation.json", result)
    rows = [{"true": t, "predicted": c, "probability": float(summary.soft[i, j]),
             "count": int(summary.hard[i, j])}
            for i, t in enumerate(summary.row_classes) for j, c in enumerate(summary.classes)]
    write_tsv(out / "confusion.tsv", rows, ["true", "predicted", "probability", "count"])
    _write_manifest(out, args, {"predictions": _resolve(args.predictions, "predictions.json")})
    return 0


def cmd_cluster(args):
    out = _fresh_dir(args.out)
    rec, probs = _load_predictions(args.predictions)
    summary = _summary_from_predictions(rec, probs)
    leaves = summary.row_classes
    feats = summary.soft
    dendro = structure.ward_cluster(feats, leaves)
    Path(out / "dendrogram.tsv").write_text(dendro.merge_lines())
    curve = structure.cluster_count_curve(dendro)
    write_tsv(out / "cluster_curve.tsv", [{"cutoff": c, "n_clusters": n} for c, n in curve],
              ["cutoff", "n_clusters"])
    cutoff = args.cutoff if args.cutoff is not None else structure.knee_cutoff(dendro)
    assignment = structure.clusters_at_cutoff(dendro, cutoff)
    result = {
        "leaf_order": [leaves[i] for i in dendro.leaf_order()],
        "cutoff": cutoff,
        "clusters": {lab: int(a) for lab, a in zip(leaves, assignment)},
        "tree": dendro.to_nested(),
    }
    if rec["task"] == "cv" and all(c in cv_inventory() for c in leaves):
        result["cluster_names"] = structure.cluster_names(assignment, leaves, "major_articulator")
        net = structure.pairwise_distances(feats, labels=leaves)
        corr = {}
        rows = []
        for block in BLOCKS:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                cs = structure.articulatory_distance_correlation(net, block)
            entry = {"median": cs.median if len(cs.values) else None,
                     "values": dict(zip(cs.labels, cs.values)), "excluded": list(cs.excluded)}
            if len(cs.values) >= 5:
                t, p = ev.wsrt_bonferroni(cs.values, np.zeros(len(cs.values)),
                                          n_corrections=len(BLOCKS))
                entry["wsrt_t_plus"], entry["wsrt_p_bonferroni"] = t, p
            corr[block] = entry
            rows += [{"block": block, "cv": c, "correlation": float(v)}
                     for c, v in zip(cs.labels, cs.values)]
        result["distance_correlation"] = corr
        write_tsv(out / "distance_correlation.tsv", rows, ["block", "cv", "correlation"])
    write_json(out / "cluster.json", result)
    _write_manifest(out, args, {"predictions": _resolve(args.predictions, "predictions.json")})
    return 0


def cmd_xfreq(args):
    out = _fresh_dir(args.out)
    tensor, labels, _ = load_tensor(_resolve(args.tensor, "tensor.json"))
    if labels is None:
        raise InvalidInputError("tensor bundle carries no trial labels")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        avg = xfreq.average_on_common_grid(tensor, labels)
    power = xfreq.hg_power(avg)
    corr = xfreq.hg_beta_correlation(avg)
    split = xfreq.fit_activity_threshold(power, corr)
    spectra = [xfreq.band_hg_correlation(avg)]
    try:
        spectra += list(xfreq.split_correlation_spectra(avg, split))
    except EcogSpeechError:
        pass
    rows = [r for s in spectra for r in s.rows()]
    write_tsv(out / "xfreq_spectrum.tsv", rows, ["group", "frequency", "mean", "sem", "n"])
    hist = xfreq.hg_beta_histogram(avg)
    hrows = []
    for kind in ("correlation", "power"):
        counts, edges = hist[kind]["counts"], hist[kind]["edges"]
        hrows += [{"quantity": kind, "left": float(edges[i]), "right": float(edges[i + 1]),
                   "count": int(counts[i])} for i in range(len(counts))]
    write_tsv(out / "xfreq_histogram.tsv", hrows, ["quantity", "left", "right", "count"])
    binned = xfreq.binned_summary(power, corr)
    write_tsv(out / "xfreq_binned.tsv", binned, ["power", "correlation", "sem", "n"])
    units = [{"cv": c, "electrode": e, "power": float(power[i, e]),
              "correlation": float(corr[i, e]), "active": bool(split.active[i, e])}
             for i, c in enumerate(avg.classes) for e in range(power.shape[1])]
    write_tsv(out / "xfreq_units.tsv", units, ["cv", "electrode", "power", "correlation",
                                               "active"])
    result = {
        "threshold": split.threshold, "slope": split.slope, "intercept": split.intercept,
        "n_units": int(split.active.size), "n_active": int(split.active.sum()),
        "beta_mean": {s.group: s.band_mean("beta_aggregate") for s in spectra},
        "correlation_modes": xfreq.count_modes(hist["correlation"]["counts"]),
    }
    write_json(out / "xfreq.json", result)
    _write_manifest(out, args, {"tensor": _resolve(args.tensor, "tensor.json")})
    return 0


def cmd_scaling(args):
    out = _fresh_dir(args.out)
    tensor, labels = _load_spectral(args.tensor)
    bands = args.band or ["high_gamma"]
    ds, _ = _task_dataset(tensor, labels, bands, args.task)
    folds = stratified_folds(ds, args.folds, derive_seed(args.seed, "folds"))
    fractions = _csv_list(args.fraction, float) if args.fraction else [0.25, 0.5, 0.75, 1.0]
    spec = spec_for(ds)
    base = _default_train_config("logistic")
    rows, sizes, accs = [], [], []
    for frac in fractions:
        fold_acc, fold_n, chance = [], [], []
        for f in folds:
            sub = subsample_training(f, ds, frac, derive_seed(args.seed, "subsample", frac,
                                                                 f.fold_id))
            cfg = TrainConfig(**{**base.to_dict(),
                                 "seed": derive_seed(args.seed, "train", frac, f.fold_id)})
            m = train(ds, sub.without_test(), spec, cfg)
            p = predict_proba(m, ds.features[f.test].astype(float))
            a = float(np.mean(np.argmax(p, axis=1) == ds.y[f.test]))
            fold_acc.append(a)
            fold_n.append(len(sub.train))
            chance.append(ev.chance_accuracy(Counter(ds.y[sub.train].tolist()),
                                             ds.y[f.test].tolist(),
                                             seed=derive_seed(args.seed, "chance", frac,
                                                              f.fold_id)).mean)
        sizes += fold_n
        accs += fold_acc
        m_acc, s_acc = _mean_sem(fold_acc)
        rows.append({"fraction": frac, "n_train": float(np.mean(fold_n)), "accuracy": m_acc,
                     "sem": s_acc, "chance": float(np.mean(chance))})
    write_tsv(out / "scaling.tsv", rows, ["fraction", "n_train", "accuracy", "sem", "chance"])
    result = {"rows": rows, "task": args.task}
    if len(set(sizes)) >= 2:
        slope, se = ev.scaling_slope(sizes, accs)
        result["slope_per_1000"], result["slope_se"] = slope, se
    write_json(out / "scaling.json", result)
    _write_manifest(out, args, {"tensor": _resolve(args.tensor, "tensor.json")})
    return 0


def cmd_timepoint(args):
    out = _fresh_dir(args.out)
    tensor, labels = _load_spectral(args.tensor)
    band = (args.band or ["high_gamma"])[0]
    n_time = len(tensor.times[band])
    idx = list(range(0, n_time, max(1, args.stride)))
    res = ev.timepoint_decoding(tensor, labels, args.task, band, args.folds,
                                derive_seed(args.seed, "timepoint") % (2**32), time_indices=idx)
    rows = [{"time": t, "accuracy": a, "sem": s, "chance": c}
            for t, a, s, c in zip(res["time"], res["accuracy"], res["sem"], res["chance"])]
    write_tsv(out / "timepoint.tsv", rows, ["time", "accuracy", "sem", "chance"])
    write_json(out / "timepoint.json", res)
    _write_manifest(out, args, {"tensor": _resolve(args.tensor, "tensor.json")})
    return 0


TABLE_COLUMNS = ["run", "task", "bands", "model", "n_classes", "accuracy", "accuracy_sem", "chance",
                 "accuracy_over_chance", "wolpaw_bits", "capacity_bits", "capacity_hard_bits"]


def cmd_report(args):
    out = _fresh_dir(args.out)
    table, inputs = [], {}
    for k, run in enumerate(args.inputs):
        run = Path(run)
        name = f"run{k}"
        if not run.is_dir():
            raise InvalidInputError(f"report input {run} is not a run directory")
        pred = run / "predictions.json"
        if pred.exists():
            inputs[f"{name}/predictions"] = pred
            rec, probs = _load_predictions(pred)
            summary, res = evaluate_predictions(rec, probs)
            family = rec.get("model", {}).get("family", "")
            table.append({"run": name, "model": family, "bands": "+".join(rec["bands"]),
                          **{c: res[c] for c in TABLE_COLUMNS if c in res}})
            rows = [{"true": t, "predicted": c, "probability": float(summary.soft[i, j])}
                    for i, t in enumerate(summary.row_classes)
                    for j, c in enumerate(summary.classes)]
            write_tsv(out / f"{name}_soft_confusion.tsv", rows, ["true", "predicted",
                                                                  "probability"])
        for fname in ("xfreq_spectrum.tsv", "xfreq_binned.tsv", "xfreq_histogram.tsv",
                      "scaling.tsv", "timepoint.tsv", "dendrogram.tsv", "cluster_curve.tsv",
                      "distance_correlation.tsv"):
            src = run / fname
            if src.exists():
                inputs[f"{name}/{fname}"] = src
                (out / f"{name}_{fname}").write_bytes(src.read_bytes())
    if not table and not inputs:
        raise InvalidInputError("no recognizable outputs in the report inputs")
    write_tsv(out / "summary.tsv", table, TABLE_COLUMNS)
    write_json(out / "summary.json", table)
    args_inputs = dict(inputs)
    _write_manifest(out, argparse.Namespace(**{k: v for k, v in vars(args).items()
                                               if k != "inputs"}), args_inputs)
    return 0


# ----------------------------------------------------------------- parser

def _default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def build_parser():
    p = argparse.ArgumentParser(prog="ecogspeech", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help_text):
        c = sub.add_parser(name, help=help_text)
        c.add_argument("--out", required=True, help="fresh output run directory")
        c.add_argument("--seed", type=int, default=0)
        c.add_argument("--workers", type=int, default=_default_workers(),
                       help=f"worker processes (default from ${WORKERS_ENV}, else 1)")
        c.set_defaults(func=func)
        return c

    def modeling(c):
        c.add_argument("--tensor", required=True, help="tensor bundle or run directory")
        c.add_argument("--band", action="append", choices=FEATURE_BANDS,
                       help="feature band; repeat to concatenate (default high_gamma)")
        c.add_argument("--task", default="cv",
                       choices=("cv", "consonant", "vowel", "location", "degree"))
        c.add_argument("--folds", type=int, default=10)

    c = command("synth", cmd_synth, "generate a synthetic dataset with ground truth")
    c.add_argument("--classes", help="comma-separated CV names")
    c.add_argument("--n-classes", type=int, help="first N CVs of the inventory")
    c.add_argument("--trials", type=int, default=30)
    c.add_argument("--electrodes", type=int, default=32)
    c.add_argument("--snr", type=float, default=1.0)
    c.add_argument("--beta-coupling", type=float, default=0.0)
    c.add_argument("--beta-desync", type=float, default=0.0)
    c.add_argument("--resolution", choices=("band", "filter"), default="band")

    c = command("preprocess", cmd_preprocess, "raw recording to z-scored trial tensors")
    c.add_argument("--raw", required=True,
                   help=".npz with voltage (electrode x sample), sample_rate, optional "
                        "bad_channels and baseline_window")
    c.add_argument("--events", required=True, help="TSV with time (s) and label columns")
    c.add_argument("--band", action="append", choices=FEATURE_BANDS)
    c.add_argument("--resolution", choices=("band", "filter"), default="band")
    c.add_argument("--filter-rate", type=float, default=100.0)
    c.add_argument("--strict-flat", action="store_true",
                   help="fail on zero-variance baselines instead of passing them through")

    c = command("train", cmd_train, "train one configuration on every fold")
    modeling(c)
    c.add_argument("--hidden", default="", help="comma-separated hidden sizes (empty = logistic)")
    c.add_argument("--nonlinearity", default="relu", choices=("relu", "tanh", "sigmoid"))

    c = command("search", cmd_search, "random hyperparameter search")
    modeling(c)
    c.add_argument("--search-budget", type=int, default=50)
    c.add_argument("--model", choices=("deep", "logistic"), default="deep")

    c = command("evaluate", cmd_evaluate, "accuracy, chance and channel capacity")
    c.add_argument("--predictions", required=True)

    c = command("cluster", cmd_cluster, "Ward dendrogram and articulatory distance correlation")
    c.add_argument("--predictions", required=True)
    c.add_argument("--cutoff", type=float, default=None)

    c = command("xfreq", cmd_xfreq, "Hγ cross-frequency amplitude correlations")
    c.add_argument("--tensor", required=True)

    c = command("scaling", cmd_scaling, "accuracy versus training-set size")
    modeling(c)
    c.add_argument("--fraction", help="comma-separated training fractions")

    c = command("timepoint", cmd_timepoint, "per-time-sample decoding")
    modeling(c)
    c.add_argument("--stride", type=int, default=1)

    c = command("report", cmd_report, "capacity summary table and plot-data files")
    c.add_argument("inputs", nargs="+", help="run directories to aggregate")
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EcogSpeechError as err:
        if err.stage is None:
            err.stage = args.command
        print(json.dumps(err.to_record()), file=sys.stderr)
        return 2
    except (OSError, KeyError, ValueError) as err:
        record = {"error": type(err).__name__, "message": str(err), "stage": args.command}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

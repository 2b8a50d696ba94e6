"""Batch pipeline driver.

Each subcommand is one stage with explicit file handoffs, so every stage can
be re-run independently on the previous stage's artifacts:

    synth -> preprocess -> segment -> train -> infer -> fuse -> eval -> report

A ``run_manifest.json`` (seeds, parameters, package version) accompanies
every output directory. Two runs with identical configuration and seeds
produce byte-identical CSV artifacts.
"""

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import preprocess as pp
from .annotate import annotate_windows, split_trials, training_filter
from .dataio import (
    DataFormatError,
    MODEL_FORMAT_VERSION,
    ModelArtifact,
    N_CLASSES,
    load_detection_frames,
    load_feature_table,
    load_manifest,
    load_model,
    load_posterior_stream,
    save_model,
    save_posterior_stream,
    write_feature_table,
    PosteriorStream,
)
from .evaluate import (
    CurveTable,
    accuracy_curve,
    align_trial,
    motion_onset_times,
    per_phase_table,
    plot_accuracy_curves,
    plot_probability_curves,
    write_curve_csv,
    write_per_phase_csv,
)
from .features import FeatureVector, feature_matrix
from .fusion import (
    DEFAULT_EPS,
    DEFAULT_SMOOTH_WINDOW,
    decisions_to_stream,
    fuse_streams,
    restrict_rest,
    smooth_decisions,
)
from .segmentation import GreedyGaussianSegmentation, Segmentation
from .synth import ScenarioSpec, default_scenario, generate_dataset
from .trees import ExtraTreesGraspClassifier
from .vision import resample_vision


def _write_run_manifest(out_dir, stage, params):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"stage": stage, "package_version": __version__, "params": params}
    (out / "run_manifest.json").write_text(json.dumps(doc, indent=2) + "\n")


def _parallel_map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _load_dataset(data_dir):
    return load_manifest(Path(data_dir) / "manifest.json")


def _trial_label_map(trials):
    return {t.trial_id: t.grasp_label for t in trials}


# ---------------------------------------------------------------------------
# stages


def cmd_synth(args):
    if args.config:
        spec = ScenarioSpec.from_json_dict(json.loads(Path(args.config).read_text()))
    else:
        spec = default_scenario()
    if args.seed is not None:
        spec.seed = args.seed
        spec.validate()
    generate_dataset(spec, args.out)
    _write_run_manifest(args.out, "synth", {"config": spec.to_json_dict()})
    return 0


def cmd_preprocess(args):
    trials, mvc = _load_dataset(args.data)
    out = Path(args.out)

    def run(trial):
        env = pp.preprocess_trial(trial, mvc[trial.subject_id])
        windows = pp.slide_windows(env, trial.sample_rate_hz)
        Z, start_ms, end_ms = feature_matrix(windows)
        write_feature_table(out / "features" / f"{trial.trial_id}.csv",
                            Z, start_ms, end_ms)
        return trial.trial_id

    done = _parallel_map(run, trials, args.threads)
    _write_run_manifest(
        args.out, "preprocess", {"data": str(args.data), "n_trials": len(done)}
    )
    return 0


def cmd_segment(args):
    trials, mvc = _load_dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def run(trial):
        env = pp.preprocess_trial(trial, mvc[trial.subject_id])
        series = pp.hop_average(env, trial.sample_rate_hz)
        seg = (
            GreedyGaussianSegmentation(
                n_breakpoints=args.k,
                reg=args.reg,
                min_seg_len=args.min_seg_len,
            )
            .fit(series)
            .as_segmentation(pp.HOP_MS)
        )
        return trial.trial_id, seg

    results = _parallel_map(run, trials, args.threads)
    doc = {tid: seg.to_json_dict() for tid, seg in results}
    (out / "segmentations.json").write_text(json.dumps(doc, indent=2) + "\n")
    _write_run_manifest(
        args.out,
        "segment",
        {
            "data": str(args.data),
            "k": args.k,
            "lambda": args.reg,
            "min_seg_len": args.min_seg_len,
        },
    )
    return 0


def _load_segmentations(path):
    doc = json.loads(Path(path).read_text())
    return {tid: Segmentation.from_json_dict(entry) for tid, entry in doc.items()}


def _load_trial_features(features_dir, trial_id):
    Z, start_ms, end_ms = load_feature_table(
        Path(features_dir) / "features" / f"{trial_id}.csv"
    )
    vectors = [
        FeatureVector(z=Z[i], start_time_ms=start_ms[i], end_time_ms=end_ms[i])
        for i in range(Z.shape[0])
    ]
    return Z, end_ms, vectors


def cmd_train(args):
    trials, _ = _load_dataset(args.data)
    segs = _load_segmentations(Path(args.seg) / "segmentations.json")
    split = split_trials(trials, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "split.json").write_text(
        json.dumps(split.to_json_dict(), indent=2) + "\n"
    )

    subjects = sorted({t.subject_id for t in trials})
    for sid in subjects:
        Z_rows, labels = [], []
        for trial in split.train:
            if trial.subject_id != sid:
                continue
            _, _, vectors = _load_trial_features(args.features, trial.trial_id)
            annotated = annotate_windows(
                vectors, segs[trial.trial_id], trial.grasp_label
            )
            for w in training_filter(annotated, subset="train"):
                Z_rows.append(w.features.z)
                labels.append(w.label)
        clf = ExtraTreesGraspClassifier(
            n_trees=args.n_trees,
            min_samples_split=2,
            classes=range(N_CLASSES),
            random_state=[args.seed, subjects.index(sid)],
        ).fit(np.asarray(Z_rows), np.asarray(labels))
        artifact = ModelArtifact(
            format_version=MODEL_FORMAT_VERSION,
            feature_dimension=int(np.asarray(Z_rows).shape[1]),
            class_count=N_CLASSES,
            training_config={
                "subject": sid,
                "seed": args.seed,
                "n_trees": args.n_trees,
                "min_samples_split": 2,
                "random_state": [args.seed, subjects.index(sid)],
            },
            forest=clf.to_dict(),
        )
        save_model(artifact, out / "models" / f"{sid}.json")
    _write_run_manifest(
        args.out,
        "train",
        {"seed": args.seed, "n_trees": args.n_trees, "subjects": subjects},
    )
    return 0


def cmd_infer(args):
    trials, _ = _load_dataset(args.data)
    model_dir = Path(args.model)
    split_doc = json.loads((model_dir / "split.json").read_text())
    out = Path(args.out)

    classifiers = {}
    for trial in trials:
        if trial.subject_id not in classifiers:
            artifact = load_model(model_dir / "models" / f"{trial.subject_id}.json")
            classifiers[trial.subject_id] = ExtraTreesGraspClassifier.from_dict(
                artifact.forest
            )

    validation_ids = set()
    for key, group in split_doc["groups"].items():
        sid, oid = key.split("/")
        for idx in group["validation"]:
            validation_ids.add(f"{sid}_{oid}_t{idx}")

    def run(trial):
        if trial.trial_id not in validation_ids:
            return None
        Z, end_ms, _ = _load_trial_features(args.features, trial.trial_id)
        probs = classifiers[trial.subject_id].predict_proba(Z)
        stream = PosteriorStream(source="emg", times_ms=end_ms, probs=probs)
        save_posterior_stream(out / "emg" / f"{trial.trial_id}.csv", stream)
        return trial.trial_id

    done = [tid for tid in _parallel_map(run, trials, args.threads) if tid]
    _write_run_manifest(
        args.out, "infer", {"model": str(args.model), "n_streams": len(done)}
    )
    return 0


def cmd_fuse(args):
    emg_dir = Path(args.emg) / "emg"
    out = Path(args.out)
    stream_files = sorted(emg_dir.glob("*.csv"))
    if not stream_files:
        raise DataFormatError(f"no EMG streams found under {emg_dir}")

    def run(path):
        trial_id = path.stem
        emg = load_posterior_stream(path, source="emg")
        frames = load_detection_frames(
            Path(args.data) / "detections" / f"{trial_id}.csv"
        )
        vis = resample_vision(frames, emg.times_ms)
        emg13 = PosteriorStream(
            source="emg",
            times_ms=emg.times_ms,
            probs=np.stack([restrict_rest(p) for p in emg.probs]),
        )
        decisions = fuse_streams(emg13, vis, eps=args.eps)
        smoothed = smooth_decisions(decisions, n=args.smooth_window)
        save_posterior_stream(out / "vision" / f"{trial_id}.csv", vis)
        save_posterior_stream(out / "emg13" / f"{trial_id}.csv", emg13)
        save_posterior_stream(
            out / "fused" / f"{trial_id}.csv", decisions_to_stream(decisions)
        )
        save_posterior_stream(
            out / "fused_smoothed" / f"{trial_id}.csv",
            decisions_to_stream(smoothed),
        )
        return trial_id

    done = _parallel_map(run, stream_files, args.threads)
    _write_run_manifest(
        args.out,
        "fuse",
        {"eps": args.eps, "smooth_window": args.smooth_window,
         "n_streams": len(done)},
    )
    return 0


def cmd_eval(args):
    trials, _ = _load_dataset(args.data)
    labels_by_id = _trial_label_map(trials)
    segs = _load_segmentations(Path(args.seg) / "segmentations.json")
    fuse_dir = Path(args.streams)
    emg_dir = Path(args.emg) / "emg"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    trial_ids = sorted(p.stem for p in (fuse_dir / "fused").glob("*.csv"))
    if not trial_ids:
        raise DataFormatError(f"no fused streams found under {fuse_dir}")

    emg14, emg13, vision, fused, smoothed, truths, seg_list = (
        [], [], [], [], [], [], []
    )
    for tid in trial_ids:
        emg14.append(load_posterior_stream(emg_dir / f"{tid}.csv", "emg"))
        emg13.append(load_posterior_stream(fuse_dir / "emg13" / f"{tid}.csv", "emg"))
        vision.append(
            load_posterior_stream(fuse_dir / "vision" / f"{tid}.csv", "vision")
        )
        fused.append(load_posterior_stream(fuse_dir / "fused" / f"{tid}.csv", "fused"))
        smoothed.append(
            load_posterior_stream(fuse_dir / "fused_smoothed" / f"{tid}.csv", "fused")
        )
        truths.append(labels_by_id[tid])
        seg_list.append(segs[tid])

    table = per_phase_table(
        {
            "emg": emg13,
            "vision": vision,
            "fused": fused,
            "fused_smoothed": smoothed,
        },
        truths,
        seg_list,
    )
    write_per_phase_csv(out / "per_phase.csv", table)

    curves = {}
    for name, streams in (
        ("emg", emg14),
        ("vision", vision),
        ("fused", fused),
        ("fused_smoothed", smoothed),
    ):
        aligned = [
            align_trial(s, seg, truth)
            for s, seg, truth in zip(streams, seg_list, truths)
        ]
        curves[name] = accuracy_curve(aligned)
        write_curve_csv(out / f"curves_{name}.csv", curves[name])

    onset_rows = motion_onset_times(emg14, truths, seg_list)
    with (out / "onsets.csv").open("w", newline="") as fh:
        import csv as _csv

        writer = _csv.writer(fh)
        writer.writerow(["trial_id", "onset_ms", "grasp_start_ms", "in_reach"])
        for tid, row in zip(trial_ids, onset_rows):
            writer.writerow(
                [
                    tid,
                    "" if row["onset_ms"] is None else f"{row['onset_ms']:.12g}",
                    f"{row['grasp_start_ms']:.12g}",
                    str(int(row["in_reach"])),
                ]
            )

    summary = {
        "n_validation_trials": len(trial_ids),
        "mean_boundaries_ms": curves["fused"].mean_boundaries_ms.tolist(),
        "onset_in_reach_fraction": float(
            np.mean([row["in_reach"] for row in onset_rows])
        ),
    }
    (out / "eval_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    _write_run_manifest(args.out, "eval", {"n_trials": len(trial_ids)})
    return 0


def _read_curve_csv(path):
    import csv as _csv

    with open(path, newline="") as fh:
        rows = list(_csv.reader(fh))
    body = rows[1:]
    to_f = lambda v: float(v) if v else float("nan")
    return CurveTable(
        times_ms=np.array([float(r[0]) for r in body]),
        coverage=np.array([int(r[1]) for r in body]),
        accuracy=np.array([float(r[2]) for r in body]),
        p_true=np.array([float(r[3]) for r in body]),
        p_rest=np.array([to_f(r[4]) for r in body]),
        p_competitor=np.array([float(r[5]) for r in body]),
        mean_boundaries_ms=np.empty(0),
    )


def cmd_report(args):
    eval_dir = Path(args.eval_dir)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = json.loads((eval_dir / "eval_summary.json").read_text())
    boundaries = np.asarray(summary["mean_boundaries_ms"], dtype=float)

    # Table-II-style per-phase accuracy in percent
    import csv as _csv

    with (eval_dir / "per_phase.csv").open(newline="") as fh:
        rows = list(_csv.reader(fh))
    header, body = rows[0], rows[1:]
    n_cols = (len(header) - 1) // 2
    with (out / "table_per_phase_percent.csv").open("w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(header[: 1 + n_cols])
        for row in body:
            cells = [row[0]]
            for v in row[1: 1 + n_cols]:
                cells.append("" if v == "" else f"{100.0 * float(v):.2f}")
            writer.writerow(cells)

    curves = {}
    for name in ("emg", "vision", "fused", "fused_smoothed"):
        path = eval_dir / f"curves_{name}.csv"
        if path.exists():
            curve = _read_curve_csv(path)
            curve.mean_boundaries_ms = boundaries
            curves[name] = curve
    plot_accuracy_curves(out / "accuracy.svg", curves)
    if "emg" in curves:
        plot_probability_curves(out / "probabilities.svg", curves["emg"])
    _write_run_manifest(args.out, "report", {"eval": str(args.eval_dir)})
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def build_parser():
    parser = argparse.ArgumentParser(
        prog="graspintent",
        description="Grasp-intent inference pipeline (EMG x vision fusion)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for per-trial stages")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    add_common(p)
    p.add_argument("--config", help="scenario JSON (defaults to stock scenario)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the scenario seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="filter/envelope/normalize + features")
    add_common(p)
    p.add_argument("--data", required=True, help="synth output directory")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("segment", help="greedy Gaussian phase segmentation")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, default=3, help="number of breakpoints")
    p.add_argument("--lambda", dest="reg", type=float, default=0.1,
                   help="covariance ridge")
    p.add_argument("--min-seg-len", type=int, default=10,
                   help="minimum segment length in hops")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="split trials and fit per-subject forests")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--features", required=True, help="preprocess output directory")
    p.add_argument("--seg", required=True, help="segment output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-trees", type=int, default=50)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="EMG posteriors for validation trials")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--model", required=True, help="train output directory")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("fuse", help="gaze selection, resampling, fusion, smoothing")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--emg", required=True, help="infer output directory")
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--smooth-window", type=int, default=DEFAULT_SMOOTH_WINDOW)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="curves, per-phase table, onset analysis")
    add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--seg", required=True)
    p.add_argument("--emg", required=True, help="infer output directory")
    p.add_argument("--streams", required=True, help="fuse output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="render percent tables and SVG figures")
    add_common(p)
    p.add_argument("--eval-dir", required=True, help="eval output directory")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``tumormorph <command> [options]``.

Exit codes: 0 success, 2 finished with per-sample failures, 1 fatal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, attribution, explain, gbt, io, segeval, synth
from .config import ConfigError, load_config
from .features import extract_sample
from .fusion import FusionPipeline

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2


class CliError(Exception):
    pass


def _config(args):
    return load_config(args.config, args.set or ())


# ---------------------------------------------------------------------------
# synth


def cmd_synth(args):
    rows = synth.generate_dataset(args.n_per_class, args.seed, args.out, args.deep_width)
    print(f"wrote {len(rows)} samples to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# extract


def _extract_one(job):
    row, params = job
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            return row.sample_id, extract_sample(row, params), None
        except (ValueError, OSError) as exc:
            return row.sample_id, None, f"{type(exc).__name__}: {exc}"


def cmd_extract(args):
    cfg = _config(args)
    params = cfg.extraction_params()
    try:
        rows = io.load_manifest(args.manifest)
    except (OSError, io.FormatError) as exc:
        raise CliError(f"cannot read manifest: {exc}") from None
    deep = None
    if args.deep:
        deep = io.load_deep_features(args.deep)
        missing = [r.sample_id for r in rows if r.deep_feature_row not in deep]
        if missing:
            raise CliError(f"deep features missing for samples {missing}")

    jobs = [(r, params) for r in rows]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_extract_one, jobs, chunksize=4))
    else:
        results = [_extract_one(j) for j in jobs]

    by_id = {r.sample_id: r for r in rows}
    records, failures = [], []
    for sid, rec, err in results:
        if rec is None:
            failures.append((sid, err))
            continue
        if deep is not None:
            rec.deep = deep.row(by_id[sid].deep_feature_row)
        records.append(rec)
    if not records:
        raise CliError("no samples could be processed: " + "; ".join(f"{s}: {e}" for s, e in failures))
    io.write_feature_csv(records, args.out)
    print(f"extracted {len(records)} of {len(rows)} samples -> {args.out}")
    if failures:
        print(f"{len(failures)} sample(s) skipped:", file=sys.stderr)
        for sid, err in failures:
            print(f"  {sid}: {err}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# shared loading for model-facing commands


def _load_table(features_path, manifest_path=None, need_labels=True):
    records = io.read_feature_csv(features_path)
    ids = [r.sample_id for r in records]
    tsf = np.array([r.vector() for r in records])
    deep = np.array([r.deep for r in records]) if records and records[0].deep is not None else None
    labels = None
    if manifest_path:
        lab = {m.sample_id: m.label for m in io.load_manifest(manifest_path)}
        missing = [s for s in ids if lab.get(s) is None]
        if missing:
            raise CliError(f"no label in manifest for samples {missing}")
        labels = [lab[s] for s in ids]
    elif need_labels:
        raise CliError("labels are required: pass --manifest")
    return ids, tsf, deep, labels


def _modes(requested, deep):
    if requested:
        modes = requested
    else:
        modes = ["tsf", "deep", "fused"] if deep is not None else ["tsf"]
    if deep is None and any(m != "tsf" for m in modes):
        raise CliError(f"modes {modes} need deep_* columns in the feature CSV")
    return modes


def format_cv_table(reports) -> str:
    head = f"{'configuration':<10} {'accuracy':>16} {'specificity':>16} {'sensitivity':>16}"
    lines = [head, "-" * len(head)]
    for rep in reports:
        s = rep.summary()
        cells = [f"{s[k]['mean']:.3f} ± {s[k]['std']:.3f}" for k in ("accuracy", "specificity", "sensitivity")]
        lines.append(f"{rep.mode:<10} " + " ".join(f"{c:>16}" for c in cells))
    return "\n".join(lines)


def cmd_crossval(args):
    cfg = _config(args)
    _, tsf, deep, labels = _load_table(args.features, args.manifest)
    modes = _modes(args.mode, deep)
    reports = [
        gbt.cross_validate(
            tsf, labels, deep, mode=m, k=cfg.cv_folds, seed=cfg.cv_seed,
            params=cfg.boost_params(), variance_target=cfg.pca_variance,
        )
        for m in modes
    ]
    doc = {
        "folds": cfg.cv_folds,
        "seed": cfg.cv_seed,
        "n_samples": len(labels),
        "configurations": [r.to_dict() for r in reports],
    }
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")
    print(format_cv_table(reports))
    return EXIT_OK


def fit_model(tsf, deep, labels, mode, cfg):
    pipe = FusionPipeline(mode, cfg.pca_variance).fit(tsf, deep)
    X = pipe.transform(tsf, deep)
    model = gbt.train(X, labels, cfg.boost_params(), pipe.columns)
    model.preprocessor = pipe
    return model


def cmd_train(args):
    cfg = _config(args)
    _, tsf, deep, labels = _load_table(args.features, args.manifest)
    mode = args.mode or ("fused" if deep is not None else "tsf")
    _modes([mode], deep)
    model = fit_model(tsf, deep, labels, mode, cfg)
    gbt.save_model(model, args.out)
    print(f"trained {mode} model on {len(labels)} samples ({model.n_features} features) -> {args.out}")
    return EXIT_OK


def _model_inputs(model, features_path):
    ids, tsf, deep, _ = _load_table(features_path, need_labels=False)
    pipe = model.preprocessor
    if pipe is not None and pipe.uses_deep:
        want = len(pipe.deep_stats.mean)
        have = 0 if deep is None else deep.shape[1]
        if want != have:
            expected = list(io.TSF_COLUMNS) + [f"deep_{j}" for j in range(want)]
            found = list(io.TSF_COLUMNS) + [f"deep_{j}" for j in range(have)]
            raise CliError(
                "feature CSV does not match the model schema\n"
                f"  model expects: {','.join(expected)}\n  file has:      {','.join(found)}"
            )
    return ids, tsf, deep


def _transform(model, tsf, deep):
    pipe = model.preprocessor
    if pipe is None:
        return tsf
    return pipe.transform(tsf, deep if pipe.uses_deep else None)


def cmd_predict(args):
    model = gbt.load_model(args.model)
    ids, tsf, deep = _model_inputs(model, args.features)
    P = model.predict_proba(_transform(model, tsf, deep))
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["sample_id", "predicted", *(f"p_{c}" for c in model.classes)])
        for sid, p in zip(ids, P):
            w.writerow([sid, model.classes[int(np.argmax(p))], *(f"{v:.6f}" for v in p)])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def cmd_explain(args):
    cfg = _config(args)
    if args.backend:
        cfg.explain_backend = args.backend
    if args.k:
        cfg.top_k = args.k
    econf = cfg.explain_config()
    model = gbt.load_model(args.model)
    ids, tsf, deep = _model_inputs(model, args.features)
    wanted = args.sample or ids
    unknown = sorted(set(wanted) - set(ids))
    if unknown:
        raise CliError(f"samples not in feature file: {unknown}")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    pipe = model.preprocessor
    refs = pipe.reference_values() if pipe is not None else None
    for sid in wanted:
        i = ids.index(sid)
        drow = deep[i] if (deep is not None and pipe is not None and pipe.uses_deep) else None
        attr = attribution.explain_record(model, tsf[i], drow, sample_id=sid)
        attribution.write_attribution(attr, out / f"{sid}.attribution.json", econf.k)
        bundle = explain.build_prompt(attr, econf.k)
        (out / f"{sid}.prompt.txt").write_text(bundle.to_text(), encoding="utf-8")
        text = explain.explain(bundle, econf, refs)
        (out / f"{sid}.explanation.txt").write_text(text, encoding="utf-8")
        print(f"{sid}: {attr.predicted_class} ({attr.confidence * 100:.1f}%)")
    return EXIT_OK


def cmd_eval_seg(args):
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    names = sorted(p.name for p in gt_dir.glob("*.pgm"))
    if not names:
        raise CliError(f"no .pgm masks in {gt_dir}")
    classes = {}
    if args.manifest:
        for m in io.load_manifest(args.manifest):
            classes[Path(m.mask_path).name] = m.label or "unlabeled"
    groups, failures = {}, []
    for name in names:
        pp = pred_dir / name
        if not pp.exists():
            failures.append(f"{name}: no prediction")
            continue
        try:
            metrics = segeval.mask_metrics(io.load_mask(pp), io.load_mask(gt_dir / name))
        except (ValueError, OSError) as exc:
            failures.append(f"{name}: {exc}")
            continue
        groups.setdefault(classes.get(name, "all"), []).append(metrics)
    if not groups:
        raise CliError("no mask pairs could be scored")
    report = segeval.aggregate_report(dict(sorted(groups.items())))
    if args.out:
        segeval.write_report_csv(report, args.out)
    for name, stats in report.items():
        print(f"{name:<12} " + " ".join(f"{m}={stats[m][0]:.3f}±{stats[m][1]:.3f}" for m in segeval.METRICS))
    for f in failures:
        print(f"skipped {f}", file=sys.stderr)
    return EXIT_PARTIAL if failures else EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="tumormorph", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="TOML file of key = value settings")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one setting (repeatable)")
        return sp

    sp = sub.add_parser("synth", help="generate a synthetic phantom dataset")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-per-class", type=int, default=100)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--deep-width", type=int, default=16, help="pseudo-deep feature width (0 disables)")
    sp.set_defaults(func=cmd_synth)

    sp = with_config(sub.add_parser("extract", help="compute Tumor Specific features for a manifest"))
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--deep", help="deep feature CSV keyed by the manifest deep_key column")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_extract)

    sp = with_config(sub.add_parser("crossval", help="stratified k-fold cross-validation"))
    sp.add_argument("--features", required=True)
    sp.add_argument("--manifest", required=True, help="manifest providing labels")
    sp.add_argument("--mode", action="append", choices=FusionPipeline.MODES)
    sp.add_argument("--out", help="JSON report path")
    sp.set_defaults(func=cmd_crossval)

    sp = with_config(sub.add_parser("train", help="fit and save a model"))
    sp.add_argument("--features", required=True)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--mode", choices=FusionPipeline.MODES)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("predict", help="class probabilities per sample")
    sp.add_argument("--model", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_predict)

    sp = with_config(sub.add_parser("explain", help="attributions, prompt and explanation per sample"))
    sp.add_argument("--model", required=True)
    sp.add_argument("--features", required=True)
    sp.add_argument("--sample", action="append", help="sample id (repeatable; default all)")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--backend", choices=("offline", "http"))
    sp.add_argument("--k", type=int)
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("eval-seg", help="segmentation overlap report")
    sp.add_argument("--pred", required=True, help="directory of predicted mask PGMs")
    sp.add_argument("--gt", required=True, help="directory of reference mask PGMs (same file names)")
    sp.add_argument("--manifest", help="group results by the label of each mask")
    sp.add_argument("--out", help="CSV report path")
    sp.set_defaults(func=cmd_eval_seg)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, io.FormatError, gbt.ModelFormatError, explain.LlmError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface over the documented file formats.

Exit codes: 0 success, 1 usage error, 2 data/format error. All
randomness is controlled by --seed flags; the bench worker pool is
capped by the UGM_THREADS environment variable.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import classifiers, crf, data, evaluation, features, inference, superpixels
from .energy import EnergyModel, Potts, grid_graph
from .rasterfile import DataError, FormatError, load_raster, save_raster


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser():
    parser = _Parser(prog="hsiugm", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[], help="generate a synthetic scene")
    p.add_argument("--out-cube", required=True)
    p.add_argument("--out-labels", required=True)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--bands", type=int, default=0, help="default: one per class")
    p.add_argument("--blocks", type=int, default=4, help="layout block grid size")
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--sep", type=float, default=1.0, help="class mean separation")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("features", help="feature extraction")
    p.add_argument("--cube", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=["raw", "standardize", "pca", "emp"], default="emp")
    p.add_argument("--variance-fraction", type=float, default=0.99)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--step", type=int, default=2)

    p = sub.add_parser("classify", help="pixel-wise classification")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", help="existing split CSV")
    p.add_argument("--n-train", type=int, default=50)
    p.add_argument("--n-test", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-out", help="write the sampled split CSV here")
    p.add_argument("--method", choices=["lr", "sam"], default="lr")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("smooth", help="MAP smoothing of a probability field")
    p.add_argument("--proba", help="probability field (kind=proba)")
    p.add_argument("--angles", help="angle field (kind=angles)")
    p.add_argument(
        "--method",
        choices=["icm", "alpha-expansion", "max-marginals"],
        default="alpha-expansion",
    )
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--cycles", type=int, default=15)
    p.add_argument("--superpixels", help="segmentation raster for superpixel MRF")
    p.add_argument("--report", help="write the inference report CSV here")
    p.add_argument("--out", required=True)

    p = sub.add_parser("superpixel", help="SLIC segmentation")
    p.add_argument("--cube", required=True)
    p.add_argument("--requested", type=int, required=True)
    p.add_argument("--regularizer", type=float, default=100.0)
    p.add_argument("--min-region", type=int, default=9)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--out", required=True)

    p = sub.add_parser("crf", help="train a CRF and predict")
    p.add_argument("--proba", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--split", required=True)
    p.add_argument(
        "--objective", choices=["mle_bp", "pseudo_likelihood"], default="mle_bp"
    )
    p.add_argument("--l2", type=float, default=1e-2)
    p.add_argument("--max-iters", type=int, default=60)
    p.add_argument("--model-out")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score a prediction")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", help="metrics CSV")

    p = sub.add_parser("bench", help="run a benchmark config")
    p.add_argument("--config", required=True, help="flat key=value config file")
    p.add_argument("--out", required=True, help="summary CSV")
    p.add_argument("--rows", help="per-trial rows CSV")

    p = sub.add_parser("render", help="render a label map to PPM")
    p.add_argument("labels")
    p.add_argument("palette", help="CSV of class,r,g,b; class 0 renders black")
    p.add_argument("out")

    return parser


def _load_split_for(args, labels):
    if args.split:
        return data.load_split(args.split, labels.width, seed=args.seed)
    split = data.sample_split(labels, args.n_train, args.n_test, args.seed)
    if args.split_out:
        data.save_split(args.split_out, split)
    return split


def _cmd_synth(args):
    m = args.classes
    bands = args.bands or m
    layout = (np.arange(args.blocks * args.blocks) % m + 1).reshape(
        args.blocks, args.blocks
    )
    means = np.zeros((m, bands))
    for c in range(m):
        means[c, c % bands] = args.sep
        means[c, (c + 1) % bands] = 0.5 * args.sep
    spec = data.SceneSpec(
        height=args.height, width=args.width, layout=layout, means=means,
        sigma=args.sigma,
    )
    cube, labels = data.synth_scene(spec, args.seed)
    data.save_cube(args.out_cube, cube)
    data.save_labels(args.out_labels, labels)
    return 0


def _cmd_features(args):
    cube = data.load_cube(args.cube)
    if args.mode == "raw":
        out = features.FeatureCube(cube.values)
    elif args.mode == "standardize":
        out = features.FeatureCube(features.standardize(cube).values)
    elif args.mode == "pca":
        out = features.pca(features.standardize(cube), args.variance_fraction)
    else:
        out = features.emp(
            cube,
            features.EmpParams(
                variance_fraction=args.variance_fraction,
                n_levels=args.levels,
                size_step=args.step,
            ),
        )
    save_raster(args.out, out.values, extra_fields={"kind": "features"})
    return 0


def _cmd_classify(args):
    values, _ = load_raster(args.features)
    feats = features.FeatureCube(np.asarray(values, dtype=np.float64))
    labels = data.load_labels(args.labels, require_labeled=True)
    split = _load_split_for(args, labels)
    if args.method == "lr":
        model = classifiers.train_lr(feats, split, args.lam)
        proba = classifiers.predict_proba(model, feats)
        classifiers.save_proba(args.out, proba)
    else:
        angles = classifiers.sam_angles(feats, split)
        save_raster(args.out, angles.values, extra_fields={"kind": "angles"})
    return 0


def _unary_and_shape(args):
    if bool(args.proba) == bool(args.angles):
        raise DataError("exactly one of --proba / --angles is required")
    if args.proba:
        field = classifiers.ingest_proba(args.proba)
        return classifiers.unary_from_proba(field), field.height, field.width
    values, fields = load_raster(args.angles)
    if fields.get("kind") != "angles":
        raise DataError(f"{args.angles}: kind is {fields.get('kind')!r}, expected angles")
    angle_field = classifiers.AngleField(values)
    h, w = values.shape[0], values.shape[1]
    return classifiers.unary_from_angles(angle_field), h, w


def _cmd_smooth(args):
    unary, h, w = _unary_and_shape(args)
    method = args.method.replace("-", "_")
    if args.superpixels:
        seg_values, fields = load_raster(args.superpixels)
        if fields.get("kind") != "segmentation":
            raise DataError(f"{args.superpixels}: not a segmentation raster")
        seg = superpixels.SuperpixelSegmentation(assignment=seg_values[:, :, 0])
        graph = superpixels.adjacency(seg)
        proba = classifiers.ProbabilityField(
            np.exp(-unary.reshape(h, w, -1))
            / np.exp(-unary.reshape(h, w, -1)).sum(axis=2, keepdims=True)
        )
        node_unary = superpixels.aggregate_unary(proba, seg)
    else:
        seg = None
        graph = grid_graph(h, w)
        node_unary = unary
    model = EnergyModel(graph=graph, unary=node_unary, pairwise=Potts(args.beta))
    y, report = inference.map_infer(model, method, max_cycles=args.cycles)
    labels = (
        superpixels.project_labels(seg, y)
        if seg is not None
        else data.LabelMap(y.reshape(h, w))
    )
    data.save_labels(args.out, labels)
    if args.report:
        with open(args.report, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["method", "energy", "iterations", "converged", "wall_ms"])
            writer.writerow(
                [
                    report["method"],
                    f"{report['energy']:.9g}",
                    report.get("iterations", report.get("cycles", "")),
                    report.get("converged", ""),
                    f"{report['wall_ms']:.1f}",
                ]
            )
    return 0


def _cmd_superpixel(args):
    cube = data.load_cube(args.cube)
    seg = superpixels.slic(
        cube,
        superpixels.SlicParams(
            requested_superpixels=args.requested,
            regularizer=args.regularizer,
            min_region_size=args.min_region,
            kmeans_iters=args.iters,
        ),
    )
    save_raster(
        args.out,
        seg.assignment[:, :, None],
        extra_fields={"kind": "segmentation", "n_superpixels": seg.n_superpixels},
        dtype="i32",
    )
    return 0


def _cmd_crf(args):
    proba = classifiers.ingest_proba(args.proba)
    labels = data.load_labels(args.labels, require_labeled=True)
    split = data.load_split(args.split, labels.width)
    graph = grid_graph(proba.height, proba.width)
    feats = proba.values.reshape(-1, proba.n_classes)
    observed = np.zeros(graph.n_nodes, dtype=np.int64)
    observed[split.train[:, 0]] = split.train[:, 1]
    cfg = crf.CrfTrainConfig(
        objective=args.objective, l2=args.l2, max_iters=args.max_iters, inference="bp"
    )
    model = crf.train_crf(feats, graph, observed, cfg)
    if args.model_out:
        crf.save_crf(args.model_out, model)
    labeling, _ = crf.crf_predict(model, feats, graph)
    data.save_labels(args.out, data.LabelMap(labeling.reshape(proba.height, proba.width)))
    return 0


def _cmd_eval(args):
    pred = data.load_labels(args.pred)
    truth = data.load_labels(args.truth, require_labeled=True)
    split = data.load_split(args.split, truth.width)
    report = evaluation.metrics(evaluation.confusion(pred, truth, split))
    print(f"OA={report.overall_accuracy:.4f} kappa={report.kappa:.4f}")
    print(
        f"avgP={report.avg_precision:.4f} avgR={report.avg_recall:.4f} "
        f"avgF1={report.avg_f1:.4f}"
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["OA", "kappa", "avgP", "avgR", "avgF1"])
            writer.writerow(
                [
                    f"{report.overall_accuracy:.6f}",
                    f"{report.kappa:.6f}",
                    f"{report.avg_precision:.6f}",
                    f"{report.avg_recall:.6f}",
                    f"{report.avg_f1:.6f}",
                ]
            )
    return 0


def _parse_bench_config(path):
    fields = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            fields[key.strip()] = value.strip()
    m = int(fields.get("classes", 4))
    bands = int(fields.get("bands", m))
    blocks = int(fields.get("blocks", 4))
    sep = float(fields.get("sep", 1.0))
    layout = (np.arange(blocks * blocks) % m + 1).reshape(blocks, blocks)
    means = np.zeros((m, bands))
    for c in range(m):
        means[c, c % bands] = sep
        means[c, (c + 1) % bands] = 0.5 * sep
    scene = data.SceneSpec(
        height=int(fields.get("height", 64)),
        width=int(fields.get("width", 64)),
        layout=layout,
        means=means,
        sigma=float(fields.get("sigma", 0.5)),
    )
    fixed_beta = fields.get("fixed_beta")
    return evaluation.ExperimentConfig(
        scene=scene,
        features=fields.get("features", "raw"),
        smoother=fields.get("smoother", "none"),
        n_train_per_class=int(fields.get("n_train", 50)),
        n_test_per_class=int(fields.get("n_test", 50)),
        n_trials=int(fields.get("trials", 10)),
        base_seed=int(fields.get("seed", 0)),
        lam=float(fields.get("lambda", 1.0)),
        fixed_beta=float(fixed_beta) if fixed_beta else None,
        requested_superpixels=int(fields.get("requested_superpixels", 400)),
    )


def _cmd_bench(args):
    cfg = _parse_bench_config(args.config)
    threads = max(int(os.environ.get("UGM_THREADS", "1")), 1)
    if threads > 1 and cfg.n_trials > 1:
        from concurrent.futures import ProcessPoolExecutor

        rows, failures = [], []
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(evaluation.run_single_trial, cfg, t)
                for t in range(cfg.n_trials)
            ]
            # aggregate in trial order so results match the serial run
            for t, fut in enumerate(futures):
                try:
                    rows.append(fut.result())
                except Exception as exc:
                    failures.append({"trial": t, "error": repr(exc)})
        oas = np.array([r["oa"] for r in rows])
        method = f"{cfg.features}-lr" + (
            "" if cfg.smoother == "none" else f"-{cfg.smoother}"
        )
        summary = evaluation.TrialSummary(
            method=method,
            n_trials=len(rows),
            mean_oa=float(np.mean(oas)),
            sd_oa=float(np.std(oas)),
            best_oa=float(np.max(oas)),
            rows=rows,
            failures=failures,
        )
    else:
        summary = evaluation.run_trials(cfg)
    evaluation.write_summary_csv(args.out, [summary], cfg.n_train_per_class)
    if args.rows:
        evaluation.write_results_csv(args.rows, summary, cfg.n_train_per_class)
    print(
        f"{summary.method}: mean OA {100 * summary.mean_oa:.2f} "
        f"sd {100 * summary.sd_oa:.2f} best {100 * summary.best_oa:.2f} "
        f"({summary.n_trials} trials)"
    )
    return 0


def _cmd_render(args):
    labels = data.load_labels(args.labels)
    palette = {0: (0, 0, 0)}
    with open(args.palette, "r", encoding="utf-8", newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().lower() in ("class", ""):
                continue
            palette[int(rec[0])] = (int(rec[1]), int(rec[2]), int(rec[3]))
    seen = {}
    for cls, color in palette.items():
        if cls != 0 and color in seen:
            raise DataError(f"palette color {color} reused by classes {seen[color]} and {cls}")
        seen[color] = cls
    h, w = labels.height, labels.width
    img = np.zeros((h, w, 3), dtype=np.uint8)
    for cls in np.unique(labels.labels):
        if int(cls) not in palette:
            raise DataError(f"palette is missing class {int(cls)}")
        img[labels.labels == cls] = palette[int(cls)]
    with open(args.out, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "features": _cmd_features,
    "classify": _cmd_classify,
    "smooth": _cmd_smooth,
    "superpixel": _cmd_superpixel,
    "crf": _cmd_crf,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "render": _cmd_render,
}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (FormatError, DataError, ValueError, OSError) as exc:
        print(f"hsiugm {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

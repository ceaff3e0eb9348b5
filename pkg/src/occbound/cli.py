"""Command-line interface.

Subcommands cover the full pipeline: synth -> train -> predict -> nms ->
adjust -> eval, plus losscheck (gradient checks and loss-curve tables)
and sweep (beta/gamma grid search). Exit codes: 0 ok, 1 validation or
usage error, 2 I/O error, 3 self-check failure. Every subcommand honors
``--show-config`` (print the resolved configuration as JSON and exit)
and is byte-deterministic given identical inputs, flags and seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import benchmark, losses, maps, synth, thinning, trainer
from .errors import CheckFailure, FormatError, ParameterError, ValidationError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _float_list(text):
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise _UsageError(f"bad float list {text!r}") from e
    if not values:
        raise _UsageError(f"empty float list {text!r}")
    return values


def build_parser():
    parser = _Parser(prog="occbound", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--show-config", action="store_true",
                        help="print resolved configuration as JSON and exit")

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic occlusion-scene dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--shapes", type=int, default=3)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=["default", "sparse"], default="default")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train the pixel classifier")
    p.add_argument("--manifest", required=True)
    p.add_argument("--loss", choices=list(trainer.LOSS_KINDS), default="attention")
    p.add_argument("--beta", type=float, default=losses.DEFAULT_BETA)
    p.add_argument("--gamma", type=float, default=losses.DEFAULT_GAMMA)
    p.add_argument("--sigma", type=float, default=losses.DEFAULT_SIGMA)
    p.add_argument("--lambda", dest="lam", type=float, default=losses.DEFAULT_LAMBDA)
    p.add_argument("--focal-alpha", type=float, default=losses.DEFAULT_FOCAL_ALPHA)
    p.add_argument("--focal-gamma", type=float, default=losses.DEFAULT_FOCAL_GAMMA)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=2e-4)
    p.add_argument("--batch", type=int, default=5)
    p.add_argument("--crop", type=int, default=32)
    p.add_argument("--iter-size", type=int, default=1)
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-ckpt", required=True)
    p.add_argument("--history", help="optional loss-history CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common],
                       help="run a checkpoint over a manifest")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("nms", parents=[common],
                       help="thin probability maps (single .occm or manifest)")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=int, default=4)
    p.add_argument("--tolerance", type=float, default=1.01)
    p.add_argument("--border", type=int, default=1)
    p.set_defaults(func=cmd_nms)

    p = sub.add_parser("adjust", parents=[common],
                       help="snap orientations to boundary tangents")
    p.add_argument("--boundary", required=True,
                   help="thinned boundary .occm, or a prediction manifest")
    p.add_argument("--orient", help="orientation .occm (single-map mode)")
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=int, default=2)
    p.set_defaults(func=cmd_adjust)

    p = sub.add_parser("eval", parents=[common],
                       help="PR sweep, ODS/OIS/AP summary and occlusion curves")
    p.add_argument("--pred-manifest", required=True)
    p.add_argument("--gt-manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--dmax-frac", type=float, default=0.0075)
    p.add_argument("--orient-tol", type=float, default=float(np.pi / 2))
    p.add_argument("--svg", action="store_true", help="also write SVG plots")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("losscheck", parents=[common],
                       help="gradient self-checks and loss-curve CSV tables")
    p.add_argument("--grid", type=int, default=99)
    p.add_argument("--alpha", type=float, default=0.99)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_losscheck)

    p = sub.add_parser("sweep", parents=[common],
                       help="train/evaluate a beta x gamma grid")
    p.add_argument("--manifest", required=True)
    p.add_argument("--eval-manifest")
    p.add_argument("--betas", type=_float_list, default=[1.0, 2.0, 3.0, 4.0, 5.0])
    p.add_argument("--gammas", type=_float_list, default=[0.2, 0.3, 0.5, 0.7])
    p.add_argument("--iters", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    return parser


def _emit_config(args, config):
    if args.show_config:
        print(json.dumps(config, indent=2, sort_keys=True, default=str))
        return True
    return False


def cmd_synth(args):
    base = synth.SceneSpec.default if args.preset == "default" else synth.SceneSpec.sparse
    spec = base(seed=args.seed, width=args.width, height=args.height)
    spec = replace(spec, n_shapes=args.shapes, noise_sigma=args.noise)
    if args.preset == "sparse" and args.shapes == 3:
        spec = replace(spec, n_shapes=1)
    if _emit_config(args, {"n": args.n, "out": args.out, **asdict(spec)}):
        return 0
    synth.generate_dataset(args.n, spec, args.out)
    return 0


def _train_config(args):
    return trainer.TrainConfig(
        lr=args.lr, momentum=args.momentum, weight_decay=args.weight_decay,
        batch_size=args.batch, crop=args.crop, iters=args.iters, seed=args.seed,
        loss=losses.MultiTaskParams(
            attention=losses.AttentionParams(args.beta, args.gamma),
            sigma=args.sigma, lam=args.lam),
        loss_kind=args.loss,
        focal=losses.FocalParams(args.focal_alpha, args.focal_gamma),
        iter_size=args.iter_size)


def cmd_train(args):
    config = _train_config(args)
    if _emit_config(args, {"manifest": args.manifest, "out_ckpt": args.out_ckpt,
                           **asdict(config)}):
        return 0
    net, history = trainer.train(args.manifest, config)
    trainer.save_checkpoint(net, args.out_ckpt)
    if args.history:
        Path(args.history).write_text(trainer.history_csv(history), encoding="utf-8")
    return 0


def cmd_predict(args):
    if _emit_config(args, {"ckpt": args.ckpt, "manifest": args.manifest,
                           "out": args.out}):
        return 0
    net = trainer.load_checkpoint(args.ckpt)
    records = maps.read_manifest(args.manifest)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_records = []
    for i, rec in enumerate(records):
        image, _ = maps.load_record(rec)
        prob, orient = trainer.predict(net, image)
        bpath = out_dir / f"pred_{i:05d}_boundary.occm"
        opath = out_dir / f"pred_{i:05d}_orient.occm"
        maps.save_map(prob, bpath)
        maps.save_map(orient, opath)
        out_records.append(maps.ManifestRecord(rec.image, bpath, opath))
    maps.write_manifest(out_records, out_dir / "manifest.txt")
    return 0


def cmd_nms(args):
    params = thinning.NmsParams(smooth_radius=args.radius, tolerance=args.tolerance,
                                border=args.border)
    if _emit_config(args, {"in": args.input, "out": args.out, **asdict(params)}):
        return 0
    src = Path(args.input)
    if src.suffix == ".occm":
        thinned = thinning.nms_thin(maps.load_map(src), params)
        maps.save_map(thinned, args.out)
        return 0
    records = maps.read_manifest(src)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_records = []
    for i, rec in enumerate(records):
        thinned = thinning.nms_thin(maps.load_map(rec.boundary), params)
        tpath = out_dir / f"thinned_{i:05d}.occm"
        maps.save_map(thinned, tpath)
        out_records.append(maps.ManifestRecord(rec.image, tpath, rec.orientation))
    maps.write_manifest(out_records, out_dir / "manifest.txt")
    return 0


def cmd_adjust(args):
    if _emit_config(args, {"boundary": args.boundary, "orient": args.orient,
                           "out": args.out, "radius": args.radius}):
        return 0
    src = Path(args.boundary)
    if src.suffix == ".occm":
        if not args.orient:
            raise ParameterError("--orient is required when --boundary is a single map")
        thinned = maps.load_map(src)
        binary = (np.asarray(thinned) > 0).astype(np.float32)
        adjusted = thinning.adjust_orientations(
            binary, maps.load_map(args.orient), args.radius)
        maps.save_map(adjusted, args.out)
        return 0
    records = maps.read_manifest(src)
    orient_records = maps.read_manifest(args.orient) if args.orient else records
    if len(orient_records) != len(records):
        raise ValidationError("boundary and orientation manifests are misaligned")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_records = []
    for i, (rec, orec) in enumerate(zip(records, orient_records)):
        thinned = maps.load_map(rec.boundary)
        binary = (np.asarray(thinned) > 0).astype(np.float32)
        adjusted = thinning.adjust_orientations(
            binary, maps.load_map(orec.orientation), args.radius)
        apath = out_dir / f"adjusted_{i:05d}.occm"
        maps.save_map(adjusted, apath)
        out_records.append(maps.ManifestRecord(rec.image, rec.boundary, apath))
    maps.write_manifest(out_records, out_dir / "manifest.txt")
    return 0


def cmd_eval(args):
    params = benchmark.MatchParams(d_max_frac=args.dmax_frac,
                                   orient_tol=args.orient_tol)
    if _emit_config(args, {"pred_manifest": args.pred_manifest,
                           "gt_manifest": args.gt_manifest,
                           "out_dir": args.out_dir, "svg": args.svg,
                           **asdict(params)}):
        return 0
    pred_records = maps.read_manifest(args.pred_manifest)
    gt_records = maps.read_manifest(args.gt_manifest)
    if len(pred_records) != len(gt_records):
        raise ValidationError(
            f"pred manifest has {len(pred_records)} records, gt has {len(gt_records)}")
    preds = []
    gts = []
    for prec, grec in zip(pred_records, gt_records):
        preds.append((maps.load_map(prec.boundary), maps.load_map(prec.orientation)))
        gt = maps.GroundTruth(maps.load_map(grec.boundary),
                              maps.load_map(grec.orientation)).validate()
        gts.append(gt)

    dataset, per_image = benchmark.pr_sweep([p for p, _ in preds], gts, params)
    summary = benchmark.summarize(dataset, per_image)
    opr = benchmark.opr_curve(preds, gts, params)
    aor = benchmark.aor_curve(preds, gts, params)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "pr.csv").write_text(benchmark.pr_csv(dataset), encoding="utf-8")
    (out_dir / "summary.csv").write_text(benchmark.summary_csv(summary), encoding="utf-8")
    (out_dir / "opr.csv").write_text(benchmark.occlusion_csv(opr), encoding="utf-8")
    (out_dir / "aor.csv").write_text(benchmark.occlusion_csv(aor), encoding="utf-8")
    if args.svg:
        write_curve_svg(out_dir / "pr.svg",
                        [("PR", [r.recall for r in dataset], [r.precision for r in dataset])],
                        "recall", "precision")
        write_curve_svg(out_dir / "opr.svg",
                        [("OPR", [p.recall for p in opr], [p.value for p in opr])],
                        "recall", "occlusion precision")
        write_curve_svg(out_dir / "aor.svg",
                        [("AOR", [p.recall for p in aor], [p.value for p in aor])],
                        "recall", "occlusion accuracy")
    return 0


def cmd_losscheck(args):
    if args.grid < 2:
        raise ParameterError(f"--grid must be >= 2, got {args.grid}")
    config = {"grid": args.grid, "alpha": args.alpha, "out_dir": args.out_dir}
    if _emit_config(args, config):
        return 0
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    p_grid = np.arange(1, args.grid + 1) / (args.grid + 1)

    checks = [
        ("cce", losses.finite_difference_errors("cce", None, args.alpha, p_grid)),
        ("focal", losses.finite_difference_errors(
            "focal", losses.FocalParams(), args.alpha, p_grid)),
        ("attention", losses.finite_difference_errors(
            "attention", losses.AttentionParams(), args.alpha, p_grid)),
        ("smooth_l1", losses.smooth_l1_fd_error(
            np.linspace(-2.0, 2.0, 81), losses.DEFAULT_SIGMA)),
    ]
    failed = False
    for name, err in checks:
        ok = err < 1e-6
        failed |= not ok
        print(f"gradcheck {name}: max rel err {err:.3e} -> {'ok' if ok else 'FAIL'}")

    def dump(name, table):
        lines = ["p,loss_pos,loss_neg"]
        lines += [f"{p!r},{lp!r},{ln!r}" for p, lp, ln in table]
        (out_dir / name).write_text("\n".join(lines) + "\n", encoding="utf-8")

    dump("loss_curve_cce.csv",
         losses.loss_curve_table("cce", None, args.alpha, args.grid))
    dump("loss_curve_focal.csv",
         losses.loss_curve_table("focal", losses.FocalParams(), args.alpha, args.grid))
    for beta in (1.0, 2.0, 3.0, 4.0, 5.0):
        table = losses.loss_curve_table(
            "attention", losses.AttentionParams(beta, 0.5), args.alpha, args.grid)
        dump(f"loss_curve_attention_beta{beta:g}_gamma0.5.csv", table)
    for gamma in (0.2, 0.3, 0.7):
        table = losses.loss_curve_table(
            "attention", losses.AttentionParams(4.0, gamma), args.alpha, args.grid)
        dump(f"loss_curve_attention_beta4_gamma{gamma:g}.csv", table)
    if failed:
        raise CheckFailure("gradient self-check failed")
    return 0


def cmd_sweep(args):
    config = trainer.TrainConfig(lr=args.lr, iters=args.iters, seed=args.seed)
    if _emit_config(args, {"manifest": args.manifest,
                           "eval_manifest": args.eval_manifest,
                           "betas": args.betas, "gammas": args.gammas,
                           "out": args.out, **asdict(config)}):
        return 0
    rows = trainer.sweep_beta_gamma(args.manifest, config, args.betas, args.gammas,
                                    eval_manifest=args.eval_manifest)
    Path(args.out).write_text(trainer.sweep_csv(rows), encoding="utf-8")
    return 0


_SVG_COLORS = ("#1f6fb2", "#c0392b", "#1e8449", "#7d3c98")


def write_curve_svg(path, series, xlabel, ylabel):
    """Minimal deterministic SVG line plot on fixed [0,1]x[0,1] axes."""
    size, margin = 480, 48
    span = size - 2 * margin

    def sx(x):
        return margin + x * span

    def sy(y):
        return size - margin - y * span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="{margin}" y="{margin}" width="{span}" height="{span}" '
        f'fill="none" stroke="black"/>',
        f'<text x="{size // 2}" y="{size - 12}" text-anchor="middle" '
        f'font-size="14">{xlabel}</text>',
        f'<text x="14" y="{size // 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 14 {size // 2})">{ylabel}</text>',
    ]
    for tick in (0.0, 0.5, 1.0):
        parts.append(f'<text x="{sx(tick):.1f}" y="{size - margin + 16}" '
                     f'text-anchor="middle" font-size="11">{tick:g}</text>')
        parts.append(f'<text x="{margin - 6}" y="{sy(tick) + 4:.1f}" '
                     f'text-anchor="end" font-size="11">{tick:g}</text>')
    for k, (label, xs, ys) in enumerate(series):
        color = _SVG_COLORS[k % len(_SVG_COLORS)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{margin + 8}" y="{margin + 16 + 14 * k}" '
                     f'font-size="12" fill="{color}">{label}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


def run(argv):
    """Parse and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ParameterError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except CheckFailure as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


def main(argv=None):
    return run(sys.argv[1:] if argv is None else list(argv))


if __name__ == "__main__":
    sys.exit(main())

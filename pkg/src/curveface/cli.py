"""Command-line entry point: ``curveface <verb> ...``.

Verbs: synth, depth, extract, eval, sweep, report.  Every verb takes
``--config FILE`` (flat key = value) and repeated ``--set key=value``
overrides; ``--seed`` is shorthand for ``--set seed=N``.  The exit status is
0 only when every record was processed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .config import PipelineConfig, apply_overrides, load_config
from .evaluate import EvalReport, check_counts, check_dataset, evaluate, sweep, sweep_csv
from .fdct import min_side
from .features import encode_vector, vector_csv
from .formats import label_index_csv, read_manifest, svg_lines, write_disparity
from .imgio import atomic_write, load_image, write_pgm
from .pipeline import Failure, as_gray, depth_image, features_for, load_samples, sample_features, synthesize


def _config(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    pairs = list(args.set or [])
    if args.seed is not None:
        pairs.append(f"seed={args.seed}")
    return apply_overrides(cfg, pairs)


def _report_failures(failures, out: Path | None = None) -> int:
    for f in failures:
        print(f"FAILED {f.key}: {f.message}", file=sys.stderr)
    if out is not None:
        text = "".join(f"{f.key}\t{f.message}\n" for f in failures)
        atomic_write(out / "failures.tsv", text.encode())
    return 1 if failures else 0


def _write_text(path: Path, text: str) -> None:
    atomic_write(path, text.encode())


# ---------------------------------------------------------------------------
# verbs


def cmd_synth(args) -> int:
    cfg = _config(args)
    records = synthesize(args.out, args.subjects, args.views, args.noise, args.jitter, cfg.seed, args.size)
    print(f"wrote {len(records)} stereo pairs and {Path(args.out) / 'manifest.csv'}")
    return 0


def cmd_depth(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    failures = []
    for rec in read_manifest(args.manifest):
        stem = f"{rec.subject}_{rec.view}"
        try:
            if rec.depth is not None:
                # precomputed depth passes through untouched
                atomic_write(out / f"{stem}_depth{rec.depth.suffix}", rec.depth.read_bytes())
                continue
            img, disp = depth_image(rec, cfg)
            write_pgm(out / f"{stem}_depth.pgm", img)
            write_disparity(out / f"{stem}_disparity.disp", disp)
        except (OSError, ValueError) as exc:
            failures.append(Failure(rec.key, f"{type(exc).__name__}: {exc}"))
    return _report_failures(failures, out if failures else None)


def cmd_extract(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    need = min_side(cfg.transform())
    rows = []
    for name in args.inputs:
        path = Path(name)
        img = as_gray(load_image(path))
        if min(img.shape) < need:
            raise SystemExit(f"error: {path}: {img.width}x{img.height} is too small for "
                             f"{cfg.nscales} scales (needs >= {need} per side)")
        vec = features_for(img.data, cfg)
        target = out / f"{path.stem}.feat"
        atomic_write(target, encode_vector(vec))
        if args.csv:
            _write_text(out / f"{path.stem}.csv", vector_csv(vec))
        rows.append((path.stem, "", "", "", target.name))
    _write_text(out / "index.csv", label_index_csv(rows))
    return 0


def _samples_or_exit(args, cfg):
    records = read_manifest(args.manifest)
    try:
        check_counts([r.subject for r in records], cfg)
    except ValueError as exc:
        raise SystemExit(f"error: {exc}")
    samples, failures = load_samples(records, cfg, args.workers)
    try:
        check_dataset(samples, cfg)
    except ValueError as exc:
        _report_failures(failures)
        raise SystemExit(f"error: {exc}")
    return samples, failures


def write_report(report: EvalReport, out: Path) -> None:
    _write_text(out / "report.json", report.to_json())
    _write_text(out / "report.md", report.to_markdown())
    if report.error:
        return
    _write_text(out / "cms.csv", report.cms_csv())
    _write_text(out / "roc.csv", report.roc_csv())
    _write_text(out / "folds.csv", report.folds_csv())
    if report.decisions:
        _write_text(out / "decisions.csv", report.decisions_csv())
    cms = {m: [(k + 1, v) for k, v in enumerate(c)] for m, c in report.cms.items()
           if m in ("intensity_curvelet", "depth_curvelet", "fused_curvelet", "fused_pca")}
    _write_text(out / "cms.svg", svg_lines(cms, "Cumulative match score", "rank", "CMS"))
    roc = {m: [(far, frr) for _, far, frr in pts] for m, pts in report.roc.items()}
    _write_text(out / "roc.svg", svg_lines(roc, "FAR vs FRR", "FAR (%)", "FRR (%)"))


def cmd_eval(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    t0 = time.perf_counter()
    samples, failures = _samples_or_exit(args, cfg)
    t_load = time.perf_counter() - t0
    feats = sample_features(samples, cfg)
    report = evaluate(samples, cfg, feats)
    report.timings["load_and_depth"] = t_load
    write_report(report, out)
    # gallery: one feature file per sample and modality plus the label index
    fold_of = {d["query"]: d["fold"] for d in report.decisions}
    rows = []
    for m, mat in feats.items():
        for s, vec in zip(samples, mat):
            name = f"{s.sample_id.replace('/', '_')}_{m}.feat"
            atomic_write(out / "features" / name, encode_vector(vec))
            rows.append((s.sample_id, s.subject, m, fold_of.get(s.sample_id, ""), f"features/{name}"))
    _write_text(out / "labels.csv", label_index_csv(rows))
    # wall-clock times vary run to run, so they live outside the report files
    _write_text(out / "timings.json", json.dumps(report.timings, indent=2, sort_keys=True) + "\n")
    print(report.to_markdown())
    return _report_failures(failures, out if failures else None)


def cmd_sweep(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    samples, failures = _samples_or_exit(args, cfg)
    configs = [cfg.replace(nscales=s, K=k) for s in args.scales for k in args.ks]
    reports = sweep(configs, samples, args.workers)
    _write_text(out / "sweep.csv", sweep_csv(reports))
    for r in reports:
        name = f"scales{r.config['nscales']}_K{r.config['K']}"
        _write_text(out / "runs" / f"{name}.json", r.to_json())
    series = {}
    for r in reports:
        if not r.error:
            series.setdefault(f"scale {r.config['nscales']}", []).append(
                (r.config["K"], r.rank1["fused_curvelet"]))
    _write_text(out / "sweep.svg", svg_lines(series, "Fused rank-1 vs K", "K", "rank-1 (%)"))
    bad = [r for r in reports if r.error]
    for r in bad:
        print(f"FAILED config nscales={r.config['nscales']} K={r.config['K']}: {r.error}", file=sys.stderr)
    return max(_report_failures(failures), 1 if bad else 0)


def cmd_report(args) -> int:
    src = Path(args.report)
    data = json.loads(src.read_text())
    report = EvalReport(**{k: v for k, v in data.items()})
    out = Path(args.out) if args.out else src.parent
    write_report(report, out)
    print(report.to_markdown())
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, default=1)

    parser = argparse.ArgumentParser(prog="curveface", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic stereo face set")
    p.add_argument("--subjects", type=int, default=4)
    p.add_argument("--views", type=int, default=4)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--jitter", type=float, default=1.0)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("depth", parents=[common], help="depth maps for every manifest record")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("extract", parents=[common], help="curvelet block features of images")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--csv", action="store_true", help="also write each vector as CSV")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", parents=[common], help="k-fold evaluation with fusion")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="evaluate over K and curvelet scales")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ks", type=int, nargs="+", default=list(range(1, 10)))
    p.add_argument("--scales", type=int, nargs="+", default=[2, 3, 4, 5])
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", parents=[common], help="re-render report files from report.json")
    p.add_argument("report")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

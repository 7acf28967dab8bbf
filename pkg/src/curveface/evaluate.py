"""Cross-validated identification and verification experiments.

A dataset is a list of :class:`Sample` (subject, preprocessed intensity and
depth images).  :func:`evaluate` runs the k-fold protocol for the curvelet
block features of both modalities, their OR fusion, eigenface baselines, and
a feature-concatenation baseline, and collects rank-1 rates, CMS curves and
FAR/FRR samples into an :class:`EvalReport`.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classify import DecisionRecord, Gallery, KnnConfig, _label_key, knn_classify, pca_project, pca_train
from .config import PipelineConfig
from .fdct import forward
from .features import extract_features
from .fusion import MODALITIES, fuse_identification, normalized_distance, verify


@dataclass
class Sample:
    sample_id: str
    subject: str
    intensity: np.ndarray
    depth: np.ndarray


@dataclass
class FoldPlan:
    nfolds: int
    assignment: np.ndarray  # fold index per sample
    seed: int

    def split(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.flatnonzero(self.assignment == k)
        train = np.flatnonzero(self.assignment != k)
        return train, test


def kfold_split(labels, nfolds: int = 4, seed: int = 0) -> FoldPlan:
    """Seeded partition stratified by subject.

    Each subject's samples are shuffled and dealt round-robin; the dealing
    position carries over between subjects so fold sizes differ by at most one.
    """
    labels = list(labels)
    if nfolds < 2:
        raise ValueError("nfolds must be >= 2")
    if len(labels) < nfolds:
        raise ValueError(f"{len(labels)} samples cannot fill {nfolds} folds")
    rng = np.random.default_rng(seed)
    assignment = np.empty(len(labels), dtype=int)
    pos = 0
    for subject in sorted(set(labels), key=_label_key):
        idx = np.array([i for i, s in enumerate(labels) if s == subject])
        idx = idx[rng.permutation(idx.size)]
        assignment[idx] = (pos + np.arange(idx.size)) % nfolds
        pos += idx.size
    return FoldPlan(nfolds, assignment, seed)


def rank1_rate(predicted, truth) -> float:
    predicted, truth = list(predicted), list(truth)
    if not truth:
        raise ValueError("no queries")
    if len(predicted) != len(truth):
        raise ValueError("one prediction per query is required")
    return 100.0 * sum(p == t for p, t in zip(predicted, truth)) / len(truth)


def cms_curve(rankings, truth, max_rank: int | None = None) -> np.ndarray:
    """CMS(r) for r = 1..max_rank: fraction of queries whose true label is in the top r."""
    rankings, truth = list(rankings), list(truth)
    if max_rank is None:
        max_rank = max(len(r) for r in rankings)
    hits = np.zeros(max_rank)
    for ranked, t in zip(rankings, truth):
        ranked = list(ranked)
        if t in ranked:
            pos = ranked.index(t)
            if pos < max_rank:
                hits[pos] += 1
    return np.cumsum(hits) / len(truth)


def far_frr(genuine, imposter, thresholds) -> np.ndarray:
    """Rows (t, FAR %, FRR %); a claim is accepted when its distance is <= t."""
    g = np.sort(np.asarray(genuine, dtype=float))
    i = np.sort(np.asarray(imposter, dtype=float))
    if g.size == 0 or i.size == 0:
        raise ValueError("genuine and imposter score sets must be non-empty")
    t = np.asarray(thresholds, dtype=float)
    frr = 100.0 * (g.size - np.searchsorted(g, t, side="right")) / g.size
    far = 100.0 * np.searchsorted(i, t, side="right") / i.size
    return np.column_stack([t, far, frr])


def roc_thresholds(genuine, imposter) -> np.ndarray:
    """Every distinct score plus one value below all of them."""
    scores = np.unique(np.concatenate([np.ravel(genuine), np.ravel(imposter)]))
    return np.concatenate([[scores[0] - 1.0], scores])


# ---------------------------------------------------------------------------
# features


def curvelet_features(images, cfg: PipelineConfig) -> np.ndarray:
    tcfg = cfg.transform()
    return np.array([extract_features(forward(img, tcfg), cfg.block) for img in images])


def _fused_ranking(fused_label, recs: dict[str, DecisionRecord]) -> list:
    labels = list(recs["intensity"].class_distances)
    score = {g: min(normalized_distance(r, g) for r in recs.values()) for g in labels}
    rest = sorted((g for g in labels if g != fused_label), key=lambda g: (score[g], _label_key(g)))
    return [fused_label, *rest]


# ---------------------------------------------------------------------------
# report


@dataclass
class EvalReport:
    config: dict
    nsamples: int
    nsubjects: int
    folds: dict  # method -> per-fold rank-1 %
    rank1: dict  # method -> mean over folds
    by_norm: dict  # "L1".. -> method -> mean rank-1
    cms: dict  # method -> list
    roc: dict  # method -> list of (t, far, frr)
    operating_point: dict  # fused label-based verification FAR/FRR
    decisions: list = field(default_factory=list)  # per query rows
    timings: dict = field(default_factory=dict)  # seconds per stage, kept out of to_json
    error: str = ""

    def to_json(self) -> str:
        payload = {k: v for k, v in self.__dict__.items() if k not in ("timings", "decisions")}
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def to_markdown(self) -> str:
        if self.error:
            return f"# Evaluation failed\n\n{self.error}\n"
        r = self.rank1
        fmt = lambda v: f"{v:.2f}"
        lines = [
            f"# Evaluation ({self.nsubjects} subjects, {self.nsamples} samples, {self.config.get('folds')} folds)",
            "",
            "## Single modality rank-1 (%)",
            "",
            "| Intensity eigenface | Depth eigenface | Intensity block curvelet | Depth block curvelet |",
            "|---|---|---|---|",
            f"| {fmt(r['intensity_pca'])} | {fmt(r['depth_pca'])} | {fmt(r['intensity_curvelet'])} | {fmt(r['depth_curvelet'])} |",
            "",
            "## Fusion rank-1 (%)",
            "",
            "| Eigenface OR fusion | Feature-level (curvelet) | Block curvelet OR fusion |",
            "|---|---|---|",
            f"| {fmt(r['fused_pca'])} | {fmt(r['feature_level'])} | {fmt(r['fused_curvelet'])} |",
            "",
            f"## KNN norms (K={self.config.get('K')}), rank-1 (%)",
            "",
            "| Norm | Intensity | Depth | OR fusion |",
            "|---|---|---|---|",
        ]
        for norm in sorted(self.by_norm):
            row = self.by_norm[norm]
            lines.append(f"| {norm} | {fmt(row['intensity_curvelet'])} | {fmt(row['depth_curvelet'])} | {fmt(row['fused_curvelet'])} |")
        op = self.operating_point
        lines += [
            "",
            "## Verification (OR of predicted-label decisions)",
            "",
            f"FAR {op['far']:.2f}%, FRR {op['frr']:.2f}%",
            "",
        ]
        return "\n".join(lines)

    def cms_csv(self) -> str:
        methods = sorted(self.cms)
        rows = ["rank," + ",".join(methods)]
        for k in range(max(len(v) for v in self.cms.values())):
            rows.append(f"{k + 1}," + ",".join(repr(self.cms[m][k]) for m in methods))
        return "\n".join(rows) + "\n"

    def roc_csv(self) -> str:
        rows = ["method,threshold,far,frr"]
        for m in sorted(self.roc):
            rows += [f"{m},{t!r},{a!r},{b!r}" for t, a, b in self.roc[m]]
        return "\n".join(rows) + "\n"

    def folds_csv(self) -> str:
        methods = sorted(self.folds)
        rows = ["fold," + ",".join(methods)]
        for k in range(len(next(iter(self.folds.values())))):
            rows.append(f"{k}," + ",".join(repr(self.folds[m][k]) for m in methods))
        return "\n".join(rows) + "\n"

    def decisions_csv(self) -> str:
        rows = ["query,fold,truth,intensity_label,intensity_distance,depth_label,depth_distance,fused_label,accepted"]
        for d in self.decisions:
            rows.append(",".join(str(d[k]) if not isinstance(d[k], float) else repr(d[k]) for k in (
                "query", "fold", "truth", "intensity_label", "intensity_distance",
                "depth_label", "depth_distance", "fused_label", "accepted")))
        return "\n".join(rows) + "\n"


def failed_report(cfg: PipelineConfig, message: str) -> EvalReport:
    return EvalReport(cfg.as_dict(), 0, 0, {}, {}, {}, {}, {}, {"far": float("nan"), "frr": float("nan")},
                      error=message)


# ---------------------------------------------------------------------------
# protocol


def check_counts(subjects: list, cfg: PipelineConfig) -> None:
    """Reject label sets the protocol cannot run on; cheap enough to call before any heavy work."""
    names = sorted(set(subjects), key=_label_key)
    if len(names) < 2:
        raise ValueError("evaluation needs at least 2 subjects")
    counts = {s: list(subjects).count(s) for s in names}
    short = [s for s, c in counts.items() if c < cfg.folds]
    if short:
        raise ValueError(f"subjects with fewer than {cfg.folds} samples: {', '.join(map(str, short))}")
    n = len(subjects)
    train_size = n - -(-n // cfg.folds)
    if cfg.K > train_size:
        raise ValueError(f"K={cfg.K} exceeds the training fold size {train_size}")


def check_dataset(samples: list[Sample], cfg: PipelineConfig) -> None:
    check_counts([s.subject for s in samples], cfg)
    ids = [s.sample_id for s in samples]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate sample ids")


def _knn_all(train_vecs, train_labels, test_vecs, test_ids, knn: KnnConfig) -> list[DecisionRecord]:
    gallery = Gallery(train_vecs, train_labels)
    return [knn_classify(v, gallery, knn, qid) for v, qid in zip(test_vecs, test_ids)]


def evaluate(samples: list[Sample], cfg: PipelineConfig, features: dict | None = None) -> EvalReport:
    """Full k-fold protocol.  ``features`` may carry precomputed curvelet vectors per modality."""
    check_dataset(samples, cfg)
    timings = {}
    t0 = time.perf_counter()
    if features is None:
        features = {m: curvelet_features([getattr(s, m) for s in samples], cfg) for m in MODALITIES}
    timings["features"] = time.perf_counter() - t0
    pixels = {m: np.array([np.asarray(getattr(s, m), dtype=float).ravel() for s in samples]) for m in MODALITIES}
    labels = [s.subject for s in samples]
    ids = [s.sample_id for s in samples]
    plan = kfold_split(labels, cfg.folds, cfg.seed)

    methods = ["intensity_curvelet", "depth_curvelet", "fused_curvelet", "intensity_pca", "depth_pca",
               "fused_pca", "feature_level"]
    folds = {m: [] for m in methods}
    by_norm = {f"L{p}": {m: [] for m in ("intensity_curvelet", "depth_curvelet", "fused_curvelet")} for p in (1, 2, 3)}
    rankings = {m: [] for m in methods}
    truth_all = []
    scores = {m: ([], []) for m in ("intensity_curvelet", "depth_curvelet", "fused_curvelet")}
    op_counts = {"ga": 0, "g": 0, "ia": 0, "i": 0}
    rows = []
    t0 = time.perf_counter()
    for k in range(cfg.folds):
        train, test = plan.split(k)
        tr_lab = [labels[i] for i in train]
        te_lab = [labels[i] for i in test]
        te_ids = [ids[i] for i in test]
        truth_all += te_lab

        def run(vecs_by_mod, knn):
            recs = {m: _knn_all(vecs_by_mod[m][train], tr_lab, vecs_by_mod[m][test], te_ids, knn) for m in MODALITIES}
            fused = [fuse_identification(a, b) for a, b in zip(recs["intensity"], recs["depth"])]
            return recs, fused

        recs, fused = run(features, cfg.knn())
        for m in MODALITIES:
            folds[f"{m}_curvelet"].append(rank1_rate([r.label for r in recs[m]], te_lab))
            rankings[f"{m}_curvelet"] += [r.ranked_labels() for r in recs[m]]
        folds["fused_curvelet"].append(rank1_rate([f.label for f in fused], te_lab))
        rankings["fused_curvelet"] += [
            _fused_ranking(f.label, {"intensity": a, "depth": b})
            for f, a, b in zip(fused, recs["intensity"], recs["depth"])
        ]
        for f, a, b, t, qid in zip(fused, recs["intensity"], recs["depth"], te_lab, te_ids):
            rows.append({"query": qid, "fold": k, "truth": t, "intensity_label": a.label,
                         "intensity_distance": a.distance, "depth_label": b.label,
                         "depth_distance": b.distance, "fused_label": f.label, "accepted": f.accepted})
            for claim in a.class_distances:
                genuine = claim == t
                for m, rec in (("intensity_curvelet", a), ("depth_curvelet", b)):
                    scores[m][0 if genuine else 1].append(rec.class_distances[claim])
                fused_score = min(normalized_distance(a, claim), normalized_distance(b, claim))
                scores["fused_curvelet"][0 if genuine else 1].append(fused_score)
                accepted = verify(a, b, claim)
                key = "g" if genuine else "i"
                op_counts[key] += 1
                op_counts[key + "a"] += accepted

        for p in (1, 2, 3):
            r_p, f_p = run(features, KnnConfig(cfg.K, p))
            for m in MODALITIES:
                by_norm[f"L{p}"][f"{m}_curvelet"].append(rank1_rate([r.label for r in r_p[m]], te_lab))
            by_norm[f"L{p}"]["fused_curvelet"].append(rank1_rate([f.label for f in f_p], te_lab))

        # eigenface baselines, trained on this fold's training images only
        proj = {}
        for m in MODALITIES:
            model = pca_train(pixels[m][train], variance=cfg.pca_variance)
            proj[m] = pca_project(model, pixels[m])
        recs_p, fused_p = run(proj, cfg.knn())
        for m in MODALITIES:
            folds[f"{m}_pca"].append(rank1_rate([r.label for r in recs_p[m]], te_lab))
            rankings[f"{m}_pca"] += [r.ranked_labels() for r in recs_p[m]]
        folds["fused_pca"].append(rank1_rate([f.label for f in fused_p], te_lab))
        rankings["fused_pca"] += [
            _fused_ranking(f.label, {"intensity": a, "depth": b})
            for f, a, b in zip(fused_p, recs_p["intensity"], recs_p["depth"])
        ]

        # feature-level fusion: one KNN over concatenated curvelet vectors
        concat = np.hstack([features["intensity"], features["depth"]])
        recs_c = _knn_all(concat[train], tr_lab, concat[test], te_ids, cfg.knn())
        folds["feature_level"].append(rank1_rate([r.label for r in recs_c], te_lab))
        rankings["feature_level"] += [r.ranked_labels() for r in recs_c]
    timings["protocol"] = time.perf_counter() - t0

    nsub = len(set(labels))
    roc = {}
    for m, (g, i) in scores.items():
        roc[m] = far_frr(g, i, roc_thresholds(g, i)).tolist()
    return EvalReport(
        config=cfg.as_dict(),
        nsamples=len(samples),
        nsubjects=nsub,
        folds=folds,
        rank1={m: float(np.mean(v)) for m, v in folds.items()},
        by_norm={n: {m: float(np.mean(v)) for m, v in d.items()} for n, d in by_norm.items()},
        cms={m: cms_curve(r, truth_all, nsub).tolist() for m, r in rankings.items()},
        roc=roc,
        operating_point={
            "far": 100.0 * op_counts["ia"] / max(op_counts["i"], 1),
            "frr": 100.0 * (op_counts["g"] - op_counts["ga"]) / max(op_counts["g"], 1),
        },
        decisions=rows,
        timings=timings,
    )


def sweep(configs: list[PipelineConfig], samples: list[Sample], workers: int = 1) -> list[EvalReport]:
    """One report per config, in input order; a failing config yields a report with ``error`` set.

    Curvelet features are computed once per distinct transform setting.
    Configs run on a thread pool; each evaluation is a pure function of its
    inputs, so the results do not depend on ``workers``.
    """
    feature_cache: dict = {}

    def features_for(cfg):
        key = (cfg.nscales, cfg.nangles, cfg.finest, cfg.block)
        if key not in feature_cache:
            feature_cache[key] = {m: curvelet_features([getattr(s, m) for s in samples], cfg) for m in MODALITIES}
        return feature_cache[key]

    # features first (sequentially) so the pool only runs the protocol
    for cfg in configs:
        try:
            features_for(cfg)
        except Exception:
            pass

    def one(cfg):
        try:
            return evaluate(samples, cfg, features_for(cfg))
        except Exception as exc:  # recorded, the sweep continues
            return failed_report(cfg, f"{type(exc).__name__}: {exc}")

    if workers <= 1:
        return [one(c) for c in configs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, configs))


def sweep_csv(reports: list[EvalReport]) -> str:
    rows = ["nscales,K,p,intensity_curvelet,depth_curvelet,fused_curvelet,error"]
    for r in reports:
        c = r.config
        vals = [r.rank1.get(m, float("nan")) for m in ("intensity_curvelet", "depth_curvelet", "fused_curvelet")]
        rows.append(f"{c['nscales']},{c['K']},{c['p']}," + ",".join(repr(v) for v in vals) + f",{r.error}")
    return "\n".join(rows) + "\n"

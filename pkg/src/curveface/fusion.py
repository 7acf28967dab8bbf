"""Decision-level OR fusion of the intensity and depth classifiers."""

from __future__ import annotations

from dataclasses import dataclass

from .classify import DecisionRecord, _label_key

MODALITIES = ("intensity", "depth")

# rows D0..D3 of the two-input truth table, (x, y) -> fused
TRUTH_TABLE = {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 1}


def or_fuse(x: int, y: int) -> int:
    if x not in (0, 1) or y not in (0, 1):
        raise ValueError("binary decisions must be 0 or 1")
    return int(bool(x) or bool(y))


@dataclass
class FusedIdentification:
    query_id: str
    label: object
    accepted: bool
    support: tuple[str, ...]
    distance: float  # normalized distance of the winning modality


def normalized_distance(rec: DecisionRecord, label) -> float:
    """Min-max normalized nearest distance of ``label`` over the query's per-class distances."""
    vals = list(rec.class_distances.values())
    lo, hi = min(vals), max(vals)
    if hi == lo:
        return 0.0
    return (rec.class_distances[label] - lo) / (hi - lo)


def fuse_identification(intensity: DecisionRecord, depth: DecisionRecord) -> FusedIdentification:
    """Per-identity OR of the two modalities' decisions.

    For each gallery identity g, X_g and Y_g say whether that modality picked
    g.  When both fire on different identities, the modality whose pick has the
    smaller normalized distance wins; a tie there falls to the smaller summed
    normalized distance over both modalities, then to label order.
    """
    if set(intensity.class_distances) != set(depth.class_distances):
        raise ValueError("modalities disagree on the label universe")
    if intensity.query_id != depth.query_id:
        raise ValueError(f"records refer to different queries: {intensity.query_id!r} vs {depth.query_id!r}")
    recs = dict(zip(MODALITIES, (intensity, depth)))
    fired = []
    for g in sorted(intensity.class_distances, key=_label_key):
        x, y = int(intensity.label == g), int(depth.label == g)
        if or_fuse(x, y):
            fired.append(g)
    if len(fired) == 1:
        g = fired[0]
        support = tuple(m for m in MODALITIES if recs[m].label == g)
        dist = min(normalized_distance(recs[m], g) for m in support)
        return FusedIdentification(intensity.query_id, g, True, support, dist)

    def rank(g):
        own = min(normalized_distance(recs[m], g) for m in MODALITIES if recs[m].label == g)
        both = sum(normalized_distance(recs[m], g) for m in MODALITIES)
        return (own, both, _label_key(g))

    g = min(fired, key=rank)
    support = tuple(m for m in MODALITIES if recs[m].label == g)
    return FusedIdentification(intensity.query_id, g, True, support, rank(g)[0])


def verify(intensity: DecisionRecord, depth: DecisionRecord, claimed) -> int:
    """Verification-mode fusion: accept iff either modality predicts the claimed identity."""
    return or_fuse(int(intensity.label == claimed), int(depth.label == claimed))

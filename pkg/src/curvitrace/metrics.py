"""Topology-aware reconstruction scoring.

Forests are resampled to a common node spacing, nodes are matched greedily
(globally closest pair first, within a distance cap), and the matched set
drives node scores (SSD precision/recall/F1), pointwise errors (PE, RE),
length-weighted edge scores, and the average branch length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import BranchForest, branch_arc_length, resample

__all__ = [
    "MatchConfig",
    "MetricReport",
    "match_nodes",
    "ssd_scores",
    "position_radius_errors",
    "length_scores",
    "abl",
    "evaluate",
]


@dataclass(frozen=True)
class MatchConfig:
    resample_spacing: float = 1.0
    match_distance: float = 2.0
    relative_radius_error: bool = False

    def __post_init__(self):
        if self.resample_spacing <= 0 or self.match_distance <= 0:
            raise ValueError("resample_spacing and match_distance must be positive")


@dataclass
class MetricReport:
    ssd_precision: float
    ssd_recall: float
    ssd_f1: float
    pe: float
    re: float
    len_precision: float
    len_recall: float
    len_f1: float
    abl: float

    _FIELDS = (
        "ssd_precision",
        "ssd_recall",
        "ssd_f1",
        "pe",
        "re",
        "len_precision",
        "len_recall",
        "len_f1",
        "abl",
    )

    def to_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in self._FIELDS}


def _flatten(forest: BranchForest):
    """Node ids ((branch, node) tuples), positions, radii of a forest."""
    ids, positions, radii = [], [], []
    for bi, branch in enumerate(forest):
        for ni, node in enumerate(branch.nodes):
            ids.append((bi, ni))
            positions.append(node.position)
            radii.append(node.radius)
    if positions:
        return ids, np.asarray(positions), np.asarray(radii)
    return ids, np.zeros((0, 3)), np.zeros(0)


def match_nodes(pred: BranchForest, gt: BranchForest, cfg: MatchConfig | None = None):
    """Greedy mutual-nearest node matching within the distance cap.

    Expects both forests already resampled. Returns a list of
    ((pred_branch, pred_node), (gt_branch, gt_node), distance) triples;
    globally closest pairs are taken first, ties resolved by lexicographic
    node ids, and every node is matched at most once.
    """
    cfg = cfg or MatchConfig()
    pred_ids, pred_pos, _ = _flatten(pred)
    gt_ids, gt_pos, _ = _flatten(gt)
    if not pred_ids or not gt_ids:
        return []
    pairs = cKDTree(pred_pos).sparse_distance_matrix(
        cKDTree(gt_pos), cfg.match_distance, output_type="coo_matrix"
    )
    order = sorted(
        zip(pairs.data, pairs.row, pairs.col),
        key=lambda t: (t[0], pred_ids[t[1]], gt_ids[t[2]]),
    )
    matched_pred: set[int] = set()
    matched_gt: set[int] = set()
    matches = []
    for dist, pi, gi in order:
        if dist > cfg.match_distance or pi in matched_pred or gi in matched_gt:
            continue
        matched_pred.add(pi)
        matched_gt.add(gi)
        matches.append((pred_ids[pi], gt_ids[gi], float(dist)))
    return matches


def ssd_scores(matches, n_pred: int, n_gt: int):
    """Node-level (precision, recall, f1); empty-vs-empty counts as perfect."""
    if n_pred == 0 and n_gt == 0:
        return 1.0, 1.0, 1.0
    m = len(matches)
    precision = m / n_pred if n_pred else 0.0
    recall = m / n_gt if n_gt else 0.0
    return precision, recall, _f1(precision, recall)


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2.0 * p * r / (p + r)


def position_radius_errors(matches, pred: BranchForest, gt: BranchForest, cfg: MatchConfig | None = None):
    """Mean position distance and mean radius error over matched pairs."""
    cfg = cfg or MatchConfig()
    if not matches:
        return 0.0, 0.0
    dists, rerrs = [], []
    for (pb, pn), (gb, gn), dist in matches:
        dists.append(dist)
        rp = pred.branches[pb].nodes[pn].radius
        rg = gt.branches[gb].nodes[gn].radius
        err = abs(rp - rg)
        if cfg.relative_radius_error:
            err /= rg
        rerrs.append(err)
    return float(np.mean(dists)), float(np.mean(rerrs))


def _edge_lengths(forest: BranchForest):
    """Per-branch edge list: ((branch, i), (branch, i+1), length)."""
    edges = []
    for bi, branch in enumerate(forest):
        pos = branch.positions()
        for ni in range(len(pos) - 1):
            seg = pos[ni + 1] - pos[ni]
            edges.append(((bi, ni), (bi, ni + 1), float(np.sqrt((seg * seg).sum()))))
    return edges


def length_scores(pred: BranchForest, gt: BranchForest, matches):
    """Length-weighted edge matching; an edge counts when both endpoints matched."""
    matched_pred = {m[0] for m in matches}
    matched_gt = {m[1] for m in matches}

    def side(forest, matched_ids):
        total, matched = 0.0, 0.0
        for a, b, length in _edge_lengths(forest):
            total += length
            if a in matched_ids and b in matched_ids:
                matched += length
        return matched, total

    mp, tp = side(pred, matched_pred)
    mg, tg = side(gt, matched_gt)
    if tp == 0.0 and tg == 0.0:
        return 1.0, 1.0, 1.0
    precision = mp / tp if tp else 0.0
    recall = mg / tg if tg else 0.0
    return precision, recall, _f1(precision, recall)


def abl(forest: BranchForest) -> float:
    """Average branch arc length; 0 for an empty forest."""
    if not forest.branches:
        return 0.0
    return float(np.mean([branch_arc_length(b) for b in forest]))


def _resampled(forest: BranchForest, spacing: float) -> BranchForest:
    # parent links are dropped: matching and length scores ignore tree
    # structure, and resampling would invalidate (branch, node) indices
    out = []
    for branch in forest:
        rs = resample(branch, spacing)
        rs.parent = None
        out.append(rs)
    return BranchForest(branches=out)


def evaluate(pred: BranchForest, gt: BranchForest, cfg: MatchConfig | None = None) -> MetricReport:
    """Full metric report; forests are resampled here before matching.

    ABL is computed on the raw (un-resampled) prediction since resampling
    does not change arc length but the reported value should describe the
    reconstruction as produced.
    """
    cfg = cfg or MatchConfig()
    pred_rs = _resampled(pred, cfg.resample_spacing)
    gt_rs = _resampled(gt, cfg.resample_spacing)
    matches = match_nodes(pred_rs, gt_rs, cfg)
    n_pred = pred_rs.node_count()
    n_gt = gt_rs.node_count()
    sp, sr, sf = ssd_scores(matches, n_pred, n_gt)
    pe, re = position_radius_errors(matches, pred_rs, gt_rs, cfg)
    lp, lr, lf = length_scores(pred_rs, gt_rs, matches)
    return MetricReport(
        ssd_precision=sp,
        ssd_recall=sr,
        ssd_f1=sf,
        pe=pe,
        re=re,
        len_precision=lp,
        len_recall=lr,
        len_f1=lf,
        abl=abl(pred),
    )

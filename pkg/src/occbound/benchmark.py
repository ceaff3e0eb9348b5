"""Boundary-detection benchmark: matching, PR sweep, ODS/OIS/AP, occlusion curves.

Predicted and ground-truth boundary pixels are put in one-to-one
correspondence within a distance budget ``d_max = max(d_max_floor,
d_max_frac * image_diagonal)``. Pairs are taken greedily by ascending
Euclidean distance (ties broken by (row, col) of pred then gt) and the
result is then completed to maximum cardinality with augmenting paths,
so no achievable match is ever left on the table; all matched distances
stay within ``d_max``.

Precision counts matched predicted pixels over all predicted pixels,
recall counts matched ground-truth pixels over all ground-truth pixels;
an empty prediction scores precision 1 so F degrades through recall
only. The sweep uses the 99 thresholds k/100, k = 1..99.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import hypot

import numpy as np
from scipy.spatial import cKDTree

from .angles import angular_distance
from .errors import ParameterError, ValidationError
from .maps import GroundTruth, image_diagonal, validate_binary_map, validate_probability_map

THRESHOLDS = tuple(k / 100 for k in range(1, 100))
RECALL_SAMPLES = tuple(k / 100 for k in range(1, 101))


@dataclass(frozen=True)
class MatchParams:
    """d_max_frac: match radius as a fraction of the image diagonal;
    d_max_floor: lower bound in pixels (keeps diagonal-neighbor matches
    possible on tiny images); orient_tol: folded angular distance below
    which an orientation counts as correct."""

    d_max_frac: float = 0.0075
    d_max_floor: float = float(np.sqrt(2.0))
    orient_tol: float = float(np.pi / 2)

    def __post_init__(self):
        if not self.d_max_frac > 0:
            raise ParameterError(f"d_max_frac must be > 0, got {self.d_max_frac}")
        if not self.d_max_floor >= 0:
            raise ParameterError(f"d_max_floor must be >= 0, got {self.d_max_floor}")
        if not 0.0 < self.orient_tol <= np.pi:
            raise ParameterError(f"orient_tol must lie in (0, pi], got {self.orient_tol}")

    def d_max(self, shape):
        return max(self.d_max_floor, self.d_max_frac * image_diagonal(shape))


def match_pairs(pred_pts, gt_pts, d_max):
    """One-to-one maximum matching between two (n, 2) pixel-coordinate sets.

    Returns a list of (pred_index, gt_index) pairs. Greedy ascending-
    distance seeding, then augmenting paths; deterministic.
    """
    pred_pts = np.asarray(pred_pts, dtype=np.float64).reshape(-1, 2)
    gt_pts = np.asarray(gt_pts, dtype=np.float64).reshape(-1, 2)
    if len(pred_pts) == 0 or len(gt_pts) == 0:
        return []
    neighbors = cKDTree(gt_pts).query_ball_point(pred_pts, r=d_max)
    pi = []
    gi = []
    for i, lst in enumerate(neighbors):
        pi.extend([i] * len(lst))
        gi.extend(sorted(lst))
    if not pi:
        return []
    pi = np.asarray(pi, dtype=np.intp)
    gi = np.asarray(gi, dtype=np.intp)
    diff = pred_pts[pi] - gt_pts[gi]
    dist = np.hypot(diff[:, 0], diff[:, 1])
    order = np.lexsort((gi, pi, dist))

    pred_to_gt = {}
    gt_to_pred = {}
    for k in order:
        a, b = int(pi[k]), int(gi[k])
        if a not in pred_to_gt and b not in gt_to_pred:
            pred_to_gt[a] = b
            gt_to_pred[b] = a

    # greedy alone is not maximum on chain configurations; finish with
    # augmenting paths (iterative BFS) over the same <= d_max candidate graph
    adj = [[] for _ in range(len(pred_pts))]
    for a, b in zip(pi, gi):
        adj[a].append(int(b))

    def try_augment(root):
        parent_gt = {}
        seen_pred = {root}
        frontier = [root]
        while frontier:
            nxt = []
            for a in frontier:
                for b in adj[a]:
                    if b in parent_gt:
                        continue
                    parent_gt[b] = a
                    owner = gt_to_pred.get(b)
                    if owner is None:
                        while b is not None:
                            prev_a = parent_gt[b]
                            prev_b = pred_to_gt.get(prev_a)
                            pred_to_gt[prev_a] = b
                            gt_to_pred[b] = prev_a
                            b = prev_b
                        return True
                    if owner not in seen_pred:
                        seen_pred.add(owner)
                        nxt.append(owner)
            frontier = nxt
        return False

    for a in range(len(pred_pts)):
        if a not in pred_to_gt and adj[a]:
            try_augment(a)

    return sorted(pred_to_gt.items())


def max_matching_cardinality(pred_pts, gt_pts, d_max):
    """Exact maximum-matching size by exhaustive bitmask search (test oracle).

    Only intended for small instances; refuses more than 16 gt pixels.
    """
    pred_pts = np.asarray(pred_pts, dtype=np.float64).reshape(-1, 2)
    gt_pts = np.asarray(gt_pts, dtype=np.float64).reshape(-1, 2)
    if len(gt_pts) > 16:
        raise ParameterError("oracle limited to <= 16 gt pixels")
    masks = []
    for p in pred_pts:
        m = 0
        for j, g in enumerate(gt_pts):
            if hypot(p[0] - g[0], p[1] - g[1]) <= d_max:
                m |= 1 << j
        masks.append(m)

    cache = {}

    def best(i, used):
        if i == len(masks):
            return 0
        key = (i, used)
        if key in cache:
            return cache[key]
        top = best(i + 1, used)
        free = masks[i] & ~used
        while free:
            bit = free & -free
            free ^= bit
            top = max(top, 1 + best(i + 1, used | bit))
        cache[key] = top
        return top

    return best(0, 0)


def match_boundaries(pred, gt, params: MatchParams | None = None):
    """Match two binary boundary maps; returns (pred_matched, gt_matched) maps."""
    params = params or MatchParams()
    pred = validate_binary_map(pred, "pred boundary")
    gt = validate_binary_map(gt, "gt boundary")
    if np.asarray(pred).shape != np.asarray(gt).shape:
        raise ValidationError(
            f"pred shape {np.asarray(pred).shape} differs from gt {np.asarray(gt).shape}")
    pred_pts = np.argwhere(np.asarray(pred) == 1.0)
    gt_pts = np.argwhere(np.asarray(gt) == 1.0)
    pairs = match_pairs(pred_pts, gt_pts, params.d_max(np.asarray(pred).shape))
    pred_m = np.zeros(np.asarray(pred).shape, dtype=np.float32)
    gt_m = np.zeros_like(pred_m)
    for a, b in pairs:
        pred_m[tuple(pred_pts[a])] = 1.0
        gt_m[tuple(gt_pts[b])] = 1.0
    return pred_m, gt_m


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    tp: int
    n_pred: int
    n_gt: int
    precision: float
    recall: float
    f: float

    @classmethod
    def from_counts(cls, threshold, tp, n_pred, n_gt):
        precision = tp / n_pred if n_pred > 0 else 1.0
        recall = tp / n_gt if n_gt > 0 else 1.0
        return cls(threshold, tp, n_pred, n_gt, precision, recall,
                   f_measure(precision, recall))


@dataclass(frozen=True)
class EvalSummary:
    ods_f: float
    ods_threshold: float
    ois_f: float
    ap: float


@dataclass(frozen=True)
class OcclusionCurvePoint:
    threshold: float
    recall: float
    value: float


def f_measure(p, r):
    """Harmonic F-measure 2pr/(p+r); 0 when both rates vanish."""
    if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
        raise ParameterError(f"precision/recall must lie in [0, 1], got {p}, {r}")
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def _check_aligned(preds, gts):
    if not preds or len(preds) != len(gts):
        raise ValidationError(
            f"prediction and ground-truth lists must be nonempty and aligned, "
            f"got {len(preds)} vs {len(gts)}")


class _MatchCache:
    """Memoizes per-image matching on the thresholded pixel set."""

    def __init__(self, prob, gt_boundary, d_max):
        self.prob = np.asarray(validate_probability_map(prob, "thinned prediction"),
                               dtype=np.float64)
        gt_boundary = validate_binary_map(gt_boundary, "gt boundary")
        self.gt_pts = np.argwhere(np.asarray(gt_boundary) == 1.0)
        self.d_max = d_max
        self._memo = {}

    def at(self, threshold):
        """(pred_pts, pairs) for this threshold's pixel set."""
        mask = self.prob >= threshold
        key = mask.tobytes()
        hit = self._memo.get(key)
        if hit is None:
            pred_pts = np.argwhere(mask)
            pairs = match_pairs(pred_pts, self.gt_pts, self.d_max)
            hit = (pred_pts, pairs)
            self._memo[key] = hit
        return hit


def pr_sweep(preds_thinned, gts, params: MatchParams | None = None):
    """PR tables over the 99 thresholds; returns (dataset_rows, per_image_rows).

    Predictions must already be thinned. The dataset row at each
    threshold pools tp/n_pred/n_gt counts over images before computing
    precision, recall and F.
    """
    params = params or MatchParams()
    _check_aligned(preds_thinned, gts)
    caches = []
    for prob, gt in zip(preds_thinned, gts):
        if np.asarray(prob).shape != np.asarray(gt.boundary).shape:
            raise ValidationError("prediction/ground-truth dimensions differ")
        caches.append(_MatchCache(prob, gt.boundary, params.d_max(np.asarray(prob).shape)))
    per_image = [[] for _ in caches]
    dataset = []
    for t in THRESHOLDS:
        tp_sum = np_sum = ng_sum = 0
        for i, cache in enumerate(caches):
            pred_pts, pairs = cache.at(t)
            tp, n_pred, n_gt = len(pairs), len(pred_pts), len(cache.gt_pts)
            per_image[i].append(PRPoint.from_counts(t, tp, n_pred, n_gt))
            tp_sum += tp
            np_sum += n_pred
            ng_sum += n_gt
        dataset.append(PRPoint.from_counts(t, tp_sum, np_sum, ng_sum))
    return dataset, per_image


def summarize(dataset_table, per_image_tables):
    """ODS / OIS / AP from pr_sweep tables.

    ODS takes the best dataset F over one shared threshold (lowest
    threshold on ties). OIS re-pools counts at each image's own best-F
    threshold. AP averages, over recall samples 0.01..1.00, the best
    precision among rows attaining at least that recall (0 where none).
    """
    if not dataset_table or not per_image_tables:
        raise ValidationError("summarize requires nonempty pr_sweep tables")
    best = dataset_table[0]
    for row in dataset_table[1:]:
        if row.f > best.f:
            best = row

    tp = n_pred = n_gt = 0
    for rows in per_image_tables:
        if not rows:
            raise ValidationError("empty per-image table")
        img_best = rows[0]
        for row in rows[1:]:
            if row.f > img_best.f:
                img_best = row
        tp += img_best.tp
        n_pred += img_best.n_pred
        n_gt += img_best.n_gt
    ois_p = tp / n_pred if n_pred > 0 else 1.0
    ois_r = tp / n_gt if n_gt > 0 else 1.0

    ap_total = 0.0
    for sample in RECALL_SAMPLES:
        attained = [row.precision for row in dataset_table if row.recall >= sample]
        ap_total += max(attained) if attained else 0.0

    return EvalSummary(ods_f=best.f, ods_threshold=best.threshold,
                       ois_f=f_measure(ois_p, ois_r),
                       ap=ap_total / len(RECALL_SAMPLES))


def _occlusion_curve(preds, gts, params: MatchParams):
    _check_aligned(preds, gts)
    caches = []
    orients = []
    gt_orients = []
    total_gt = 0
    for (prob, orient), gt in zip(preds, gts):
        if np.asarray(prob).shape != np.asarray(gt.boundary).shape \
                or np.asarray(orient).shape != np.asarray(gt.boundary).shape:
            raise ValidationError("prediction/ground-truth dimensions differ")
        cache = _MatchCache(prob, gt.boundary, params.d_max(np.asarray(prob).shape))
        caches.append(cache)
        orients.append(np.asarray(orient, dtype=np.float64))
        gt_orients.append(np.asarray(gt.orientation, dtype=np.float64))
        total_gt += len(cache.gt_pts)
    points = []
    for t in THRESHOLDS:
        matched = 0
        correct = 0
        for cache, pred_o, gt_o in zip(caches, orients, gt_orients):
            pred_pts, pairs = cache.at(t)
            matched += len(pairs)
            for a, b in pairs:
                pr, pc = pred_pts[a]
                gr, gc = cache.gt_pts[b]
                if angular_distance(pred_o[pr, pc], gt_o[gr, gc]) < params.orient_tol:
                    correct += 1
        if matched == 0:
            continue
        recall = matched / total_gt if total_gt > 0 else 1.0
        points.append(OcclusionCurvePoint(t, recall, correct / matched))
    return points


def opr_curve(preds, gts, params: MatchParams | None = None):
    """Occlusion precision vs boundary recall over the threshold sweep.

    ``preds`` pairs a thinned probability map with an adjusted
    orientation map per image. At each threshold the value is the
    fraction of matched predicted pixels whose folded angular distance
    to the matched ground-truth pixel's orientation is below
    ``orient_tol``; thresholds with no matched pixel are omitted.
    Counts are pooled over the dataset.
    """
    return _occlusion_curve(preds, gts, params or MatchParams())


def aor_curve(preds, gts, params: MatchParams | None = None):
    """Occlusion accuracy vs boundary recall.

    With pooled dataset counts this shares its numerator and denominator
    with opr_curve, so the curves coincide by construction; both are
    exposed because downstream tooling treats them as distinct reports.
    """
    return _occlusion_curve(preds, gts, params or MatchParams())


def pr_csv(rows):
    """CSV text for PR rows: threshold,recall,precision,f."""
    lines = ["threshold,recall,precision,f"]
    lines += [f"{r.threshold!r},{r.recall!r},{r.precision!r},{r.f!r}" for r in rows]
    return "\n".join(lines) + "\n"


def occlusion_csv(points):
    """CSV text for occlusion-curve points: threshold,recall,value."""
    lines = ["threshold,recall,value"]
    lines += [f"{p.threshold!r},{p.recall!r},{p.value!r}" for p in points]
    return "\n".join(lines) + "\n"


def summary_csv(summary: EvalSummary):
    """Single-row CSV: ods_f,ods_threshold,ois_f,ap."""
    return ("ods_f,ods_threshold,ois_f,ap\n"
            f"{summary.ods_f!r},{summary.ods_threshold!r},{summary.ois_f!r},{summary.ap!r}\n")

"""Detection and tracking evaluation.

Heatmaps are post-processed into region proposals (threshold, 4-connected
components, minimum area); proposals are greedily matched to ground-truth
lesion regions; the threshold sweep yields a free-response ROC with false
positives counted per image.  Tracking is scored by the percentage of correct
keypoints: a prediction is correct at level alpha when its Euclidean error is
at most alpha times the image diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .baseline import Heatmap
from .imagecore import LabelMask, ensure_labels

# 4-connectivity structuring element for component labeling.
_CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class RegionProposal:
    box: tuple[int, int, int, int]      # (x0, y0, x1, y1) inclusive, pixels
    class_id: int                       # 1 = benign, 2 = malignant
    score: float                        # mean class probability over support
    centroid: tuple[float, float]       # (x, y), pixels


@dataclass(frozen=True)
class TruthRegion:
    box: tuple[int, int, int, int]
    class_id: int
    mask: np.ndarray                    # local support within box
    centroid: tuple[float, float]

    def contains(self, point: tuple[float, float]) -> bool:
        x = int(np.floor(point[0] + 0.5))
        y = int(np.floor(point[1] + 0.5))
        x0, y0, x1, y1 = self.box
        if not (x0 <= x <= x1 and y0 <= y <= y1):
            return False
        return bool(self.mask[y - y0, x - x0])


def truth_regions_from_labels(labels: LabelMask) -> list[TruthRegion]:
    """4-connected components of each lesion class, in (class, row-major)
    order."""
    labels = ensure_labels(labels)
    out: list[TruthRegion] = []
    for class_id in (1, 2):
        plane = labels == class_id
        if not plane.any():
            continue
        comp, n = ndimage.label(plane, structure=_CROSS)
        for idx in range(1, n + 1):
            ys, xs = np.nonzero(comp == idx)
            box = (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
            local = comp[box[1]:box[3] + 1, box[0]:box[2] + 1] == idx
            out.append(TruthRegion(box=box, class_id=class_id, mask=local,
                                   centroid=(float(xs.mean()), float(ys.mean()))))
    return out


def heatmap_to_proposals(h: Heatmap, class_id: int, prob_threshold: float,
                         min_area: int) -> list[RegionProposal]:
    """Threshold one class plane of the heatmap, take 4-connected components,
    drop those smaller than ``min_area`` cells, and emit proposals in image
    pixel coordinates (boxes span cell centers).  Ordering is score
    descending, then row-major position of the component's first cell."""
    if not 0.0 < prob_threshold < 1.0:
        raise ValueError("prob_threshold must be in (0, 1)")
    plane = h.probs[:, :, class_id]
    hot = plane >= prob_threshold
    comp, n = ndimage.label(hot, structure=_CROSS)
    proposals: list[tuple] = []
    for idx in range(1, n + 1):
        cys, cxs = np.nonzero(comp == idx)
        if cys.size < min_area:
            continue
        px = h.xs[cxs]
        py = h.ys[cys]
        score = float(plane[cys, cxs].mean())
        box = (int(px.min()), int(py.min()), int(px.max()), int(py.max()))
        centroid = (float(px.mean()), float(py.mean()))
        first = (int(cys.min()), int(cxs[cys == cys.min()].min()))
        proposals.append((score, first, box, centroid))
    proposals.sort(key=lambda t: (-t[0], t[1]))
    return [RegionProposal(box=box, class_id=class_id, score=score,
                           centroid=centroid)
            for score, _first, box, centroid in proposals]


def _box_iou(a: tuple[int, int, int, int], b: tuple[int, int, int, int]) -> float:
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    iw, ih = ix1 - ix0 + 1, iy1 - iy0 + 1
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    area_a = (a[2] - a[0] + 1) * (a[3] - a[1] + 1)
    area_b = (b[2] - b[0] + 1) * (b[3] - b[1] + 1)
    return inter / float(area_a + area_b - inter)


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    flags: tuple[bool, ...]     # per proposal (in the given order): matched?


def match_proposals(proposals: list[RegionProposal], truth: list[TruthRegion],
                    criterion: str = "centroid",
                    iou_threshold: float = 0.3) -> MatchResult:
    """Greedy matching by descending proposal score; each truth region can be
    claimed at most once.  ``criterion``: "centroid" (proposal centroid inside
    the truth support, the default) or "iou" (box IoU >= iou_threshold).
    Matching is geometry-only; classes are not compared."""
    if criterion not in ("centroid", "iou"):
        raise ValueError(f"unknown match criterion {criterion!r}")
    order = sorted(range(len(proposals)),
                   key=lambda i: (-proposals[i].score, i))
    claimed = [False] * len(truth)
    flags = [False] * len(proposals)
    for i in order:
        prop = proposals[i]
        for j, region in enumerate(truth):
            if claimed[j]:
                continue
            if criterion == "centroid":
                hit = region.contains(prop.centroid)
            else:
                hit = _box_iou(prop.box, region.box) >= iou_threshold
            if hit:
                claimed[j] = True
                flags[i] = True
                break
    tp = sum(flags)
    return MatchResult(tp=tp, fp=len(proposals) - tp, fn=len(truth) - tp,
                       flags=tuple(flags))


@dataclass(frozen=True)
class RocCurve:
    """Free-response ROC: per threshold, mean false positives per image and
    true-positive rate; points are in threshold-descending sweep order."""

    points: tuple[tuple[float, float, float], ...]  # (threshold, fp/img, tpr)
    auc: float

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "points": [{"threshold": t, "fp_per_image": f, "tpr": r}
                       for t, f, r in self.points],
        }


def roc_curve(per_image_proposals: list[list[RegionProposal]],
              per_image_truth: list[list[TruthRegion]],
              thresholds, criterion: str = "centroid",
              iou_threshold: float = 0.3) -> RocCurve:
    """Sweep score thresholds over detections from many images.

    At each threshold the proposals with score >= threshold are matched
    per-image; TPR = TP / (TP + FN) pooled over all images, FP averaged per
    image.  AUC is the trapezoid over the FP axis normalized by its maximum
    over the sweep; when the sweep produces no false positives at all the
    curve is a vertical segment at 0 and AUC is defined as the maximum TPR.
    """
    if len(per_image_proposals) != len(per_image_truth) or not per_image_truth:
        raise ValueError("need matching, non-empty proposal/truth lists")
    total_truth = sum(len(t) for t in per_image_truth)
    if total_truth == 0:
        raise ValueError("no ground-truth lesions: TPR is undefined")
    thr = sorted((float(t) for t in thresholds), reverse=True)
    n_images = len(per_image_truth)
    points = []
    for t in thr:
        tp = 0
        fp = 0
        for props, truth in zip(per_image_proposals, per_image_truth):
            kept = [p for p in props if p.score >= t]
            res = match_proposals(kept, truth, criterion, iou_threshold)
            tp += res.tp
            fp += res.fp
        points.append((t, fp / n_images, tp / total_truth))
    fps = np.array([p[1] for p in points])
    tprs = np.array([p[2] for p in points])
    max_fp = fps.max()
    if max_fp == 0.0:
        auc = float(tprs.max())
    else:
        x = fps / max_fp
        auc = float(np.sum((x[1:] - x[:-1]) * (tprs[1:] + tprs[:-1]) * 0.5))
    return RocCurve(points=tuple(points), auc=auc)


@dataclass(frozen=True)
class PckCurve:
    points: tuple[tuple[float, float], ...]   # (alpha, fraction correct)
    keypoint_count: int

    def to_dict(self) -> dict:
        return {
            "keypoints": self.keypoint_count,
            "points": [{"alpha": a, "fraction": f} for a, f in self.points],
        }


DEFAULT_ALPHAS = tuple(round(0.01 * i, 2) for i in range(1, 21))


def pck(predicted: np.ndarray, truth: np.ndarray, alphas, diag: float,
        valid: np.ndarray | None = None) -> PckCurve:
    """Fraction of keypoints whose prediction lies within alpha * diag of the
    truth, per alpha.  Points flagged invalid count as incorrect."""
    pred = np.asarray(predicted, dtype=np.float64).reshape(-1, 2)
    tru = np.asarray(truth, dtype=np.float64).reshape(-1, 2)
    if pred.shape != tru.shape or pred.shape[0] == 0:
        raise ValueError("predicted and truth must be equal-length, non-empty")
    if diag <= 0:
        raise ValueError("diag must be positive")
    err = np.sqrt(((pred - tru) ** 2).sum(axis=1))
    if valid is not None:
        ok = np.asarray(valid, dtype=bool).ravel()
        if ok.shape[0] != pred.shape[0]:
            raise ValueError("valid flags length mismatch")
        err = np.where(ok, err, np.inf)
    n = err.shape[0]
    points = tuple((float(a), float((err <= float(a) * diag).sum() / n))
                   for a in alphas)
    return PckCurve(points=points, keypoint_count=n)

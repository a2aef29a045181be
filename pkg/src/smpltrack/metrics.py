"""Pose accuracy (MPJPE, PA-MPJPE, PCK) and tracking accuracy (IDs, MOTA,
IDF1, HOTA) evaluation.

Tracking follows the CLEAR conventions: per-frame matching at an IoU
threshold with carryover of the previous frame's matches, identity
switches counted against each ground-truth track's last known match.
IDF1 uses the global optimal identity assignment; HOTA averages
sqrt(DetA * AssA) over the 0.05..0.95 threshold sweep.  Meters convert to
millimeters only here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DegenerateConfiguration, DimensionMismatch, NoValidKeypoints

HOTA_ALPHAS = np.arange(0.05, 0.951, 0.05)

M_TO_MM = 1000.0


def mpjpe(joints: np.ndarray, joints_gt: np.ndarray) -> float:
    """Mean per-joint position error in millimeters after root alignment."""
    x = np.asarray(joints, dtype=float)
    g = np.asarray(joints_gt, dtype=float)
    if x.shape != g.shape or x.ndim != 2 or x.shape[0] != 3:
        raise DimensionMismatch("joints must both be (3, k)")
    xa = x - x[:, :1]
    ga = g - g[:, :1]
    return float(np.linalg.norm(xa - ga, axis=0).mean() * M_TO_MM)


def similarity_align(source: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Closed-form similarity (scale, rotation, translation) mapping source
    onto target, both (3, k): the orthogonal-Procrustes solution with the
    determinant sign correction."""
    x = np.asarray(source, dtype=float)
    y = np.asarray(target, dtype=float)
    k = x.shape[1]
    if k < 3:
        raise DegenerateConfiguration("similarity alignment needs at least 3 points")
    mu_x = x.mean(axis=1, keepdims=True)
    mu_y = y.mean(axis=1, keepdims=True)
    xc = x - mu_x
    yc = y - mu_y
    cov = yc @ xc.T / k
    u, d, vt = np.linalg.svd(cov)
    if np.count_nonzero(d > 1e-12 * max(d[0], 1e-300)) < 2:
        raise DegenerateConfiguration("points are collinear")
    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2, 2] = -1.0
    rot = u @ s @ vt
    var_x = (xc**2).sum() / k
    if var_x <= 0:
        raise DegenerateConfiguration("source points are coincident")
    scale = float((d * np.diag(s)).sum() / var_x)
    trans = mu_y[:, 0] - scale * rot @ mu_x[:, 0]
    return scale, rot, trans


def pa_mpjpe(joints: np.ndarray, joints_gt: np.ndarray) -> float:
    """MPJPE (mm) after optimal similarity alignment onto the ground truth."""
    x = np.asarray(joints, dtype=float)
    g = np.asarray(joints_gt, dtype=float)
    if x.shape != g.shape or x.ndim != 2 or x.shape[0] != 3:
        raise DimensionMismatch("joints must both be (3, k)")
    scale, rot, trans = similarity_align(x, g)
    aligned = scale * rot @ x + trans[:, None]
    return float(np.linalg.norm(aligned - g, axis=0).mean() * M_TO_MM)


def pck(keypoints: np.ndarray, keypoints_gt: np.ndarray, conf: np.ndarray,
        threshold: float, norm_length: float) -> float:
    """Fraction of positive-confidence keypoints within threshold * norm_length."""
    x = np.asarray(keypoints, dtype=float)
    g = np.asarray(keypoints_gt, dtype=float)
    c = np.asarray(conf, dtype=float)
    if norm_length <= 0:
        raise ValueError("norm_length must be positive")
    if x.shape != g.shape or x.ndim != 2 or x.shape[0] != 2 or c.shape != (x.shape[1],):
        raise DimensionMismatch("keypoints / gt / conf shapes disagree")
    valid = c > 0
    if not valid.any():
        raise NoValidKeypoints("every keypoint has zero confidence")
    err = np.linalg.norm(x[:, valid] - g[:, valid], axis=0)
    return float(np.mean(err < threshold * norm_length))


def bbox_iou(a: np.ndarray, b: np.ndarray) -> float:
    """IoU of two (x, y, w, h) boxes."""
    ax0, ay0, aw, ah = a
    bx0, by0, bw, bh = b
    ix0 = max(ax0, bx0)
    iy0 = max(ay0, by0)
    ix1 = min(ax0 + aw, bx0 + bw)
    iy1 = min(ay0 + ah, by0 + bh)
    iw = max(0.0, ix1 - ix0)
    ih = max(0.0, iy1 - iy0)
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return float(inter / union) if union > 0 else 0.0


def _iou_matrix(gt_boxes: list[np.ndarray], pred_boxes: list[np.ndarray]) -> np.ndarray:
    out = np.zeros((len(gt_boxes), len(pred_boxes)))
    for i, g in enumerate(gt_boxes):
        for j, p in enumerate(pred_boxes):
            out[i, j] = bbox_iou(g, p)
    return out


FrameBoxes = dict[int, list[tuple[int, np.ndarray]]]  # frame -> [(id, bbox)]


def _normalize_frames(frames) -> FrameBoxes:
    out: FrameBoxes = {}
    for frame, items in (frames.items() if isinstance(frames, dict) else frames):
        entries = [(int(i), np.asarray(b, dtype=float)) for i, b in items]
        ids = [i for i, _ in entries]
        if len(set(ids)) != len(ids):
            raise DimensionMismatch(f"duplicate ids within frame {frame}")
        out[int(frame)] = entries
    return out


@dataclass(frozen=True)
class TrackingMetrics:
    """Scalar tracking metrics plus the raw CLEAR counts at the base threshold."""

    id_switches: int
    mota: float
    idf1: float
    hota: float
    false_positives: int
    false_negatives: int
    n_gt: int
    n_pred: int
    iou_threshold: float

    def to_dict(self) -> dict:
        return {
            "schema": 1,
            "IDs": self.id_switches,
            "MOTA": self.mota,
            "IDF1": self.idf1,
            "HOTA": self.hota,
            "FP": self.false_positives,
            "FN": self.false_negatives,
            "IDSW": self.id_switches,
            "n_gt": self.n_gt,
            "n_pred": self.n_pred,
            "iou_threshold": self.iou_threshold,
        }


def _clear_counts(gt: FrameBoxes, pred: FrameBoxes, alpha: float) -> tuple[int, int, int]:
    """(FP, FN, IDSW) under CLEAR matching with carryover."""
    frames = sorted(set(gt) | set(pred))
    prev_match: dict[int, int] = {}   # gt id -> pred id matched in the previous frame
    last_match: dict[int, int] = {}   # gt id -> last pred id ever matched
    fp = fn = idsw = 0
    for frame in frames:
        gt_items = gt.get(frame, [])
        pred_items = pred.get(frame, [])
        gt_ids = [i for i, _ in gt_items]
        pred_ids = [i for i, _ in pred_items]
        iou = _iou_matrix([b for _, b in gt_items], [b for _, b in pred_items])

        matched_gt: dict[int, int] = {}
        used_pred: set[int] = set()
        # Carry over yesterday's pairs while they still overlap.
        for gi, gid in enumerate(gt_ids):
            pid = prev_match.get(gid)
            if pid is not None and pid in pred_ids:
                pj = pred_ids.index(pid)
                if iou[gi, pj] >= alpha:
                    matched_gt[gi] = pj
                    used_pred.add(pj)
        # Optimal matching on the rest, gated at the threshold.
        rem_g = [gi for gi in range(len(gt_ids)) if gi not in matched_gt]
        rem_p = [pj for pj in range(len(pred_ids)) if pj not in used_pred]
        if rem_g and rem_p:
            sub = np.full((len(rem_g), len(rem_p)), np.inf)
            for a, gi in enumerate(rem_g):
                for b, pj in enumerate(rem_p):
                    if iou[gi, pj] >= alpha:
                        sub[a, b] = 1.0 - iou[gi, pj]
            finite = np.isfinite(sub)
            if finite.any():
                big = sub[finite].sum() + 1.0
                rows, cols = linear_sum_assignment(np.where(finite, sub, big))
                for a, b in zip(rows, cols):
                    if finite[a, b]:
                        matched_gt[rem_g[a]] = rem_p[b]
                        used_pred.add(rem_p[b])

        prev_match = {}
        for gi, pj in matched_gt.items():
            gid, pid = gt_ids[gi], pred_ids[pj]
            if gid in last_match and last_match[gid] != pid:
                idsw += 1
            last_match[gid] = pid
            prev_match[gid] = pid
        fn += len(gt_ids) - len(matched_gt)
        fp += len(pred_ids) - len(matched_gt)
    return fp, fn, idsw


def _overlap_counts(gt: FrameBoxes, pred: FrameBoxes, alpha: float):
    """Per-(gt id, pred id) counts of frames with IoU >= alpha, plus totals."""
    gt_ids = sorted({i for items in gt.values() for i, _ in items})
    pred_ids = sorted({i for items in pred.values() for i, _ in items})
    g_index = {g: i for i, g in enumerate(gt_ids)}
    p_index = {p: i for i, p in enumerate(pred_ids)}
    counts = np.zeros((len(gt_ids), len(pred_ids)))
    gt_total = np.zeros(len(gt_ids))
    pred_total = np.zeros(len(pred_ids))
    for frame in sorted(set(gt) | set(pred)):
        for gid, gbox in gt.get(frame, []):
            gt_total[g_index[gid]] += 1
        for pid, _ in pred.get(frame, []):
            pred_total[p_index[pid]] += 1
        for gid, gbox in gt.get(frame, []):
            for pid, pbox in pred.get(frame, []):
                if bbox_iou(gbox, pbox) >= alpha:
                    counts[g_index[gid], p_index[pid]] += 1
    return counts, gt_total, pred_total, g_index, p_index


def _idf1(gt: FrameBoxes, pred: FrameBoxes, alpha: float) -> float:
    counts, gt_total, pred_total, _, _ = _overlap_counts(gt, pred, alpha)
    total_gt = int(gt_total.sum())
    total_pred = int(pred_total.sum())
    if total_gt == 0 and total_pred == 0:
        return 1.0
    idtp = 0.0
    if counts.size:
        rows, cols = linear_sum_assignment(-counts)
        idtp = float(counts[rows, cols].sum())
    idfp = total_pred - idtp
    idfn = total_gt - idtp
    denom = 2 * idtp + idfp + idfn
    return float(2 * idtp / denom) if denom > 0 else 1.0


def _hota_single(gt: FrameBoxes, pred: FrameBoxes, alpha: float) -> float:
    counts_pot, gt_total, pred_total, g_index, p_index = _overlap_counts(gt, pred, alpha)
    total_gt = int(gt_total.sum())
    total_pred = int(pred_total.sum())
    if total_gt == 0 and total_pred == 0:
        return 1.0
    if counts_pot.size == 0:
        return 0.0
    # Global association potential of each id pair, used to steer the
    # per-frame matching toward consistent identities.
    union = gt_total[:, None] + pred_total[None, :] - counts_pot
    glob = np.divide(counts_pot, union, out=np.zeros_like(counts_pot), where=union > 0)

    matches = np.zeros_like(counts_pot)
    tp = 0
    eps = 1e-9
    for frame in sorted(set(gt) | set(pred)):
        gt_items = gt.get(frame, [])
        pred_items = pred.get(frame, [])
        if not gt_items or not pred_items:
            continue
        iou = _iou_matrix([b for _, b in gt_items], [b for _, b in pred_items])
        score = np.full(iou.shape, -np.inf)
        for a, (gid, _) in enumerate(gt_items):
            for b, (pid, _) in enumerate(pred_items):
                if iou[a, b] >= alpha:
                    score[a, b] = glob[g_index[gid], p_index[pid]] + eps * iou[a, b]
        feasible = np.isfinite(score)
        if not feasible.any():
            continue
        rows, cols = linear_sum_assignment(np.where(feasible, -score, 1.0))
        for a, b in zip(rows, cols):
            if feasible[a, b]:
                tp += 1
                matches[g_index[gt_items[a][0]], p_index[pred_items[b][0]]] += 1
    fn = total_gt - tp
    fp = total_pred - tp
    if tp == 0:
        return 0.0
    det_a = tp / (tp + fn + fp)
    union_m = gt_total[:, None] + pred_total[None, :] - matches
    ass_scores = np.divide(matches, union_m, out=np.zeros_like(matches), where=union_m > 0)
    ass_a = float((matches * ass_scores).sum() / tp)
    return float(np.sqrt(det_a * ass_a))


def eval_tracking(pred_frames, gt_frames, iou_threshold: float = 0.5,
                  threads: int = 1) -> TrackingMetrics:
    """Full tracking evaluation of predicted vs ground-truth (id, bbox) streams.

    Inputs map frame -> [(id, bbox)], as dicts or sorted (frame, items) pairs.
    With threads > 1 the HOTA threshold sweep runs in a thread pool; the
    result is identical either way.
    """
    gt = _normalize_frames(gt_frames)
    pred = _normalize_frames(pred_frames)
    n_gt = sum(len(v) for v in gt.values())
    n_pred = sum(len(v) for v in pred.values())

    fp, fn, idsw = _clear_counts(gt, pred, iou_threshold)
    mota = 1.0 - (fp + fn + idsw) / n_gt if n_gt > 0 else 1.0
    idf1 = _idf1(gt, pred, iou_threshold)
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            hota_vals = list(pool.map(lambda a: _hota_single(gt, pred, a), HOTA_ALPHAS))
    else:
        hota_vals = [_hota_single(gt, pred, a) for a in HOTA_ALPHAS]
    hota = float(np.mean(hota_vals))
    return TrackingMetrics(id_switches=idsw, mota=mota, idf1=idf1, hota=hota,
                           false_positives=fp, false_negatives=fn,
                           n_gt=n_gt, n_pred=n_pred, iou_threshold=iou_threshold)


@dataclass(frozen=True)
class PoseMetrics:
    """Aggregated pose accuracy over a sequence of evaluation pairs."""

    mpjpe_mm: float
    pa_mpjpe_mm: float
    pck: dict[float, float]
    n_pairs: int
    n_joints: int

    def to_dict(self) -> dict:
        out = {
            "schema": 1,
            "MPJPE_mm": self.mpjpe_mm,
            "PA-MPJPE_mm": self.pa_mpjpe_mm,
            "n_pairs": self.n_pairs,
            "n_joints": self.n_joints,
        }
        for tau in sorted(self.pck):
            out[f"PCK@{tau:g}"] = self.pck[tau]
        return out

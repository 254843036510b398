"""ADD metric, accuracy-threshold curves, AUC and the label L2 loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CuboidModel, Pose

GRASP_THRESHOLD = 0.02  # meters
DEFAULT_MAX_THRESHOLD = 0.10
DEFAULT_NUM_SAMPLES = 100


@dataclass(frozen=True, eq=False)
class EvaluationCurve:
    thresholds: np.ndarray
    accuracy: np.ndarray
    auc: float
    max_threshold: float = DEFAULT_MAX_THRESHOLD


def add_metric(gt: Pose, est: Pose, pts) -> float:
    """Mean distance between model points under the two poses."""
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("model point cloud is empty")
    return float(np.mean(np.linalg.norm(gt.apply(pts) - est.apply(pts), axis=1)))


def cuboid_surface_points(model: CuboidModel, count: int = 500, seed: int = 0) -> np.ndarray:
    """Points sampled uniformly (by area) on the surface of ``model``'s cuboid."""
    rng = np.random.default_rng(seed)
    d = model.dims
    # face pairs normal to x, y, z
    areas = np.array([d[1] * d[2], d[0] * d[2], d[0] * d[1]])
    axis = rng.choice(3, size=count, p=areas / areas.sum())
    pts = (rng.random((count, 3)) - 0.5) * d
    side = np.where(rng.random(count) < 0.5, -0.5, 0.5)
    pts[np.arange(count), axis] = side * d[axis]
    return pts


def accuracy_at(errors, t: float) -> float:
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise ValueError("no errors given")
    return float(np.mean(e <= t))


def accuracy_curve(errors, max_threshold: float = DEFAULT_MAX_THRESHOLD,
                   num_samples: int = DEFAULT_NUM_SAMPLES) -> EvaluationCurve:
    """Accuracy at ``num_samples`` uniform thresholds on ``[0, max_threshold]``.

    Missed detections are passed as ``inf`` and fail at every threshold. The AUC
    is the trapezoidal integral normalised by ``max_threshold``.
    """
    if num_samples < 2:
        raise ValueError("num_samples must be >= 2")
    e = np.sort(np.asarray(errors, dtype=np.float64).ravel())
    if e.size == 0:
        raise ValueError("no errors given")
    thresholds = np.linspace(0.0, max_threshold, num_samples)
    acc = np.searchsorted(e, thresholds, side="right") / e.size
    auc = float(np.sum((acc[1:] + acc[:-1]) * np.diff(thresholds)) / 2.0 / max_threshold)
    return EvaluationCurve(thresholds, acc, auc, max_threshold)


def l2_label_loss(pred_maps, pred_fields, gt_maps, gt_fields) -> float:
    """Sum of squared differences over all 25 label channels."""
    loss = 0.0
    for p, g in ((pred_maps, gt_maps), (pred_fields, gt_fields)):
        p = np.asarray(p, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        loss += float(np.sum((p - g) ** 2))
    return loss


def write_curve_csv(path, curve: EvaluationCurve) -> None:
    with open(path, "w") as f:
        f.write("threshold_m,accuracy\n")
        for t, a in zip(curve.thresholds, curve.accuracy):
            f.write(f"{float(t)!r},{float(a)!r}\n")
        f.write(f"# auc={float(curve.auc)!r}\n")


def read_curve_csv(path) -> EvaluationCurve:
    thresholds, acc, auc = [], [], None
    with open(path) as f:
        header = f.readline().strip()
        if header != "threshold_m,accuracy":
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in f:
            line = line.strip()
            if line.startswith("# auc="):
                auc = float(line[len("# auc="):])
            elif line:
                t, a = line.split(",")
                thresholds.append(float(t))
                acc.append(float(a))
    if auc is None:
        raise ValueError(f"{path}: missing auc line")
    return EvaluationCurve(np.array(thresholds), np.array(acc), auc,
                           thresholds[-1] if thresholds else DEFAULT_MAX_THRESHOLD)

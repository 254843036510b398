"""End-to-end commands: generate, detect, evaluate, roundtrip, bench.

The pipeline config is JSON::

    {
      "objects": "objects.txt",            # object config, relative to this file
      "camera": {"fx": 600, "fy": 600, "cx": 320, "cy": 240, "width": 640, "height": 480},
      "instances": {"cracker_box": 1},     # instances per frame (default 1 each)
      "labelgen": {"sigma": 2.0, "vector_radius": 3, "downscale": 8},
      "detection": {"peak_threshold": 0.1, ...},
      "sampler": {"azimuth_range": [-120, 120], ...},
      "metrics": {"max_threshold": 0.1, "num_samples": 100, "model_points": 500},
      "seed": 0,
      "workers": 1
    }

Frame tensors are written as ``frame_<id>.<object>.belief.dtns`` and
``frame_<id>.<object>.field.dtns`` next to ``manifest.txt``.
"""
from __future__ import annotations

import json
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields as dc_fields, replace
from typing import Optional

import numpy as np

from . import tensorio
from .detection import DetectionConfig, associate_instances, detect, extract_all_peaks
from .geometry import CENTROID, NUM_CORNERS, CameraIntrinsics, Pose
from .labelgen import LabelGenConfig
from .metrics import GRASP_THRESHOLD, accuracy_at, accuracy_curve, add_metric, cuboid_surface_points, write_curve_csv
from .pnp import Correspondences, PnPError, solve_pnp
from .scenegen import CameraSamplerConfig, corrupt_labels, frame_seed, generate_labeled_frame, sample_scene, splitmix64

MANIFEST_NAME = "manifest.txt"
FRAME_RE = re.compile(r"^frame_(\d+)\.(.+)\.belief\.dtns$")


class DataError(Exception):
    """Bad input data or configuration (CLI exit code 2)."""


@dataclass(frozen=True)
class MetricsConfig:
    max_threshold: float = 0.10
    num_samples: int = 100
    model_points: int = 500


@dataclass
class PipelineConfig:
    objects: list
    camera: CameraIntrinsics
    instances: dict = field(default_factory=dict)
    labelgen: LabelGenConfig = LabelGenConfig()
    detection: DetectionConfig = DetectionConfig()
    sampler: CameraSamplerConfig = CameraSamplerConfig()
    metrics: MetricsConfig = MetricsConfig()
    seed: int = 0
    workers: int = 1
    base_dir: str = "."

    def __post_init__(self):
        names = [o.name for o in self.objects]
        if len(set(names)) != len(names):
            raise DataError("duplicate object names in config")
        for name in self.instances:
            if name not in names:
                raise DataError(f"instances refers to unknown object {name!r}")
        if self.workers < 1:
            raise DataError("workers must be >= 1")

    def object(self, name):
        for o in self.objects:
            if o.name == name:
                return o
        raise DataError(f"object {name!r} is not in the object config")

    def counts(self):
        return [int(self.instances.get(o.name, 1)) for o in self.objects]

    def model_points(self, name) -> np.ndarray:
        obj = self.object(name)
        pts = tensorio.load_model_points(obj, self.base_dir)
        if pts is None:
            pts = cuboid_surface_points(obj.model, self.metrics.model_points, seed=0)
        return pts


def _sub(cls, data, key):
    raw = data.get(key, {}) or {}
    known = {f.name for f in dc_fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise DataError(f"unknown {key} settings: {sorted(unknown)}")
    raw = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()}
    try:
        return cls(**raw)
    except (TypeError, ValueError) as e:
        raise DataError(f"invalid {key} settings: {e}") from None


def config_from_dict(data: dict, base_dir=".") -> PipelineConfig:
    if "objects" not in data:
        raise DataError("config needs an 'objects' entry")
    obj_path = data["objects"]
    if not os.path.isabs(obj_path):
        obj_path = os.path.join(base_dir, obj_path)
    if not os.path.exists(obj_path):
        raise DataError(f"object config {obj_path} does not exist")
    try:
        objects = tensorio.parse_object_config(obj_path)
    except tensorio.ParseError as e:
        raise DataError(str(e)) from None
    for o in objects:
        if o.points_path:
            p = o.points_path if os.path.isabs(o.points_path) else os.path.join(base_dir, o.points_path)
            if not os.path.exists(p):
                raise DataError(f"model points file {p} does not exist")
    try:
        camera = CameraIntrinsics(**data.get("camera", {"fx": 600.0, "fy": 600.0, "cx": 320.0,
                                                        "cy": 240.0, "width": 640, "height": 480}))
    except (TypeError, ValueError) as e:
        raise DataError(f"invalid camera: {e}") from None
    return PipelineConfig(
        objects=objects,
        camera=camera,
        instances=dict(data.get("instances", {})),
        labelgen=_sub(LabelGenConfig, data, "labelgen"),
        detection=_sub(DetectionConfig, data, "detection"),
        sampler=_sub(CameraSamplerConfig, data, "sampler"),
        metrics=_sub(MetricsConfig, data, "metrics"),
        seed=int(data.get("seed", 0)),
        workers=int(data.get("workers", 1)),
        base_dir=base_dir,
    )


def load_config(path) -> PipelineConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read config {path}: {e}") from None
    return config_from_dict(data, os.path.dirname(os.path.abspath(path)))


# -- per-frame work ---------------------------------------------------------

def _labelgen_for_frame(cfg: PipelineConfig, seed: int, index: int) -> LabelGenConfig:
    return replace(cfg.labelgen, rng_seed=splitmix64(frame_seed(seed, index)))


def generate_frame(cfg: PipelineConfig, seed: int, index: int):
    """One deterministic frame: (FrameRecord, {object name: (maps, fields)})."""
    rng = np.random.default_rng(frame_seed(seed, index))
    scene = sample_scene([o.model for o in cfg.objects], cfg.counts(), cfg.sampler, cfg.camera, rng)
    lcfg = _labelgen_for_frame(cfg, seed, index)
    record = tensorio.FrameRecord(index, cfg.camera)
    tensors = {}
    for obj in cfg.objects:
        maps, fields_, gt = generate_labeled_frame(scene, lcfg, object_name=obj.name)
        tensors[obj.name] = (maps, fields_)
        record.objects.extend(tensorio.ObjectPose(name, pose) for name, pose in gt)
    return record, tensors


def estimate_poses(instances, obj: tensorio.ObjectConfig, K: CameraIntrinsics, lcfg: LabelGenConfig):
    """Solve PnP for each detected instance; unsolvable instances are skipped."""
    model = obj.model
    out = []
    for inst in instances:
        idx, uv = inst.image_keypoints(lcfg)
        try:
            sol = solve_pnp(Correspondences(model.keypoints[idx], uv), K)
        except PnPError:
            continue
        out.append(tensorio.ObjectPose(obj.name, sol.pose, sol.reprojection_rmse, inst.vertex_count))
    return out


def detect_frame(cfg: PipelineConfig, maps, fields_, obj) -> list:
    for name, arr in (("belief", maps), ("field", fields_)):
        if not np.all(np.isfinite(arr)):
            raise DataError(f"{name} tensor contains NaN or Inf")
    if maps.shape[1:] != fields_.shape[1:]:
        raise DataError(f"belief grid {maps.shape[1:]} does not match field grid {fields_.shape[1:]}")
    instances = detect(maps, fields_, cfg.detection)
    return estimate_poses(instances, obj, cfg.camera, cfg.labelgen)


def _parallel_map(fn, args, workers):
    if workers <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*args))) if args else []


def _frame_paths(out_dir, index, name):
    stem = os.path.join(out_dir, f"frame_{index:06d}.{name}")
    return stem + ".belief.dtns", stem + ".field.dtns"


# -- commands ---------------------------------------------------------------

def cmd_generate(cfg: PipelineConfig, num_frames: int, out_dir, seed: Optional[int] = None) -> list:
    """Write ``num_frames`` labelled frames plus ``manifest.txt`` into ``out_dir``."""
    seed = cfg.seed if seed is None else seed
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise DataError(f"cannot create output directory {out_dir}: {e}") from None
    if not os.access(out_dir, os.W_OK):
        raise DataError(f"output directory {out_dir} is not writable")
    results = _parallel_map(generate_frame, [(cfg, seed, i) for i in range(num_frames)], cfg.workers)
    records = []
    for record, tensors in results:
        for name, (maps, fields_) in tensors.items():
            bpath, fpath = _frame_paths(out_dir, record.frame_id, name)
            tensorio.write_tensor(bpath, maps)
            tensorio.write_tensor(fpath, fields_)
        records.append(record)
    tensorio.write_manifest(os.path.join(out_dir, MANIFEST_NAME), records)
    return records


def _detect_file_frame(cfg, in_dir, index, names):
    record = tensorio.FrameRecord(index, cfg.camera)
    errors = []
    for name in names:
        bpath, fpath = _frame_paths(in_dir, index, name)
        try:
            maps = tensorio.read_tensor(bpath, tensorio.BELIEF_CHANNELS)
            fields_ = tensorio.read_tensor(fpath, tensorio.FIELD_CHANNELS)
            record.objects.extend(detect_frame(cfg, maps, fields_, cfg.object(name)))
        except (OSError, ValueError, DataError) as e:
            errors.append(f"frame {index} object {name}: {e}")
    return record, errors


def list_frames(in_dir) -> dict:
    """{frame id: sorted object names} discovered from belief files in ``in_dir``."""
    frames = {}
    for fname in os.listdir(in_dir):
        m = FRAME_RE.match(fname)
        if m:
            frames.setdefault(int(m.group(1)), set()).add(m.group(2))
    return {k: sorted(v) for k, v in sorted(frames.items())}


def cmd_detect(cfg: PipelineConfig, in_dir, out_file=None):
    """Detect and solve poses for every frame in ``in_dir``.

    Returns ``(records, errors)``; failures are reported per frame and the run
    continues. Frames with errors still get a (possibly empty) record.
    """
    if not os.path.isdir(in_dir):
        raise DataError(f"input directory {in_dir} does not exist")
    frames = list_frames(in_dir)
    for names in frames.values():
        for name in names:
            cfg.object(name)
    results = _parallel_map(_detect_file_frame, [(cfg, in_dir, i, names) for i, names in frames.items()],
                            cfg.workers)
    records = [r for r, _ in results]
    errors = [e for _, errs in results for e in errs]
    if out_file is not None:
        tensorio.write_manifest(out_file, records)
    return records, errors


def match_frame(gt_objects, est_objects, model_points):
    """Greedy one-to-one matching by ascending ADD within each object class.

    Returns a list of ``(gt index, est index or None, add)`` with one entry per
    ground-truth object; unmatched ground truth has ``add = inf``.
    """
    pairs = []
    for gi, g in enumerate(gt_objects):
        for ei, e in enumerate(est_objects):
            if g.name == e.name:
                pairs.append((add_metric(g.pose, e.pose, model_points[g.name]), gi, ei))
    pairs.sort()
    used_g, used_e, out = set(), set(), {}
    for add, gi, ei in pairs:
        if gi in used_g or ei in used_e:
            continue
        used_g.add(gi)
        used_e.add(ei)
        out[gi] = (ei, add)
    return [(gi, *out.get(gi, (None, np.inf))) for gi in range(len(gt_objects))]


@dataclass
class EvaluationSummary:
    curves: dict  # name -> EvaluationCurve, "all" included
    errors: dict  # name -> list of ADD (inf = missed)

    def lines(self):
        out = []
        for name in sorted(self.curves, key=lambda n: (n != "all", n)):
            c = self.curves[name]
            e = self.errors[name]
            out.append(f"{name}: n={len(e)} auc={c.auc:.6f} acc@{GRASP_THRESHOLD:g}m="
                       f"{accuracy_at(e, GRASP_THRESHOLD):.6f}")
        return out


def evaluate_records(cfg: PipelineConfig, est_frames, gt_frames) -> EvaluationSummary:
    names = sorted({o.name for fr in list(est_frames) + list(gt_frames) for o in fr.objects})
    for name in names:
        cfg.object(name)
    model_points = {name: cfg.model_points(name) for name in names}
    est_by_id = {fr.frame_id: fr for fr in est_frames}
    errors = {name: [] for name in names}
    for fr in gt_frames:
        est = est_by_id.get(fr.frame_id)
        matches = match_frame(fr.objects, est.objects if est else [], model_points)
        for gi, _, add in matches:
            errors[fr.objects[gi].name].append(add)
    errors = {k: v for k, v in errors.items() if v}
    errors["all"] = [a for v in errors.values() for a in v]
    m = cfg.metrics
    curves = {k: accuracy_curve(v, m.max_threshold, m.num_samples) for k, v in errors.items() if v}
    return EvaluationSummary(curves, {k: v for k, v in errors.items() if v})


def cmd_evaluate(cfg: PipelineConfig, est_path, gt_path, out_csv=None) -> EvaluationSummary:
    """Score estimates against ground truth; writes the overall curve to ``out_csv``
    and one ``<stem>.<object>.csv`` per object class next to it."""
    try:
        est = tensorio.parse_manifest(est_path)
        gt = tensorio.parse_manifest(gt_path)
    except (OSError, tensorio.ParseError) as e:
        raise DataError(str(e)) from None
    summary = evaluate_records(cfg, est, gt)
    if out_csv is not None:
        stem, ext = os.path.splitext(out_csv)
        for name, curve in summary.curves.items():
            write_curve_csv(out_csv if name == "all" else f"{stem}.{name}{ext or '.csv'}", curve)
    return summary


def _roundtrip_frame(cfg, seed, index, noise_sigma, dropout):
    record, tensors = generate_frame(cfg, seed, index)
    rng = np.random.default_rng(splitmix64(splitmix64(frame_seed(seed, index))))
    est = tensorio.FrameRecord(index, cfg.camera)
    for obj in cfg.objects:
        maps, fields_ = tensors[obj.name]
        if noise_sigma > 0 or dropout:
            maps, fields_ = corrupt_labels(maps, fields_, noise_sigma, int(dropout), rng)
        est.objects.extend(detect_frame(cfg, maps, fields_, obj))
    return record, est


@dataclass
class RoundtripReport:
    frames: int
    gt_instances: int
    estimates: int
    summary: Optional[EvaluationSummary]
    median_add: float
    seconds_per_frame: float

    def lines(self, timing=True):
        out = [f"frames: {self.frames}", f"gt_instances: {self.gt_instances}",
               f"estimates: {self.estimates}"]
        if self.summary is not None:
            errs = self.summary.errors["all"]
            c = self.summary.curves["all"]
            out += [f"auc: {c.auc:.6f}", f"acc@2cm: {accuracy_at(errs, GRASP_THRESHOLD):.6f}",
                    f"median_add_m: {self.median_add:.9g}"]
            out += self.summary.lines()
        if timing:
            out.append(f"runtime_per_frame_ms: {1e3 * self.seconds_per_frame:.3f}")
        return out


def cmd_roundtrip(cfg: PipelineConfig, num_frames: int, noise_sigma: float = 0.0, dropout: int = 0,
                  seed: Optional[int] = None) -> RoundtripReport:
    """generate -> (corrupt) -> detect -> evaluate, entirely in memory."""
    seed = cfg.seed if seed is None else seed
    t0 = time.perf_counter()
    results = _parallel_map(_roundtrip_frame, [(cfg, seed, i, noise_sigma, dropout) for i in range(num_frames)],
                            cfg.workers)
    gt = [g for g, _ in results]
    est = [e for _, e in results]
    n_gt = sum(len(g.objects) for g in gt)
    summary = evaluate_records(cfg, est, gt) if n_gt else None
    median = float(np.median(summary.errors["all"])) if summary else float("nan")
    elapsed = time.perf_counter() - t0
    return RoundtripReport(num_frames, n_gt, sum(len(e.objects) for e in est), summary, median,
                           elapsed / max(num_frames, 1))


def time_postprocessing(cfg: PipelineConfig, maps, fields_, obj):
    """Wall times (seconds) of peak extraction, association and PnP on one frame."""
    t0 = time.perf_counter()
    peaks = extract_all_peaks(maps, cfg.detection)
    t1 = time.perf_counter()
    instances = associate_instances(peaks[:NUM_CORNERS], peaks[CENTROID], fields_, cfg.detection)
    t2 = time.perf_counter()
    estimate_poses(instances, obj, cfg.camera, cfg.labelgen)
    t3 = time.perf_counter()
    return t1 - t0, t2 - t1, t3 - t2


def cmd_bench(cfg: PipelineConfig, num_frames: int = 100, seed: Optional[int] = None) -> dict:
    """Per-stage post-processing times in ms: {stage: (median, mean, p90)}."""
    seed = cfg.seed if seed is None else seed
    obj = cfg.objects[0]
    single = replace(cfg, objects=[obj], instances={obj.name: 1})
    times = []
    for i in range(num_frames):
        _, tensors = generate_frame(single, seed, i)
        maps, fields_ = tensors[obj.name]
        times.append(time_postprocessing(single, maps, fields_, obj))
    t = np.array(times).reshape(-1, 3) * 1e3
    table = {}
    for j, stage in enumerate(("extract", "associate", "pnp")):
        table[stage] = (float(np.median(t[:, j])), float(np.mean(t[:, j])), float(np.percentile(t[:, j], 90)))
    tot = t.sum(axis=1)
    table["total"] = (float(np.median(tot)), float(np.mean(tot)), float(np.percentile(tot, 90)))
    return table


def format_bench(table) -> str:
    lines = [f"{'stage':<10} {'median_ms':>10} {'mean_ms':>10} {'p90_ms':>10}"]
    for stage, (med, mean, p90) in table.items():
        lines.append(f"{stage:<10} {med:>10.3f} {mean:>10.3f} {p90:>10.3f}")
    return "\n".join(lines)

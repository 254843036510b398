"""
Several boxes in one frame
==========================

With more than one instance every belief map has several peaks. Each corner
peak goes to the centroid its vector field points at, within 0.5 rad, and
each centroid accepts at most one peak per corner.
"""
import numpy as np

from cuboidpose import CuboidModel, LabelGenConfig, detect
from cuboidpose.geometry import CameraIntrinsics
from cuboidpose.scenegen import CameraSamplerConfig, generate_labeled_frame, sample_scene

K = CameraIntrinsics(600.0, 600.0, 320.0, 240.0, 640, 480)
box = CuboidModel("cracker_box", [0.16, 0.213, 0.06])
rng = np.random.default_rng(3)

scene = sample_scene([box], [3], CameraSamplerConfig(), K, rng)
maps, fields, gt = generate_labeled_frame(scene, LabelGenConfig())
print(f"{len(gt)} boxes placed")

instances = detect(maps, fields)
for inst in instances:
    x, y = inst.centroid.pos
    slots = "".join("x" if v is not None else "." for v in inst.vertices)
    print(f"centroid at ({x:5.2f}, {y:5.2f}) corners [{slots}] count {inst.vertex_count}")

# a looser or tighter angle gate changes what gets grouped
from cuboidpose.detection import DetectionConfig
for thr in (0.1, 0.5, 1.5):
    got = detect(maps, fields, DetectionConfig(angle_threshold=thr))
    print(f"angle_threshold {thr}: corners per instance {[i.vertex_count for i in got]}")

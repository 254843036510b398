"""
Rendering ground-truth labels
=============================

A cuboid is described by its 8 corners and its centroid. Projected into the
image and scaled down by 8, each of these keypoints becomes a Gaussian bump on
its own belief map, and each corner additionally writes the unit direction
toward the centroid into a small disk of its vector field.
"""
import numpy as np

from cuboidpose import CameraIntrinsics, CuboidModel, LabelGenConfig, Pose
from cuboidpose.geometry import project_keypoints
from cuboidpose.labelgen import image_to_map, render_labels

K = CameraIntrinsics(600.0, 600.0, 320.0, 240.0, 640, 480)
box = CuboidModel("cracker_box", [0.16, 0.213, 0.06])
pose = Pose.from_axis_angle([0.4, -0.3, 0.2], [0.02, -0.01, 0.8])

# image pixels first, then map cells
uv = project_keypoints(box, pose, K)
cfg = LabelGenConfig()
kp = image_to_map(uv, cfg)
print("keypoints in map cells:\n", np.round(kp, 2))

maps, fields = render_labels(kp[None], cfg, cfg.map_dims(K.width, K.height))
print("belief maps", maps.shape, maps.dtype, "fields", fields.shape)

# the map peaks near the keypoint, with value exp(-d^2 / 8) at distance d
k = 3
r, c = np.unravel_index(np.argmax(maps[k]), maps[k].shape)
print(f"corner {k}: keypoint {kp[k].round(2)}, brightest cell (col, row) = ({c}, {r}), value {maps[k, r, c]:.4f}")

# field vectors in the disk point toward the centroid
f = fields[2 * k:2 * k + 2, r, c]
d = kp[8] - kp[k]
print("field at that cell", f.round(4), " direction to centroid", (d / np.linalg.norm(d)).round(4))
print("cells with a field vector:", int(np.count_nonzero(np.hypot(*fields[2 * k:2 * k + 2]))))

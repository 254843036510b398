"""
From labels back to a pose
==========================

Peaks are pulled out of the belief maps, grouped into an instance with the
vector fields, mapped back to image pixels and handed to EPnP, which is then
polished by minimising the reprojection error.
"""
import numpy as np

from cuboidpose import CameraIntrinsics, CuboidModel, LabelGenConfig, Pose, detect
from cuboidpose.geometry import project_keypoints, rotation_error, translation_error
from cuboidpose.labelgen import image_to_map, render_labels
from cuboidpose.metrics import add_metric, cuboid_surface_points
from cuboidpose.pnp import Correspondences, solve_pnp

K = CameraIntrinsics(600.0, 600.0, 320.0, 240.0, 640, 480)
box = CuboidModel("cracker_box", [0.16, 0.213, 0.06])
truth = Pose.from_axis_angle([0.4, -0.3, 0.2], [0.02, -0.01, 0.8])

cfg = LabelGenConfig()
kp = image_to_map(project_keypoints(box, truth, K), cfg)
maps, fields = render_labels(kp[None], cfg, cfg.map_dims(K.width, K.height))

(inst,) = detect(maps, fields)
idx, uv = inst.image_keypoints(cfg)
print(f"one instance with {inst.vertex_count} corners, keypoint indices {idx.tolist()}")
print("largest keypoint error in pixels:", np.abs(uv - project_keypoints(box, truth, K)[idx]).max().round(4))

sol = solve_pnp(Correspondences(box.keypoints[idx], uv), K)
print("method:", sol.method_tag, " reprojection rmse (px):", round(sol.reprojection_rmse, 5))
print(f"rotation error {np.degrees(rotation_error(sol.pose, truth)):.4f} deg, "
      f"translation error {1e3 * translation_error(sol.pose, truth):.3f} mm")

pts = cuboid_surface_points(box, 500)
print(f"ADD: {1e3 * add_metric(truth, sol.pose, pts):.3f} mm")

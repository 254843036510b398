"""Keypoint-based 6-DoF pose recovery for cuboid-bounded objects.

Ground-truth belief-map and vector-field rendering, peak extraction, greedy
vertex-to-centroid association, EPnP, ADD/AUC evaluation and a synthetic
scene sampler that exercises the whole chain.
"""
from .detection import (DetectedInstance, DetectionConfig, Peak, associate_instances, detect, extract_all_peaks,
                        extract_peaks, sample_field)
from .geometry import (BehindCameraError, CameraIntrinsics, CuboidModel, Pose, cuboid_keypoints, project_keypoints,
                       project_point)
from .labelgen import (LabelGenConfig, image_to_map, map_to_image, render_belief_maps, render_labels,
                       render_vector_fields)
from .metrics import EvaluationCurve, accuracy_at, accuracy_curve, add_metric, l2_label_loss
from .pnp import Correspondences, PnpSolution, refine_gauss_newton, reprojection_rmse, solve_epnp, solve_pnp
from .scenegen import CameraSamplerConfig, SceneSample, corrupt_labels, generate_labeled_frame, sample_camera, sample_scene

__version__ = "0.1.0"

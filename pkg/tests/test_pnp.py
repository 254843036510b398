import numpy as np
import pytest
from hypothesis import given, strategies as st

from cuboidpose.geometry import CameraIntrinsics, CuboidModel, Pose, project_points, rotation_error, translation_error
from cuboidpose.pnp import (Correspondences, DegenerateConfigurationError, InsufficientPointsError,
                            NoValidPoseError, PnPError, PnpSolution, refine_gauss_newton, reprojection_rmse,
                            solve_epnp, solve_pnp)

from _oracles import residual_rmse

K = CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)
CUBE = CuboidModel("cube", [1.0, 1.0, 1.0])


def _corr(X, pose, K=K, noise=0.0, rng=None):
    uv = project_points(pose.apply(X), K)
    if noise:
        uv = uv + rng.normal(0, noise, uv.shape)
    return Correspondences(X, uv)


def _proper(R):
    return np.allclose(R.T @ R, np.eye(3), atol=1e-9) and abs(np.linalg.det(R) - 1) < 1e-9


def test_cube_with_tilted_pose():
    axis = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
    truth = Pose.from_axis_angle(np.radians(20) * axis, [0.1, -0.05, 1.2])
    # a 1 m cube 1.2 m away has its near face at 0.7 m, still in front
    c = _corr(CUBE.keypoints, truth)
    sol = solve_epnp(c, K)
    assert rotation_error(sol.pose, truth) < 1e-3
    assert translation_error(sol.pose, truth) < 1e-4
    assert sol.reprojection_rmse < 1e-3
    assert _proper(sol.pose.matrix)


def test_identity_rotation_cube():
    truth = Pose(translation=[0, 0, 2])
    sol = solve_epnp(_corr(CUBE.keypoints, truth), K)
    assert translation_error(sol.pose, truth) < 1e-4
    assert rotation_error(sol.pose, truth) < 1e-4


def test_three_points_insufficient():
    with pytest.raises(InsufficientPointsError, match="insufficient points"):
        Correspondences(CUBE.keypoints[:3], np.zeros((3, 2)))


def test_mismatched_and_nonfinite_correspondences():
    with pytest.raises(ValueError):
        Correspondences(CUBE.keypoints[:5], np.zeros((4, 2)))
    uv = np.zeros((5, 2))
    uv[2, 0] = np.nan
    with pytest.raises(ValueError):
        Correspondences(CUBE.keypoints[:5], uv)


def test_collinear_points_are_degenerate():
    X = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], float)
    with pytest.raises(DegenerateConfigurationError, match="degenerate configuration"):
        solve_epnp(Correspondences(X, np.random.default_rng(0).random((4, 2)) * 100), K)


def test_coincident_points_are_degenerate():
    with pytest.raises(DegenerateConfigurationError):
        solve_epnp(Correspondences(np.ones((5, 3)), np.zeros((5, 2)) + 100), K)


def test_inconsistent_correspondences_can_have_no_valid_pose():
    rng = np.random.default_rng(0)
    outcomes = []
    for _ in range(60):
        c = Correspondences(rng.normal(size=(6, 3)), rng.uniform([0, 0], [640, 480], size=(6, 2)))
        try:
            sol = solve_epnp(c, K)
        except NoValidPoseError as e:
            assert "no valid pose" in str(e)
            outcomes.append("none")
        else:
            assert np.all(sol.pose.apply(c.object_points)[:, 2] > 0)  # cheirality
            outcomes.append("ok")
    assert "none" in outcomes and "ok" in outcomes


def test_planar_minimum_configuration():
    truth = Pose.from_axis_angle([0.3, 0.2, -0.1], [0.05, 0.02, 3.0])
    c = _corr(CUBE.keypoints[[0, 1, 2, 3]], truth)  # one face
    sol = solve_epnp(c, K)
    assert "planar" in sol.method_tag
    assert rotation_error(sol.pose, truth) < 1e-3 and translation_error(sol.pose, truth) < 1e-4


def _random_case(rng, planar):
    truth = Pose(rng.normal(size=4), [rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(2.0, 4.0)])
    n = int(rng.integers(4, 10))
    X = rng.uniform(-0.5, 0.5, size=(n, 3))
    if planar:
        X[:, 2] = 0.0
    return truth, X


@given(st.integers(0, 2 ** 32 - 1), st.booleans())
def test_noise_free_recovery_random_points(seed, planar):
    truth, X = _random_case(np.random.default_rng(seed), planar)
    sol = solve_pnp(_corr(X, truth), K)
    assert _proper(sol.pose.matrix)
    assert rotation_error(sol.pose, truth) < 1e-3
    assert translation_error(sol.pose, truth) < 1e-4


def test_recovery_is_independent_of_intrinsics():
    rng = np.random.default_rng(8)
    K2 = CameraIntrinsics(800.0, 780.0, 300.0, 250.0, 640, 480)
    for _ in range(20):
        truth, X = _random_case(rng, planar=False)
        a = solve_pnp(_corr(X, truth, K, 0.3, rng), K).pose
        b = solve_pnp(_corr(X, truth, K2, 0.3, rng), K2).pose
        assert translation_error(a, b) < 0.05 and rotation_error(a, b) < 0.05


# -- reprojection error -------------------------------------------------------------------

def test_rmse_zero_for_exact():
    truth = Pose.from_axis_angle([0.1, 0.2, 0.3], [0, 0, 3])
    assert reprojection_rmse(truth, _corr(CUBE.keypoints, truth), K) < 1e-12


def test_rmse_of_one_pixel_shift():
    truth = Pose(translation=[0, 0, 3])
    c = _corr(CUBE.keypoints, truth)
    shifted = Correspondences(c.object_points, c.image_points + [1.0, 0.0])
    assert reprojection_rmse(truth, shifted, K) == pytest.approx(1.0, abs=1e-12)


@given(st.integers(0, 2 ** 32 - 1))
def test_rmse_matches_explicit_summation(seed):
    rng = np.random.default_rng(seed)
    truth, X = _random_case(rng, planar=False)
    c = _corr(X, truth, noise=2.0, rng=rng)
    pose = Pose(truth.rotation + rng.normal(0, 0.01, 4), truth.translation + rng.normal(0, 0.01, 3))
    ref = residual_rmse(pose.matrix.tolist(), pose.translation.tolist(), X.tolist(), c.image_points.tolist(),
                        K.fx, K.fy, K.cx, K.cy)
    assert reprojection_rmse(pose, c, K) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_rmse_rejects_points_behind():
    c = _corr(CUBE.keypoints, Pose(translation=[0, 0, 3]))
    with pytest.raises(PnPError):
        reprojection_rmse(Pose(translation=[0, 0, 0.2]), c, K)


# -- refinement ---------------------------------------------------------------------------

def test_refine_keeps_exact_pose():
    truth = Pose.from_axis_angle([0.2, -0.1, 0.4], [0.1, 0.0, 2.5])
    c = _corr(CUBE.keypoints, truth)
    init = PnpSolution(truth, reprojection_rmse(truth, c, K), "given")
    out = refine_gauss_newton(init, c, K)
    assert rotation_error(out.pose, truth) < 1e-12 and translation_error(out.pose, truth) < 1e-12
    assert out.reprojection_rmse <= init.reprojection_rmse
    assert out.converged


def test_refine_converges_from_perturbation():
    rng = np.random.default_rng(4)
    for _ in range(20):
        truth, X = _random_case(rng, planar=False)
        c = _corr(X, truth)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        d = rng.normal(size=3)
        start = Pose.from_axis_angle(np.radians(5) * axis) @ truth
        start = Pose(start.rotation, start.translation + 0.02 * d / np.linalg.norm(d))
        init = PnpSolution(start, reprojection_rmse(start, c, K), "perturbed")
        out = refine_gauss_newton(init, c, K, max_iters=20)
        assert out.reprojection_rmse < 1e-3
        assert _proper(out.pose.matrix)


@given(st.integers(0, 2 ** 32 - 1))
def test_refine_never_increases_rmse_under_noise(seed):
    rng = np.random.default_rng(seed)
    truth, X = _random_case(rng, planar=bool(seed % 2))
    c = _corr(X, truth, noise=0.5, rng=rng)
    init = solve_epnp(c, K)
    out = refine_gauss_newton(init, c, K)
    assert out.reprojection_rmse <= init.reprojection_rmse
    assert out.reprojection_rmse == pytest.approx(reprojection_rmse(out.pose, c, K), rel=1e-9)


def test_refine_with_large_damping_still_monotone():
    rng = np.random.default_rng(11)
    truth, X = _random_case(rng, planar=False)
    c = _corr(X, truth, noise=1.0, rng=rng)
    init = solve_epnp(c, K)
    out = refine_gauss_newton(init, c, K, max_iters=3, damping=1e6)
    assert out.reprojection_rmse <= init.reprojection_rmse

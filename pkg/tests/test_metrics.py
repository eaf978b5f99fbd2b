from __future__ import annotations

import numpy as np
import pytest

from helpers import (
    naive_bone_error,
    naive_bone_std,
    naive_mpjpe,
    naive_symmetry,
    random_rotation,
)
from vipose import metrics
from vipose.geometry import rotation_xyz
from vipose.synthetic import generate_synthetic, rest_pose, stack_samples


@pytest.fixture()
def random_sets(topo):
    rng = np.random.default_rng(42)
    gts = rng.normal(scale=200, size=(25, topo.joint_count, 3))
    preds = gts + rng.normal(scale=30, size=gts.shape)
    return preds, gts


class TestMpjpe:
    def test_identical_sets(self, topo):
        poses = np.zeros((3, topo.joint_count, 3))
        assert metrics.mpjpe(poses, poses) == 0.0

    def test_three_four_five_offset(self, topo):
        gts = np.random.default_rng(0).normal(size=(4, topo.joint_count, 3))
        preds = gts + np.array([3.0, 0.0, 4.0])
        assert metrics.mpjpe(preds, gts) == pytest.approx(5.0, abs=1e-12)

    def test_matches_naive_oracle(self, random_sets):
        preds, gts = random_sets
        assert metrics.mpjpe(preds, gts) == pytest.approx(
            naive_mpjpe(preds, gts), abs=1e-12)

    def test_empty_set_rejected(self, topo):
        with pytest.raises(ValueError, match="empty"):
            metrics.mpjpe(np.zeros((0, 17, 3)), np.zeros((0, 17, 3)))

    def test_shape_mismatch(self, topo):
        with pytest.raises(ValueError, match="mismatch"):
            metrics.mpjpe(np.zeros((2, 17, 3)), np.zeros((3, 17, 3)))


class TestPaMpjpe:
    def test_rigidly_moved_ground_truth(self, topo):
        _, gts, _ = stack_samples(generate_synthetic(3, 10, np.pi, 0.0))
        rng = np.random.default_rng(1)
        preds = np.stack([g @ random_rotation(rng).T + rng.normal(scale=40, size=3)
                          for g in gts])
        assert metrics.pa_mpjpe(preds, gts) < 1e-6

    def test_not_above_mpjpe_on_random_sets(self, topo):
        rng = np.random.default_rng(2)
        for _ in range(20):
            gts = rng.normal(scale=150, size=(50, topo.joint_count, 3))
            preds = gts + rng.normal(scale=25, size=gts.shape)
            assert metrics.pa_mpjpe(preds, gts) <= metrics.mpjpe(preds, gts) + 1e-9

    def test_invariant_to_rigid_motion_of_predictions(self, random_sets):
        preds, gts = random_sets
        base = metrics.pa_mpjpe(preds, gts)
        rng = np.random.default_rng(3)
        rot = random_rotation(rng)
        moved = preds @ rot.T + rng.normal(scale=100, size=3)
        assert metrics.pa_mpjpe(moved, gts) == pytest.approx(base, rel=1e-9)


class TestBoneMetrics:
    def test_identical_sets_zero(self, topo, random_sets):
        _, gts = random_sets
        assert metrics.bone_error(gts, gts, topo).max() == 0.0

    def test_translation_invariance(self, topo, random_sets):
        preds, gts = random_sets
        shifted = preds + np.array([100.0, -50.0, 25.0])
        np.testing.assert_allclose(metrics.bone_error(shifted, gts, topo),
                                   metrics.bone_error(preds, gts, topo), atol=1e-9)
        # mpjpe, by contrast, must move
        assert abs(metrics.mpjpe(shifted, gts) - metrics.mpjpe(preds, gts)) > 1.0

    def test_matches_naive_oracle(self, topo, random_sets):
        preds, gts = random_sets
        np.testing.assert_allclose(metrics.bone_error(preds, gts, topo),
                                   naive_bone_error(preds, gts, topo.bones),
                                   atol=1e-12)

    def test_bone_std_rigid_sequence_is_zero(self, topo):
        pose = rest_pose(topo)
        rng = np.random.default_rng(4)
        frames = np.stack([pose @ random_rotation(rng).T + rng.normal(scale=30, size=3)
                           for _ in range(40)])
        assert metrics.bone_std(frames, topo).max() < 1e-9

    def test_bone_std_two_lengths(self, topo):
        # two frames whose first bone has lengths 10 and 14: population std 2
        child, parent = topo.bones[0]
        frames = np.zeros((2, topo.joint_count, 3))
        frames[0, child, 0] = 10.0
        frames[1, child, 0] = 14.0
        assert metrics.bone_std(frames, topo)[0] == pytest.approx(2.0, abs=1e-12)

    def test_bone_std_matches_naive_oracle(self, topo, random_sets):
        preds, _ = random_sets
        np.testing.assert_allclose(metrics.bone_std(preds, topo),
                                   naive_bone_std(preds, topo.bones), atol=1e-12)

    def test_bone_std_needs_two_samples(self, topo):
        with pytest.raises(ValueError, match="2 samples"):
            metrics.bone_std(np.zeros((1, topo.joint_count, 3)), topo)


class TestSymmetry:
    def test_mirror_symmetric_pose(self, topo):
        pose = rest_pose(topo)[None]
        assert metrics.symmetry(pose, topo).max() < 1e-9

    def test_uneven_upper_arms(self, topo):
        pose = rest_pose(topo).copy()
        shoulder, elbow = topo.part("left_arm").axis_pair
        direction = pose[elbow] - pose[shoulder]
        length = np.linalg.norm(direction)
        pose[elbow] = pose[shoulder] + direction * (length - 4.0) / length
        values = metrics.symmetry(pose[None], topo)
        assert values[0] == pytest.approx(4.0, abs=1e-9)  # U.Arm pair

    def test_matches_naive_oracle(self, topo, random_sets):
        preds, _ = random_sets
        np.testing.assert_allclose(metrics.symmetry(preds, topo),
                                   naive_symmetry(preds, topo.limb_pairs), atol=1e-12)


class TestEvaluate:
    def test_report_fields_and_invariant(self, topo, random_sets):
        preds, gts = random_sets
        report = metrics.evaluate(preds, gts, topo)
        assert report.sample_count == len(preds)
        assert report.pa_mpjpe <= report.mpjpe + 1e-9
        assert report.per_joint_error.shape == (topo.joint_count,)
        assert (report.per_joint_error >= 0).all()
        assert report.bone_error.shape == (len(topo.bones),)
        assert report.symmetry.shape == (len(topo.limb_pairs),)

    def test_root_centering_flag(self, topo, random_sets):
        preds, gts = random_sets
        shifted = preds + np.array([500.0, 0.0, 0.0])
        centered = metrics.evaluate(shifted, gts, topo, root_relative=True)
        raw = metrics.evaluate(shifted, gts, topo, root_relative=False)
        base = metrics.evaluate(preds, gts, topo, root_relative=True)
        assert centered.mpjpe == pytest.approx(base.mpjpe, abs=1e-9)
        assert raw.mpjpe > centered.mpjpe

    def test_oracle_predictions_all_zero(self, topo, random_sets):
        _, gts = random_sets
        report = metrics.evaluate(gts, gts, topo)
        assert report.mpjpe == 0.0
        assert report.pa_mpjpe < 1e-9
        assert report.bone_error_mean == 0.0

    def test_table_rendering(self, topo, random_sets):
        preds, gts = random_sets
        report = metrics.evaluate(preds, gts, topo)
        text = metrics.report_table(report, topo)
        assert "MPJPE" in text and "Symmetry" in text
        assert "U.Arm" in text and "left_wrist" in text


class TestSplitsAndProtocol:
    def test_random_split_disjoint(self, topo):
        spec = metrics.SplitSpec(mode="random", train_fraction=0.75, seed=3)
        train, test = spec.split([None] * 100, 100)
        assert len(train) == 75 and len(test) == 25
        assert np.intersect1d(train, test).size == 0

    def test_view_split_by_yaw_bucket(self, topo):
        _, _, scenes = stack_samples(generate_synthetic(7, 200, np.pi, 0.0))
        spec = metrics.SplitSpec(mode="view", n_buckets=4, test_bucket=2)
        train, test = spec.split(scenes, 200)
        assert len(train) + len(test) == 200
        buckets = np.array([metrics.view_bucket(s, 4) for s in scenes])
        assert (buckets[test] == 2).all()
        assert (buckets[train] != 2).all()

    def test_overlapping_view_split_rejected(self, topo):
        _, _, scenes = stack_samples(generate_synthetic(7, 50, np.pi, 0.0))
        spec = metrics.SplitSpec(mode="view", n_buckets=4, test_bucket=1,
                                 train_buckets=(0, 1, 2))
        with pytest.raises(ValueError, match="overlapping"):
            spec.split(scenes, 50)

    def test_protocol_with_oracle_model(self, topo):
        dataset = stack_samples(generate_synthetic(5, 80, np.pi, 0.0))
        spec = metrics.SplitSpec(mode="view", n_buckets=4, test_bucket=0)
        _, test_idx = spec.split(dataset[2], 80)

        class Oracle:
            def __init__(self, answers):
                self.answers = answers

            def predict(self, poses2d):
                assert len(poses2d) == len(self.answers)
                return self.answers

        report, train_idx, test_idx2 = metrics.run_protocol(
            dataset, spec, Oracle(dataset[1][test_idx]), topo)
        np.testing.assert_array_equal(test_idx, test_idx2)
        assert report.mpjpe == 0.0

    def test_yaw_bucket_ranges(self):
        class FakeScene:
            def __init__(self, yaw):
                from vipose.geometry import RigidTransform
                self.view_rotation = RigidTransform(rotation=rotation_xyz(0, 0, yaw),
                                                    translation=np.zeros(3))

        assert metrics.view_bucket(FakeScene(-np.pi + 0.01), 4) == 0
        assert metrics.view_bucket(FakeScene(-0.01), 4) == 1
        assert metrics.view_bucket(FakeScene(0.01), 4) == 2
        assert metrics.view_bucket(FakeScene(np.pi - 0.01), 4) == 3

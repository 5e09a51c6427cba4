import math

import numpy as np
import pytest
from scipy import stats

from evimpact.errors import ConfigError, DegenerateSceneError
from evimpact.losses import BALL, BAT
from evimpact.scene import (DegradeConfig, SceneConfig, ball_trajectory, compute_gt_impact,
                            contact_scene, degrade_coarse, impact_frame_index, label_map, load_clip,
                            occupancy, random_scene, save_clip, simulate_clip)


def small_scene(**kw):
    base = dict(width=200, height=120, ball_speed=2.0, ball_start=(60.0, 53.0),
                ball_direction=(1.0, 0.0), bat_pivot=(100.0, 60.0), bat_length=0.0,
                bat_angle0=0.0, bat_omega=0.0, noise_rate=0.0, clip_duration=40_000)
    base.update(kw)
    return SceneConfig(**base)


class TestConfig:
    def test_defaults(self):
        c = SceneConfig()
        assert (c.width, c.height, c.ball_radius, c.ball_speed) == (346, 260, 4.0, 2.5)
        assert (c.bat_half_width, c.noise_rate, c.micro_step) == (3.0, 0.1, 10)

    @pytest.mark.parametrize("field, value", [("ball_radius", 0.5), ("micro_step", 0),
                                              ("restitution", 0.0), ("restitution", 1.5),
                                              ("noise_rate", -1)])
    def test_invalid(self, field, value):
        with pytest.raises(ConfigError) as err:
            SceneConfig(**{field: value})
        assert err.value.field == field

    def test_dict_roundtrip(self):
        c = random_scene(3)
        assert SceneConfig.from_dict(c.to_dict()) == c

    def test_unknown_field(self):
        with pytest.raises(ConfigError):
            SceneConfig.from_dict({"colour": 1})

    def test_degrade_validation(self):
        with pytest.raises(ConfigError):
            DegradeConfig(dropout_prob=1.2)
        with pytest.raises(ConfigError):
            DegradeConfig(morph_range=(0, 40)).check_radii(128, 128)


class TestGroundTruthImpact:
    def test_tangent_closest_approach(self):
        # The bat collapses to a disk of radius 3 at the pivot, and the ball
        # travels horizontally so that its center passes exactly 7 px from it
        # at t = 20 ms.  The clearance is |(v(t - 20), 7)| - 7, minimal at 20 ms.
        t = compute_gt_impact(small_scene())
        assert t == pytest.approx(20_000, abs=1.0)

    def test_passes_far_away(self):
        cfg = small_scene(ball_start=(60.0, 43.0), bat_length=20.0)
        clr = [math.hypot(60 + 2 * t - 100, 43 - 60) - 7 for t in np.linspace(0, 40, 400)]
        assert min(clr) >= 10
        assert compute_gt_impact(cfg) is None

    def test_stationary_touching_is_earliest(self):
        cfg = small_scene(ball_speed=0.0, ball_start=(100.0, 53.0), bat_length=20.0)
        assert compute_gt_impact(cfg) == 0.0

    def test_contact_scene_hits_requested_time(self):
        for tc in (2500.0, 4000.0, 5300.0):
            assert compute_gt_impact(contact_scene(t_contact_us=tc)) == pytest.approx(tc, abs=1.0)

    def test_impact_in_clip(self):
        for seed in range(10):
            cfg = random_scene(seed)
            t = compute_gt_impact(cfg)
            assert t is not None and 0 <= t <= cfg.clip_duration


class TestTrajectory:
    def test_bounce_restitution(self):
        cfg = contact_scene(bat_omega=0.0, approach_offset=0.0, restitution=0.5, ball_speed=3.0)
        traj = ball_trajectory(cfg)
        tc = traj.t_contact
        before = np.subtract(traj.center(tc), traj.center(tc - 100)) / 0.1
        after = np.subtract(traj.center(tc + 100), traj.center(tc)) / 0.1
        # head-on against a static bat: the normal velocity flips and halves
        assert np.hypot(*before) == pytest.approx(3.0, rel=1e-6)
        assert np.hypot(*after) == pytest.approx(1.5, rel=1e-6)
        assert np.dot(before, after) < 0

    def test_gt_ball_centroid_tracks_analytic_center(self):
        for seed in range(5):
            cfg = random_scene(seed, noise_rate=0.0)
            traj = ball_trajectory(cfg)
            v = np.asarray(cfg.ball_direction) / np.hypot(*cfg.ball_direction) * cfg.ball_speed
            for t in range(100, int(traj.t_contact) - 500, 300):
                lab = label_map(cfg, float(t), traj)
                yy, xx = np.nonzero(lab == BALL)
                ax, ay = np.asarray(cfg.ball_start) + v * t / 1000
                assert math.hypot(xx.mean() - ax, yy.mean() - ay) <= 1.0


class TestSimulate:
    def test_static_scene_no_events(self):
        cfg = small_scene(ball_speed=0.0, clip_duration=3000)
        assert len(simulate_clip(cfg).stream) == 0

    def test_deterministic(self):
        cfg = random_scene(11)
        a, b = simulate_clip(cfg), simulate_clip(cfg)
        assert a == b
        assert a.stream.t.tobytes() == b.stream.t.tobytes()

    def test_seed_changes_events(self):
        cfg = random_scene(11)
        a = simulate_clip(cfg)
        b = simulate_clip(SceneConfig.from_dict({**cfg.to_dict(), "seed": 12}))
        assert a.stream != b.stream

    def test_conservation_without_noise(self):
        cfg = random_scene(2, noise_rate=0.0)
        bundle = simulate_clip(cfg)
        traj = ball_trajectory(cfg)
        H, W = cfg.height, cfg.width
        on = np.zeros(H * W, dtype=np.int64)
        off = np.zeros(H * W, dtype=np.int64)
        prev = label_map(cfg, 0.0, traj).ravel() > 0
        for j in range(1, cfg.clip_duration // cfg.micro_step + 1):
            cur = label_map(cfg, float(j * cfg.micro_step), traj).ravel() > 0
            on += cur & ~prev
            off += prev & ~cur
            prev = cur
        s = bundle.stream
        flat = s.y.astype(np.int64) * W + s.x
        assert np.array_equal(np.bincount(flat[s.p > 0], minlength=H * W), on)
        assert np.array_equal(np.bincount(flat[s.p < 0], minlength=H * W), off)

    def test_event_timestamps_inside_their_step(self):
        cfg = random_scene(4, noise_rate=0.0)
        s = simulate_clip(cfg).stream
        assert s.t.min() >= 0 and s.t.max() < cfg.clip_duration

    def test_polarity_balance_default_scene(self):
        cfg = SceneConfig()
        bundle = simulate_clip(cfg)
        s = bundle.stream
        pos, neg = int((s.p > 0).sum()), int((s.p < 0).sum())
        covered_end = len(occupancy(cfg, float(cfg.clip_duration)))
        clean = simulate_clip(SceneConfig(noise_rate=0.0)).stream
        # transitions do not depend on the RNG, so the difference is pure noise
        noise = len(s) - len(clean)
        assert noise > 0
        assert abs(pos - neg) <= covered_end + noise
        # without noise the imbalance is exactly the net change in coverage
        covered_start = len(occupancy(cfg, 0.0))
        assert int((clean.p > 0).sum() - (clean.p < 0).sum()) == covered_end - covered_start
        assert bundle.gt_impact_us == pytest.approx(20_000, abs=200)

    def test_gt_masks_on_frame_grid(self):
        cfg = random_scene(5)
        b = simulate_clip(cfg, dt=100)
        assert b.gt_masks.shape == (80, 128, 128)
        traj = ball_trajectory(cfg)
        assert np.array_equal(b.gt_masks[9], label_map(cfg, 1000.0, traj))
        assert set(np.unique(b.gt_masks)) <= {0, BAT, BALL}

    def test_degenerate(self):
        with pytest.raises(DegenerateSceneError, match="degenerate scene"):
            simulate_clip(small_scene(ball_start=(-500.0, -500.0), bat_pivot=(-900.0, -900.0)))

    def test_save_load_roundtrip(self, tmp_path):
        b = simulate_clip(random_scene(8))
        save_clip(b, tmp_path / "c")
        assert load_clip(tmp_path / "c") == b


@pytest.fixture(scope="module")
def bundle():
    return simulate_clip(random_scene(1))


class TestDegrade:
    def test_identity(self, bundle):
        out = degrade_coarse(bundle.gt_masks, DegradeConfig.identity(), "fwd",
                             impact_index=impact_frame_index(bundle.gt_impact_us, 100, 80))
        assert np.array_equal(out[:, 0], (bundle.gt_masks == BALL).astype(np.float32))
        assert np.array_equal(out[:, 1], (bundle.gt_masks == BAT).astype(np.float32))

    def test_full_dropout(self, bundle):
        out = degrade_coarse(bundle.gt_masks, DegradeConfig(dropout_prob=1.0), "bwd")
        assert not out.any()

    def test_range_and_shape(self, bundle):
        out = degrade_coarse(bundle.gt_masks, DegradeConfig(seed=3), "fwd", impact_index=40)
        assert out.shape == (80, 2, 128, 128) and out.dtype == np.float32
        assert out.min() >= 0 and out.max() <= 1

    def test_dropout_fraction(self):
        masks = np.zeros((100, 32, 32), dtype=np.uint8)
        masks[:, 10:16, 10:16] = BALL
        masks[:, 20:30, 2:28] = BAT
        out = degrade_coarse(masks, DegradeConfig(seed=7, jitter_sigma=0.0, morph_range=(0, 1)), "fwd")
        frac = float((out[:, 0].sum(axis=(1, 2)) == 0).mean())
        # P(X < 2) + P(X > 25) for X ~ Bin(100, 0.1) is far below 1e-3
        assert stats.binom.cdf(1, 100, 0.1) + stats.binom.sf(25, 100, 0.1) < 1e-3
        assert 0.02 <= frac <= 0.25

    def test_directions_independent(self, bundle):
        d = DegradeConfig(seed=9)
        fwd = degrade_coarse(bundle.gt_masks, d, "fwd")
        bwd = degrade_coarse(bundle.gt_masks, d, "bwd")
        assert not np.array_equal(fwd, bwd)
        assert np.array_equal(fwd, degrade_coarse(bundle.gt_masks, d, "fwd"))

    def test_merge_window_dilates(self):
        masks = np.zeros((20, 40, 40), dtype=np.uint8)
        masks[:, 15:20, 15:20] = BALL
        d = DegradeConfig(jitter_sigma=0, dropout_prob=0, morph_range=(0,), blur_radius=0,
                          merge_window=2, merge_dilate=2)
        out = degrade_coarse(masks, d, "fwd", impact_index=10)
        area = out[:, 0].sum(axis=(1, 2))
        assert (area[8:13] > 25).all()
        assert (area[:8] == 25).all() and (area[13:] == 25).all()

    def test_bad_direction(self, bundle):
        with pytest.raises(ValueError):
            degrade_coarse(bundle.gt_masks, DegradeConfig(), "sideways")

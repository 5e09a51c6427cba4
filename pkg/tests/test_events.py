import numpy as np
import pytest
from hypothesis import given, strategies as st

from evimpact.errors import BoundsError, EvImpactError, ParseError
from evimpact.events import (AccumConfig, EventStream, accumulate, read_events_csv, window_counts,
                             write_events_csv)

from oracles import brute_force_counts, brute_force_frames, random_stream_arrays


def write_csv(path, rows, header="t_us,x,y,p"):
    path.write_text(header + "\n" + "".join(",".join(map(str, r)) + "\n" for r in rows))
    return path


class TestReadCsv:
    def test_sorted_and_polarity_decoded(self, tmp_path):
        s = read_events_csv(write_csv(tmp_path / "e.csv", [(50, 10, 20, 1), (30, 5, 5, 0)]), 32, 32)
        assert len(s) == 2
        assert list(s) == [(30, 5, 5, -1), (50, 10, 20, 1)]
        assert s.duration == 50

    def test_header_only(self, tmp_path):
        s = read_events_csv(write_csv(tmp_path / "e.csv", []), 8, 8)
        assert len(s) == 0 and s.duration == 0

    def test_x_equal_width_names_line(self, tmp_path):
        path = write_csv(tmp_path / "e.csv", [(1, 0, 0, 1), (2, 8, 0, 1)])
        with pytest.raises(BoundsError, match="line 3") as err:
            read_events_csv(path, 8, 8)
        assert err.value.line == 3

    @pytest.mark.parametrize("row, line", [("1,2,3", 2), ("1,2,x,1", 2), ("1,2,3,2", 2)])
    def test_malformed_rows(self, tmp_path, row, line):
        path = tmp_path / "e.csv"
        path.write_text(f"t_us,x,y,p\n{row}\n")
        with pytest.raises(ParseError) as err:
            read_events_csv(path, 8, 8)
        assert err.value.line == line

    def test_bad_header(self, tmp_path):
        with pytest.raises(ParseError):
            read_events_csv(write_csv(tmp_path / "e.csv", [], header="t,x,y,p"), 8, 8)

    def test_stable_for_equal_timestamps(self, tmp_path):
        rows = [(10, 1, 0, 1), (10, 2, 0, 0), (5, 3, 0, 1), (10, 4, 0, 1)]
        s = read_events_csv(write_csv(tmp_path / "e.csv", rows), 8, 8)
        assert s.x.tolist() == [3, 1, 2, 4]

    def test_write_read_roundtrip(self, tmp_path, rng):
        t, x, y, p = random_stream_arrays(rng, 500, 20, 10, 3000)
        s = EventStream(20, 10, t, x, y, p)
        write_events_csv(s, tmp_path / "e.csv")
        assert read_events_csv(tmp_path / "e.csv", 20, 10) == s


def test_stream_is_immutable():
    s = EventStream(4, 4, [1], [1], [1], [1])
    with pytest.raises(ValueError):
        s.t[0] = 5


class TestAccumulate:
    def test_single_event_window(self):
        s = EventStream(16, 8, [50], [7], [3], [1], duration=2000)
        fs = accumulate(s, AccumConfig(dt=100, window_frames=10, saturation=1))
        # oracle: frames with t_k - 1000 <= 50 < t_k
        expected = np.array([(k * 100 - 1000 <= 50 < k * 100) for k in range(1, 21)], dtype=np.float32)
        assert np.array_equal(fs.values[:, 3, 7], expected)
        assert expected[:10].all() and not expected[10:].any()
        rest = fs.values.copy()
        rest[:, 3, 7] = 0
        assert not rest.any()

    def test_negative_events_dropped(self, rng):
        t, x, y, _ = random_stream_arrays(rng, 300, 10, 10, 2000)
        s = EventStream(10, 10, t, x, y, -np.ones_like(t))
        assert not accumulate(s, AccumConfig()).values.any()

    def test_saturation_clip(self):
        s = EventStream(4, 4, [10] * 5, [1] * 5, [2] * 5, [1] * 5, duration=500)
        fs = accumulate(s, AccumConfig(dt=100, window_frames=10, saturation=3))
        assert fs.values[0, 2, 1] == 1.0

    def test_partial_saturation(self):
        s = EventStream(4, 4, [10, 20], [1, 1], [2, 2], [1, 1], duration=100)
        fs = accumulate(s, AccumConfig(dt=100, window_frames=1, saturation=3))
        assert fs.values[0, 2, 1] == np.float32(2 / 3)

    def test_too_short(self):
        s = EventStream(4, 4, [10], [1], [1], [1], duration=99)
        with pytest.raises(EvImpactError, match="clip shorter than one frame"):
            accumulate(s, AccumConfig(dt=100))

    def test_frame_count_and_times(self):
        s = EventStream(4, 4, [], [], [], [], duration=1050)
        fs = accumulate(s, AccumConfig(dt=100))
        assert fs.k_count == 10
        assert fs.times()[0] == 100 and fs.times()[-1] == 1000

    def test_event_at_last_boundary_excluded(self):
        # t = K*dt belongs to frame K+1, which does not exist
        s = EventStream(4, 4, [1000], [0], [0], [1], duration=1000)
        assert not accumulate(s, AccumConfig(dt=100, window_frames=3)).values.any()

    def test_matches_oracle_fixed_grid(self, rng):
        t, x, y, p = random_stream_arrays(rng, 4000, 12, 9, 4321)
        s = EventStream(12, 9, t, x, y, p)
        for dt in (37, 100):
            for wf in (5, 10, 20):
                for sat in (1, 3, 7):
                    fs = accumulate(s, AccumConfig(dt, wf, sat))
                    ref = brute_force_frames(s.t, s.x, s.y, s.p, 12, 9, s.duration, dt, wf, sat)
                    assert fs.values.tobytes() == ref.tobytes()


streams = st.integers(0, 2**32 - 1).flatmap(
    lambda seed: st.tuples(st.just(seed), st.integers(0, 600), st.integers(200, 3000)))


@given(streams, st.integers(10, 150), st.integers(1, 20), st.integers(1, 5))
def test_oracle_equivalence(params, dt, wf, sat):
    seed, n, duration = params
    rng = np.random.default_rng(seed)
    t, x, y, p = random_stream_arrays(rng, n, 7, 5, duration)
    s = EventStream(7, 5, t, x, y, p, duration=duration)
    if duration < dt:
        with pytest.raises(EvImpactError):
            accumulate(s, AccumConfig(dt, wf, sat))
        return
    ref = brute_force_frames(s.t, s.x, s.y, s.p, 7, 5, duration, dt, wf, sat)
    assert accumulate(s, AccumConfig(dt, wf, sat)).values.tobytes() == ref.tobytes()


@given(st.integers(0, 2**32 - 1), st.integers(10, 200))
def test_window_telescoping(seed, dt):
    rng = np.random.default_rng(seed)
    t, x, y, p = random_stream_arrays(rng, 400, 6, 6, 2500)
    s = EventStream(6, 6, t, x, y, p, duration=2500)
    counts = window_counts(s, AccumConfig(dt=dt, window_frames=1))
    K = counts.shape[0]
    keep = (s.p > 0) & (s.t < K * dt)
    direct = np.zeros((6, 6), dtype=np.int64)
    np.add.at(direct, (s.y[keep], s.x[keep]), 1)
    assert np.array_equal(counts.sum(axis=0), direct)


@given(st.integers(0, 2**32 - 1), st.integers(1, 19))
def test_window_monotone(seed, wf):
    rng = np.random.default_rng(seed)
    t, x, y, p = random_stream_arrays(rng, 400, 6, 6, 2500)
    s = EventStream(6, 6, t, x, y, p)
    small = window_counts(s, AccumConfig(dt=50, window_frames=wf))
    big = window_counts(s, AccumConfig(dt=50, window_frames=wf + 1))
    assert (big >= small).all()


@given(st.integers(0, 2**32 - 1), st.integers(1, 8), st.sampled_from([5, 10, 20]))
def test_time_shift_equivariance(seed, m, wf):
    rng = np.random.default_rng(seed)
    dt = 100
    t, x, y, p = random_stream_arrays(rng, 300, 6, 6, 3000)
    s = EventStream(6, 6, t, x, y, p, duration=3000)
    cfg = AccumConfig(dt=dt, window_frames=wf)
    a = window_counts(s, cfg)
    b = window_counts(s.shifted(m * dt), cfg)
    assert np.array_equal(b[m:m + a.shape[0]], a)

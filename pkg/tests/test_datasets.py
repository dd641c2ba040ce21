import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluctsnn.datasets import (
    SpikeBatch,
    SpikePackError,
    bin_events,
    generate_poisson,
    generate_randman,
    load_shd,
    load_spikepack,
    randman_map_times,
    save_spikepack,
    split_batch,
)


class TestRandman:
    def test_shape_and_timing(self):
        batch = generate_randman(classes=10, samples_per_class=5, seed=0)
        assert len(batch) == 50
        assert batch.n_units == 20
        assert batch.duration == 200.0
        assert batch.n_classes == 10
        for units, times in batch.events:
            assert len(units) == 20  # exactly one spike per neuron
            assert sorted(units) == list(range(20))
            assert times.min() >= 0.0 and times.max() < 100.0

    def test_mean_rate_is_5hz(self):
        batch = generate_randman(classes=4, samples_per_class=10, seed=1)
        assert batch.mean_rate() == pytest.approx(5.0, rel=1e-9)

    def test_determinism(self):
        a = generate_randman(classes=3, samples_per_class=4, seed=9)
        b = generate_randman(classes=3, samples_per_class=4, seed=9)
        assert np.array_equal(a.labels, b.labels)
        for (ua, ta), (ub, tb) in zip(a.events, b.events):
            assert np.array_equal(ua, ub) and np.array_equal(ta, tb)

    def test_maps_lipschitz(self):
        # spike time varies smoothly with the intrinsic coordinate; 4
        # harmonics of unit amplitude bound the normalized slope
        x = np.linspace(0.0, 1.0, 2001)[:, None]
        t = randman_map_times(3, 20, 1, 1.0, seed=0, x=x)
        dx = x[1, 0] - x[0, 0]
        slopes = np.abs(np.diff(t, axis=1)) / dx
        assert slopes.max() < 2.0 * np.pi * 4 * 100.0

    def test_classes_use_distinct_maps(self):
        x = np.linspace(0.0, 1.0, 50)[:, None]
        t = randman_map_times(2, 20, 1, 1.0, seed=0, x=x)
        assert np.abs(t[0] - t[1]).max() > 1.0


class TestPoisson:
    def test_count_statistics(self):
        nu, dur = 10.0, 10000.0
        batch = generate_poisson(10000, nu, dur, 2.0, seed=0)
        counts = np.bincount(batch.events[0][0], minlength=10000)
        # binary binning thins the rate: nu_eff = (1 - exp(-nu dt)) / dt
        nu_eff = (1.0 - np.exp(-nu * 0.002)) / 0.002
        expect = nu_eff * dur * 1e-3
        assert counts.mean() == pytest.approx(expect, abs=3 * np.sqrt(expect / 10000))
        assert counts.var() / counts.mean() == pytest.approx(1.0, abs=0.05)

    def test_zero_rate_warning_free_empty(self):
        batch = generate_poisson(10, 1e-12, 100.0, 2.0, seed=0)
        assert all(len(u) == 0 for u, _ in batch.events)

    def test_saturation_warns(self):
        with pytest.warns(UserWarning):
            generate_poisson(5, 600.0, 100.0, 2.0, seed=0)

    def test_determinism(self):
        a = generate_poisson(50, 20.0, 500.0, 2.0, seed=3)
        b = generate_poisson(50, 20.0, 500.0, 2.0, seed=3)
        assert np.array_equal(a.events[0][1], b.events[0][1])


class TestBinning:
    def _batch(self, units, times, n_units=4, duration=10.0):
        return SpikeBatch(
            events=[(np.asarray(units), np.asarray(times, dtype=np.float32))],
            labels=np.zeros(1, dtype=np.int64),
            n_units=n_units,
            duration=duration,
            n_classes=1,
        )

    def test_event_at_zero(self):
        dense = bin_events(self._batch([2], [0.0]), 2.0)
        assert dense.data[0, 0, 2] == 1

    def test_bin_collapse(self):
        dense = bin_events(self._batch([1, 1], [1.0, 1.9]), 2.0)
        assert dense.data.sum() == 1
        assert dense.data[0, 0, 1] == 1

    def test_step_count(self):
        dense = bin_events(self._batch([0], [0.0], duration=9.0), 2.0)
        assert dense.data.shape[1] == 5  # ceil(9/2)

    def test_rebinning_idempotent(self):
        batch = generate_poisson(20, 50.0, 100.0, 2.0, seed=1)
        dense = bin_events(batch, 2.0)
        s, step, unit = np.nonzero(dense.data)
        rebatch = self._batch(unit, step * 2.0, n_units=20, duration=100.0)
        assert np.array_equal(bin_events(rebatch, 2.0).data, dense.data)

    def test_total_ones_bounded_by_events(self):
        batch = generate_poisson(10, 100.0, 1000.0, 2.0, seed=2)
        dense = bin_events(batch, 2.0)
        assert dense.data.sum() <= sum(len(u) for u, _ in batch.events)


@st.composite
def batches(draw):
    n_units = draw(st.integers(1, 30))
    n_samples = draw(st.integers(0, 5))
    duration = draw(st.floats(1.0, 1000.0, allow_nan=False, width=32))
    n_classes = draw(st.integers(1, 5))
    events = []
    labels = []
    for _ in range(n_samples):
        k = draw(st.integers(0, 20))
        units = draw(
            st.lists(st.integers(0, n_units - 1), min_size=k, max_size=k)
        )
        unit_times = draw(
            st.lists(st.floats(0.0, 1.0, allow_nan=False, width=32),
                     min_size=k, max_size=k)
        )
        times = np.asarray(unit_times, dtype=np.float32) * np.float32(0.99 * duration)
        events.append((np.asarray(units, dtype=np.int64), times))
        labels.append(draw(st.integers(0, n_classes - 1)))
    return SpikeBatch(
        events=events,
        labels=np.asarray(labels, dtype=np.int64),
        n_units=n_units,
        duration=float(np.float32(duration)),
        n_classes=n_classes,
    )


class TestSpikePack:
    @settings(max_examples=30, deadline=None)
    @given(batch=batches())
    def test_round_trip_identity(self, batch, tmp_path_factory):
        path = tmp_path_factory.mktemp("spkp") / "b.spkp"
        save_spikepack(path, batch)
        back = load_spikepack(path)
        assert back.n_units == batch.n_units
        assert back.duration == np.float32(batch.duration)
        assert back.n_classes == batch.n_classes
        assert np.array_equal(back.labels, batch.labels)
        for (ua, ta), (ub, tb) in zip(batch.events, back.events):
            assert np.array_equal(ua, ub)
            assert np.array_equal(ta, tb)  # bit-exact f32 times

    def test_empty_batch_header_size(self, tmp_path):
        empty = SpikeBatch(events=[], labels=np.zeros(0, dtype=np.int64),
                           n_units=4, duration=10.0, n_classes=1)
        path = tmp_path / "empty.spkp"
        save_spikepack(path, empty)
        # 4-byte magic + u32 version/samples/units/classes + f32 duration
        assert path.stat().st_size == 24

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.spkp"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(SpikePackError, match="bad magic"):
            load_spikepack(path)

    def test_truncation(self, tmp_path):
        batch = generate_poisson(5, 50.0, 100.0, 2.0, seed=0)
        path = tmp_path / "t.spkp"
        save_spikepack(path, batch)
        blob = path.read_bytes()
        path.write_bytes(blob[:-4])
        with pytest.raises(SpikePackError, match="truncated"):
            load_spikepack(path)

    def test_bad_version(self, tmp_path):
        batch = generate_poisson(2, 10.0, 10.0, 2.0, seed=0)
        path = tmp_path / "v.spkp"
        save_spikepack(path, batch)
        blob = bytearray(path.read_bytes())
        blob[4] = 99
        path.write_bytes(bytes(blob))
        with pytest.raises(SpikePackError, match="version"):
            load_spikepack(path)


class TestShd:
    def test_spikepack_fallback(self, tmp_path):
        batch = generate_poisson(700, 15.8, 700.0, 2.0, seed=0)
        path = tmp_path / "shd.spkp"
        save_spikepack(path, batch)
        back = load_shd(path)
        assert back.n_units == 700

    def test_hdf5_layout(self, tmp_path):
        h5py = pytest.importorskip("h5py")
        path = tmp_path / "shd.h5"
        times = [np.array([0.1, 0.75]), np.array([0.2])]  # seconds
        units = [np.array([3, 5]), np.array([600])]
        with h5py.File(path, "w") as f:
            vt = h5py.vlen_dtype(np.float64)
            vu = h5py.vlen_dtype(np.int64)
            g = f.create_group("spikes")
            dt_ = g.create_dataset("times", (2,), dtype=vt)
            du = g.create_dataset("units", (2,), dtype=vu)
            dt_[0], dt_[1] = times
            du[0], du[1] = units
            f.create_dataset("labels", data=np.array([4, 17]))
        batch = load_shd(path)
        assert batch.n_units == 700 and batch.n_classes == 20
        assert batch.duration == 700.0
        # second event of sample 0 is at 750 ms, past the splice
        assert len(batch.events[0][0]) == 1
        assert batch.events[0][1][0] == pytest.approx(100.0)
        assert all(t.max(initial=0.0) < 700.0 for _, t in batch.events)

    def test_missing_groups(self, tmp_path):
        h5py = pytest.importorskip("h5py")
        path = tmp_path / "bad.h5"
        with h5py.File(path, "w") as f:
            f.create_dataset("labels", data=np.zeros(1))
        with pytest.raises(ValueError, match="missing groups"):
            load_shd(path)


class TestSplit:
    def test_sizes_and_disjointness(self):
        batch = generate_randman(classes=2, samples_per_class=50, seed=0)
        train, valid = split_batch(batch, 0.1, seed=5)
        assert len(valid) == 10 and len(train) == 90
        t_times = {t.tobytes() for _, t in train.events}
        v_times = {t.tobytes() for _, t in valid.events}
        assert not (t_times & v_times)

    def test_deterministic(self):
        batch = generate_randman(classes=2, samples_per_class=10, seed=0)
        a = split_batch(batch, 0.2, seed=1)[1]
        b = split_batch(batch, 0.2, seed=1)[1]
        assert np.array_equal(a.labels, b.labels)

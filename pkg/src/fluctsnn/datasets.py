"""Spike datasets: synthetic generation, SHD loading, binning, and disk I/O.

Spike data moves through the library in two forms: ragged per-sample event
lists (SpikeBatch) and a dense binary tensor binned at the simulation time
step (DenseSpikes).  The on-disk "spike-pack" format is bit-exact and
round-trips batches without loss.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

SPIKEPACK_MAGIC = b"SPKP"
SPIKEPACK_VERSION = 1


class SpikePackError(ValueError):
    """Malformed or truncated spike-pack file."""


@dataclass
class SpikeBatch:
    """Ragged spike events with labels.

    events[i] is a pair of arrays (units, times_ms) for sample i.
    """

    events: list[tuple[np.ndarray, np.ndarray]]
    labels: np.ndarray
    n_units: int
    duration: float  # ms
    n_classes: int

    def __len__(self) -> int:
        return len(self.events)

    def mean_rate(self) -> float:
        """Average firing rate per input neuron in Hz."""
        total = sum(len(u) for u, _ in self.events)
        return total / (len(self.events) * self.n_units * self.duration * 1e-3)

    def subset(self, idx) -> "SpikeBatch":
        idx = np.asarray(idx)
        return SpikeBatch(
            events=[self.events[i] for i in idx],
            labels=self.labels[idx],
            n_units=self.n_units,
            duration=self.duration,
            n_classes=self.n_classes,
        )


@dataclass
class DenseSpikes:
    """Binary spike tensor of shape (sample, step, unit)."""

    data: np.ndarray
    dt: float  # ms


def bin_events(batch: SpikeBatch, dt: float) -> DenseSpikes:
    """Bin events at time step dt (ms); multiple events per bin collapse to 1."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n_steps = int(np.ceil(batch.duration / dt))
    dense = np.zeros((len(batch), n_steps, batch.n_units), dtype=np.uint8)
    for i, (units, times) in enumerate(batch.events):
        bins = np.floor(times / dt).astype(np.int64)
        np.clip(bins, 0, n_steps - 1, out=bins)
        dense[i, bins, units] = 1
    return DenseSpikes(data=dense, dt=dt)


# -- Randman ------------------------------------------------------------------

_RANDMAN_HARMONICS = 4


def _randman_basis(rng, m: int, d: int):
    """Random spectral coefficients for one class map f: [0,1]^d -> [0,1]^m."""
    amp = rng.uniform(0.0, 1.0, size=(m, d, _RANDMAN_HARMONICS))
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(m, d, _RANDMAN_HARMONICS))
    return amp, phase


def _randman_eval(amp, phase, alpha: float, x: np.ndarray) -> np.ndarray:
    """Evaluate the un-normalized map at intrinsic points x of shape (k, d)."""
    k = np.arange(1, _RANDMAN_HARMONICS + 1, dtype=float)
    decay = k ** (-alpha)
    # (samples, m, d, harmonics) -> sum over d and harmonics
    arg = 2.0 * np.pi * k[None, None, None, :] * x[:, None, :, None]
    return np.einsum(
        "kmdh->km", decay[None, None, None, :] * amp[None] * np.sin(arg + phase[None])
    )


def generate_randman(
    classes: int = 10,
    samples_per_class: int = 1000,
    m: int = 20,
    d: int = 1,
    alpha_smooth: float = 1.0,
    t_active: float = 100.0,
    t_pad: float = 100.0,
    seed: int = 0,
) -> SpikeBatch:
    """Smooth-random-manifold spike-timing dataset.

    Each class draws an independent smooth map from intrinsic coordinates to
    per-neuron spike times; each sample places exactly one spike per neuron in
    [0, t_active) ms, followed by t_pad ms of silence.
    """
    grid = np.linspace(0.0, 1.0, 1001)
    events = []
    labels = []
    x_rng = np.random.default_rng([seed, classes])
    for c in range(classes):
        # per-class child stream so the maps are reproducible independently
        # of how many samples are drawn
        amp, phase = _randman_basis(np.random.default_rng([seed, c]), m, d)
        # per-neuron min/max over a dense grid, used to normalize spike times
        # to [0, 1]; the map is a sum over intrinsic dimensions, so per-dim
        # extrema add up
        lo = np.zeros(m)
        hi = np.zeros(m)
        for dim in range(d):
            gx = np.zeros((grid.size, d))
            gx[:, dim] = grid
            single = _randman_eval(
                amp[:, dim : dim + 1], phase[:, dim : dim + 1], alpha_smooth, gx[:, dim : dim + 1]
            )
            lo += single.min(axis=0)
            hi += single.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)

        x = x_rng.uniform(0.0, 1.0, size=(samples_per_class, d))
        f = (_randman_eval(amp, phase, alpha_smooth, x) - lo) / span
        times = np.clip(f, 0.0, 1.0 - 1e-6) * t_active
        units = np.arange(m, dtype=np.int64)
        for s in range(samples_per_class):
            events.append((units.copy(), times[s].astype(np.float32)))
            labels.append(c)

    return SpikeBatch(
        events=events,
        labels=np.asarray(labels, dtype=np.int64),
        n_units=m,
        duration=t_active + t_pad,
        n_classes=classes,
    )


def randman_map_times(
    classes: int, m: int, d: int, alpha_smooth: float, seed: int, x: np.ndarray,
    t_active: float = 100.0,
) -> np.ndarray:
    """Spike times (ms) of each class map at given intrinsic points.

    Evaluates the same maps ``generate_randman`` draws for this seed, at
    caller-chosen coordinates; used to probe map smoothness.
    """
    grid = np.linspace(0.0, 1.0, 1001)
    out = []
    for c in range(classes):
        amp, phase = _randman_basis(np.random.default_rng([seed, c]), m, d)
        lo = np.zeros(m)
        hi = np.zeros(m)
        for dim in range(d):
            single = _randman_eval(
                amp[:, dim : dim + 1], phase[:, dim : dim + 1], alpha_smooth,
                grid[:, None],
            )
            lo += single.min(axis=0)
            hi += single.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        f = (_randman_eval(amp, phase, alpha_smooth, x) - lo) / span
        out.append(np.clip(f, 0.0, 1.0 - 1e-6) * t_active)
    return np.stack(out)


# -- Poisson ------------------------------------------------------------------


def generate_poisson(
    n_units: int,
    nu: float,
    duration: float,
    dt: float,
    seed: int,
    n_samples: int = 1,
) -> SpikeBatch:
    """Homogeneous Poisson spike trains binned at dt (all arguments in ms/Hz).

    Each (unit, step) bin spikes independently with probability
    1 - exp(-nu * dt).
    """
    p = 1.0 - np.exp(-nu * dt * 1e-3)
    if nu * dt * 1e-3 >= 1.0:
        warnings.warn("nu*dt >= 1: heavy bin collapse, rates will saturate")
    rng = np.random.default_rng(seed)
    n_steps = int(np.ceil(duration / dt))
    events = []
    for _ in range(n_samples):
        spikes = rng.random((n_steps, n_units)) < p
        steps, units = np.nonzero(spikes)
        events.append((units.astype(np.int64), (steps * dt).astype(np.float32)))
    return SpikeBatch(
        events=events,
        labels=np.zeros(n_samples, dtype=np.int64),
        n_units=n_units,
        duration=duration,
        n_classes=1,
    )


# -- spike-pack binary format -------------------------------------------------


def save_spikepack(path, batch: SpikeBatch) -> None:
    """Write a batch in the bit-exact little-endian spike-pack format."""
    with open(path, "wb") as fh:
        fh.write(SPIKEPACK_MAGIC)
        fh.write(
            struct.pack(
                "<IIIfI",
                SPIKEPACK_VERSION,
                len(batch),
                batch.n_units,
                batch.duration,
                batch.n_classes,
            )
        )
        for (units, times), label in zip(batch.events, batch.labels):
            fh.write(struct.pack("<II", int(label), len(units)))
            rec = np.empty((len(units), 2), dtype="<u4")
            rec[:, 0] = units
            rec[:, 1] = np.asarray(times, dtype="<f4").view("<u4")
            fh.write(rec.tobytes())


def load_spikepack(path) -> SpikeBatch:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 24:
        raise SpikePackError("truncated header")
    if blob[:4] != SPIKEPACK_MAGIC:
        raise SpikePackError("bad magic")
    version, n_samples, n_units, duration, n_classes = struct.unpack(
        "<IIIfI", blob[4:24]
    )
    if version != SPIKEPACK_VERSION:
        raise SpikePackError(f"unsupported version {version}")
    off = 24
    events = []
    labels = np.empty(n_samples, dtype=np.int64)
    for i in range(n_samples):
        if off + 8 > len(blob):
            raise SpikePackError("truncated sample header")
        label, count = struct.unpack_from("<II", blob, off)
        off += 8
        nbytes = count * 8
        if off + nbytes > len(blob):
            raise SpikePackError("truncated event data")
        rec = np.frombuffer(blob, dtype="<u4", count=count * 2, offset=off).reshape(
            count, 2
        )
        off += nbytes
        labels[i] = label
        events.append(
            (rec[:, 0].astype(np.int64), rec[:, 1].copy().view("<f4").astype(np.float32))
        )
    return SpikeBatch(
        events=events,
        labels=labels,
        n_units=n_units,
        duration=duration,
        n_classes=n_classes,
    )


# -- SHD ----------------------------------------------------------------------

SHD_UNITS = 700
SHD_CLASSES = 20
SHD_SPLICE_MS = 700.0


def load_shd(path) -> SpikeBatch:
    """Load an SHD HDF5 container (or a spike-pack), splicing to 700 ms."""
    with open(path, "rb") as fh:
        if fh.read(4) == SPIKEPACK_MAGIC:
            return load_spikepack(path)

    import h5py

    with h5py.File(path, "r") as f:
        if "spikes" not in f or "labels" not in f:
            raise ValueError("missing groups: expected spikes/{times,units} and labels")
        times = f["spikes"]["times"]
        units = f["spikes"]["units"]
        labels = np.asarray(f["labels"], dtype=np.int64)
        events = []
        for i in range(len(labels)):
            t_ms = np.asarray(times[i], dtype=np.float64) * 1e3
            u = np.asarray(units[i], dtype=np.int64)
            keep = t_ms < SHD_SPLICE_MS
            events.append((u[keep], t_ms[keep].astype(np.float32)))
    return SpikeBatch(
        events=events,
        labels=labels,
        n_units=SHD_UNITS,
        duration=SHD_SPLICE_MS,
        n_classes=SHD_CLASSES,
    )


def split_batch(batch: SpikeBatch, valid_frac: float, seed: int):
    """Seeded shuffle split into (train, validation)."""
    rng = np.random.default_rng(seed)
    idx = rng.permutation(len(batch))
    n_valid = int(round(valid_frac * len(batch)))
    return batch.subset(idx[n_valid:]), batch.subset(idx[:n_valid])

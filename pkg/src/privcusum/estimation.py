"""Domain partitioning, streaming prefix sums, and the binned estimators.

The covariate domain (an axis-aligned box) is cut into cubes of side h;
cubes sticking out past the domain edge are clipped, but bin centers are
those of the unclipped cubes. ``PrefixState`` accumulates per-bin sums of a
privatized stream (noisy indicators and noisy responses) or of a raw stream
(indicator counts and response sums), so any segment estimator is one
subtraction away.

Two estimators are exposed. ``estimate_private`` divides segment means of the
noisy responses by segment means of the noisy indicators, gated by the
occupancy condition mean >= log(n+1)/n for a segment of length n (below the
gate a bin's estimate is 0). ``estimate_nonprivate`` is the plain ratio of
per-bin response sums to counts with the 0/0 = 0 convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "BinPartition",
    "build_partition",
    "PrefixState",
    "push_private",
    "push_raw",
    "estimate_private",
    "estimate_nonprivate",
    "estimate_c_min",
]

_EDGE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class BinPartition:
    """Cubes of side h tiling an axis-aligned box.

    ``centers`` are unclipped cube centers; ``volumes`` are true clipped
    volumes (used when estimating the density floor). ``c_min`` is optional
    metadata: the density floor of the sampling law when known.
    """

    lows: np.ndarray
    highs: np.ndarray
    h: float
    bins_per_axis: np.ndarray
    n_bins: int
    centers: np.ndarray
    volumes: np.ndarray
    c_min: float | None = None

    @property
    def dim(self) -> int:
        return self.lows.shape[0]

    @property
    def diameter(self) -> float:
        """Cube diameter sqrt(d) * h."""
        return math.sqrt(self.dim) * self.h

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        return bool(np.all(x >= self.lows - _EDGE_TOL)
                    and np.all(x <= self.highs + _EDGE_TOL))

    def _axis_indices(self, x):
        v = (x - self.lows) / self.h
        idx = np.ceil(v).astype(np.int64) - 1
        return np.clip(idx, 0, self.bins_per_axis - 1)

    def locate(self, x) -> int:
        """Flat bin index of a point; boundary points go to the lower-index
        cube. Raises ValueError outside the domain."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.dim:
            raise ValueError(f"point has dimension {x.shape[0]}, expected {self.dim}")
        if not self.contains(x):
            raise ValueError(f"point {x} outside the partition domain")
        axis_idx = self._axis_indices(x)
        return int(np.ravel_multi_index(axis_idx, self.bins_per_axis))

    def locate_batch(self, xs) -> np.ndarray:
        """Flat bin indices for an (n, d) array of points."""
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        if xs.shape[1] != self.dim:
            raise ValueError(f"points have dimension {xs.shape[1]}, expected {self.dim}")
        inside = (xs >= self.lows - _EDGE_TOL) & (xs <= self.highs + _EDGE_TOL)
        if not inside.all():
            bad = int(np.argmin(inside.all(axis=1)))
            raise ValueError(f"point at row {bad} outside the partition domain: {xs[bad]}")
        axis_idx = np.ceil((xs - self.lows) / self.h).astype(np.int64) - 1
        np.clip(axis_idx, 0, self.bins_per_axis - 1, out=axis_idx)
        return np.ravel_multi_index(axis_idx.T, self.bins_per_axis)


def build_partition(lows, highs, h, c_min: float | None = None) -> BinPartition:
    """Partition the box [lows, highs] into cubes of side h.

    bins_per_axis = ceil(axis_length / h); the last cube on each axis is
    clipped to the domain. Raises ValueError on a degenerate domain or an h
    exceeding an axis length.
    """
    lows = np.atleast_1d(np.asarray(lows, dtype=np.float64))
    highs = np.atleast_1d(np.asarray(highs, dtype=np.float64))
    if lows.shape != highs.shape or lows.ndim != 1 or lows.size == 0:
        raise ValueError("domain must be given as matching lows/highs vectors")
    lengths = highs - lows
    if np.any(lengths <= 0.0):
        raise ValueError(f"degenerate domain: lengths {lengths}")
    if h <= 0.0:
        raise ValueError(f"bin width must be positive, got {h}")
    if np.any(h > lengths + _EDGE_TOL):
        raise ValueError(f"bin width {h} exceeds a domain axis length {lengths}")
    bins_per_axis = np.ceil(lengths / h - _EDGE_TOL).astype(np.int64)
    bins_per_axis = np.maximum(bins_per_axis, 1)
    n_bins = int(np.prod(bins_per_axis))

    axis_centers = [lows[k] + (np.arange(bins_per_axis[k]) + 0.5) * h
                    for k in range(lows.size)]
    axis_widths = [np.minimum(h, highs[k] - (lows[k] + np.arange(bins_per_axis[k]) * h))
                   for k in range(lows.size)]
    mesh_c = np.meshgrid(*axis_centers, indexing="ij")
    mesh_w = np.meshgrid(*axis_widths, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh_c], axis=1)
    volumes = np.prod(np.stack([m.ravel() for m in mesh_w], axis=1), axis=1)
    return BinPartition(lows=lows, highs=highs, h=float(h),
                        bins_per_axis=bins_per_axis, n_bins=n_bins,
                        centers=centers, volumes=volumes, c_min=c_min)


class PrefixState:
    """Streaming per-bin cumulative sums with O(1) segment queries.

    Rows are pushed at times 1, 2, .... With retention="all" every prefix is
    kept in contiguous buffers (the form the detection kernels consume); with
    retention="dyadic" only a geometrically thinned index set is kept, so
    memory grows with O(log t) rows while recent indices stay queryable.
    Index i survives at time t iff i is divisible by
    2**max(0, floor(log2(t - i)) - 1).
    """

    def __init__(self, n_bins: int, retention: str = "all"):
        if n_bins < 1:
            raise ValueError(f"n_bins must be >= 1, got {n_bins}")
        if retention not in ("all", "dyadic"):
            raise ValueError(f"unknown retention policy {retention!r}")
        self.n_bins = int(n_bins)
        self.retention = retention
        self._t = 0
        if retention == "all":
            cap = 256
            self._wbuf = np.zeros((cap, n_bins))
            self._zbuf = np.zeros((cap, n_bins))
        else:
            self._kept: dict[int, tuple[np.ndarray, np.ndarray]] = {
                0: (np.zeros(n_bins), np.zeros(n_bins))
            }

    @property
    def t(self) -> int:
        return self._t

    def push(self, w_row, z_row) -> None:
        w_row = np.asarray(w_row, dtype=np.float64).reshape(-1)
        z_row = np.asarray(z_row, dtype=np.float64).reshape(-1)
        if w_row.shape[0] != self.n_bins or z_row.shape[0] != self.n_bins:
            raise ValueError(
                f"row length mismatch: state has {self.n_bins} bins, "
                f"got w={w_row.shape[0]}, z={z_row.shape[0]}")
        t_new = self._t + 1
        if self.retention == "all":
            if t_new >= self._wbuf.shape[0]:
                grow = max(2 * self._wbuf.shape[0], t_new + 1)
                for name in ("_wbuf", "_zbuf"):
                    buf = getattr(self, name)
                    new = np.zeros((grow, self.n_bins))
                    new[: buf.shape[0]] = buf
                    setattr(self, name, new)
            self._wbuf[t_new] = self._wbuf[self._t] + w_row
            self._zbuf[t_new] = self._zbuf[self._t] + z_row
        else:
            wprev, zprev = self._kept[self._t]
            self._kept[t_new] = (wprev + w_row, zprev + z_row)
            self._prune(t_new)
        self._t = t_new

    def _prune(self, t: int) -> None:
        drop = [i for i in self._kept
                if 0 < i < t - 1 and i % (1 << max(0, (t - i).bit_length() - 2))]
        for i in drop:
            del self._kept[i]

    def retained(self, idx: int) -> bool:
        if not 0 <= idx <= self._t:
            return False
        if self.retention == "all":
            return True
        return idx in self._kept

    def retained_indices(self) -> list[int]:
        if self.retention == "all":
            return list(range(self._t + 1))
        return sorted(self._kept)

    def cum(self, idx: int):
        """Cumulative sums through time idx (idx = 0 is the zero row)."""
        if not 0 <= idx <= self._t:
            raise IndexError(f"index {idx} out of range [0, {self._t}]")
        if self.retention == "all":
            return self._wbuf[idx], self._zbuf[idx]
        if idx not in self._kept:
            raise IndexError(f"index {idx} was not retained by the dyadic policy")
        return self._kept[idx]

    def segment_sum(self, s: int, t: int):
        """Per-bin sums over the inclusive segment [s, t]."""
        if not 1 <= s <= t <= self._t:
            raise IndexError(f"segment [{s}, {t}] out of range at time {self._t}")
        w_hi, z_hi = self.cum(t)
        w_lo, z_lo = self.cum(s - 1)
        return w_hi - w_lo, z_hi - z_lo

    @property
    def w_matrix(self) -> np.ndarray:
        """View of all retained w prefix rows (retention='all' only)."""
        if self.retention != "all":
            raise ValueError("contiguous prefix matrix requires retention='all'")
        return self._wbuf[: self._t + 1]

    @property
    def z_matrix(self) -> np.ndarray:
        if self.retention != "all":
            raise ValueError("contiguous prefix matrix requires retention='all'")
        return self._zbuf[: self._t + 1]


def push_private(state: PrefixState, obs) -> PrefixState:
    """Append one privatized observation; time indices must be contiguous."""
    if obs.time_index != state.t + 1:
        raise ValueError(
            f"out-of-order push: observation at t={obs.time_index}, state at t={state.t}")
    state.push(obs.w, obs.z)
    return state


def push_raw(state: PrefixState, x, y, partition: BinPartition) -> PrefixState:
    """Append one raw observation as (indicator row, y * indicator row)."""
    j = partition.locate(x)
    w_row = np.zeros(partition.n_bins)
    w_row[j] = 1.0
    z_row = np.zeros(partition.n_bins)
    z_row[j] = float(y)
    state.push(w_row, z_row)
    return state


def _check_segment(state, s, t, partition):
    if not 1 <= s <= t <= state.t:
        raise IndexError(f"segment [{s}, {t}] invalid at stream time {state.t}")
    if partition is not None and partition.n_bins != state.n_bins:
        raise ValueError(
            f"partition has {partition.n_bins} bins but state has {state.n_bins}")


def estimate_private(state: PrefixState, s: int, t: int,
                     partition: BinPartition | None = None) -> np.ndarray:
    """Gated ratio estimator over the inclusive segment [s, t].

    Per bin: nu/mu when the indicator mean mu clears log(n+1)/n (n the
    segment length), else 0.
    """
    _check_segment(state, s, t, partition)
    w_sum, z_sum = state.segment_sum(s, t)
    n = float(t - s + 1)
    mu = w_sum / n
    nu = z_sum / n
    gate = math.log(n + 1.0) / n
    return np.divide(nu, mu, out=np.zeros_like(nu), where=mu >= gate)


def estimate_nonprivate(state: PrefixState, s: int, t: int,
                        partition: BinPartition | None = None) -> np.ndarray:
    """Per-bin mean response over [s, t], with 0/0 = 0."""
    _check_segment(state, s, t, partition)
    c_sum, y_sum = state.segment_sum(s, t)
    return np.divide(y_sum, c_sum, out=np.zeros_like(y_sum), where=c_sum > 0)


def estimate_c_min(partition: BinPartition, xs) -> float:
    """Empirical density floor: min over bins of (frequency / true volume).

    A calibration-prefix estimate for when the sampling law's floor is
    unknown; callers should flag it as estimated in reports.
    """
    idx = partition.locate_batch(xs)
    counts = np.bincount(idx, minlength=partition.n_bins).astype(np.float64)
    n = max(len(idx), 1)
    return float(np.min(counts / n / partition.volumes))

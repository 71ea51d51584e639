"""Fixed and learnable k-space acquisition patterns.

Cartesian masks select whole phase-encoding lines (image rows, by the
convention fixed here); learned Cartesian sampling keeps a continuous
score per line and binarizes to the exact line budget each step.  Radial
trajectories are ordered off-grid coordinates grouped into shots, in
centered grid units (DC at ``(0, 0)``, spokes spanning ``+-W/2`` and
``+-H/2``); learned radial sampling optimizes a sparser set of control
points and reconstructs the dense trajectory by linear interpolation at a
scheduled gap.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


@dataclass(frozen=True)
class CartesianMask:
    """Binary phase-encoding-line selector with exact cardinality."""

    lines: np.ndarray
    n_acquired: int

    def __post_init__(self) -> None:
        lines = np.ascontiguousarray(self.lines, dtype=np.uint8)
        if lines.ndim != 1:
            raise ValueError(f"mask lines must be 1D, got shape {lines.shape}")
        if not np.all((lines == 0) | (lines == 1)):
            raise ValueError("mask lines must be 0/1")
        if int(lines.sum()) != self.n_acquired:
            raise ValueError(
                f"mask has {int(lines.sum())} acquired lines, expected {self.n_acquired}"
            )
        object.__setattr__(self, "lines", lines)

    @property
    def height(self) -> int:
        return self.lines.shape[0]

    @property
    def acquired_indices(self) -> np.ndarray:
        return np.flatnonzero(self.lines)


@dataclass(frozen=True)
class CartesianScores:
    """Continuous per-line scores for learned Cartesian sampling."""

    scores: np.ndarray
    center_fraction: float = 0.1

    def __post_init__(self) -> None:
        scores = np.ascontiguousarray(self.scores, dtype=np.float64)
        if scores.ndim != 1:
            raise ValueError("scores must be 1D")
        if not 0.0 <= self.center_fraction <= 1.0:
            raise ValueError("center_fraction must lie in [0, 1]")
        object.__setattr__(self, "scores", scores)


@dataclass(frozen=True)
class RadialTrajectory:
    """Off-grid sample coordinates grouped into shots.

    ``coords`` is ``(shots * points_per_shot, 2)`` with columns (kx, ky) in
    grid units; shot s occupies rows ``s*points_per_shot : (s+1)*points_per_shot``.
    When ``control_points`` is present the dense coordinates are its linear
    interpolation (this is validated), and ``gap`` records the schedule
    state that produced the control-point count.
    """

    shots: int
    points_per_shot: int
    coords: np.ndarray
    control_points: np.ndarray | None = None
    gap: int = 1

    def __post_init__(self) -> None:
        coords = np.ascontiguousarray(self.coords, dtype=np.float64)
        if coords.shape != (self.shots * self.points_per_shot, 2):
            raise ValueError(
                f"coords shape {coords.shape} != ({self.shots * self.points_per_shot}, 2)"
            )
        object.__setattr__(self, "coords", coords)
        if self.gap < 1:
            raise ValueError("gap must be >= 1")
        if self.control_points is not None:
            ctrl = np.ascontiguousarray(self.control_points, dtype=np.float64)
            if ctrl.ndim != 3 or ctrl.shape[0] != self.shots or ctrl.shape[2] != 2:
                raise ValueError(f"control_points shape {ctrl.shape} invalid")
            object.__setattr__(self, "control_points", ctrl)
            dense = interpolate_controls(ctrl, self.points_per_shot)
            if not np.allclose(dense, coords, atol=1e-9):
                raise ValueError("coords are not the interpolation of control_points")

    @property
    def n_points(self) -> int:
        return self.shots * self.points_per_shot


def center_band_indices(height: int, n_acquired: int, center_fraction: float) -> np.ndarray:
    """Indices of the always-acquired central band: floor(center_fraction * n_acquired) lines."""
    size = int(np.floor(center_fraction * n_acquired))
    start = (height - size) // 2
    return np.arange(start, start + size)


def make_fixed_cartesian(
    height: int,
    n_acquired: int,
    center_fraction: float = 0.1,
    rng_seed=0,
) -> CartesianMask:
    """Random fixed mask: central band forced on, the rest uniform without replacement."""
    if n_acquired > height:
        raise ValueError(f"cannot acquire {n_acquired} of {height} lines")
    rng = _as_rng(rng_seed)
    band = center_band_indices(height, n_acquired, center_fraction)
    lines = np.zeros(height, dtype=np.uint8)
    lines[band] = 1
    rest = np.flatnonzero(lines == 0)
    extra = rng.choice(rest, size=n_acquired - band.size, replace=False)
    lines[extra] = 1
    return CartesianMask(lines, n_acquired)


def make_fixed_radial(shots: int, points_per_shot: int, height: int, width: int) -> RadialTrajectory:
    """Uniform-angle radial spokes through the k-space center.

    Shot s has angle ``s * pi / shots``; its points are uniformly spaced
    along the diameter, spanning the full grid extent (``+-W/2`` along kx,
    ``+-H/2`` along ky).
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if points_per_shot < 2:
        raise ValueError("points_per_shot must be >= 2")
    t = np.linspace(-1.0, 1.0, points_per_shot)
    coords = np.empty((shots * points_per_shot, 2))
    for s in range(shots):
        theta = s * np.pi / shots
        sl = slice(s * points_per_shot, (s + 1) * points_per_shot)
        coords[sl, 0] = t * (width / 2.0) * np.cos(theta)
        coords[sl, 1] = t * (height / 2.0) * np.sin(theta)
    return RadialTrajectory(shots, points_per_shot, coords)


def binarize_quantile(scores: CartesianScores, n_acquired: int) -> CartesianMask:
    """Top-score binarization with exact cardinality.

    The forced central band is set first; the remaining budget goes to the
    highest scores outside it.  Ties break toward the lower index, which
    makes the operation deterministic.
    """
    values = scores.scores
    height = values.shape[0]
    if height < n_acquired:
        raise ValueError(f"cannot acquire {n_acquired} of {height} lines")
    band = center_band_indices(height, n_acquired, scores.center_fraction)
    lines = np.zeros(height, dtype=np.uint8)
    lines[band] = 1
    remaining = n_acquired - band.size
    if remaining > 0:
        free = np.flatnonzero(lines == 0)
        order = free[np.argsort(-values[free], kind="stable")]
        lines[order[:remaining]] = 1
    return CartesianMask(lines, n_acquired)


def straight_through_mask_grad(
    upstream_per_line: np.ndarray, center_band: np.ndarray | None = None
) -> np.ndarray:
    """Straight-through estimator: score gradient == mask-entry gradient.

    The binarization has zero gradient almost everywhere, so the upstream
    gradient is passed through unchanged, except on the forced central
    band whose lines are frozen.
    """
    grad = np.asarray(upstream_per_line, dtype=np.float64).copy()
    if grad.ndim != 1:
        raise ValueError("upstream gradient must be 1D")
    if center_band is not None and len(center_band) > 0:
        grad[np.asarray(center_band, dtype=int)] = 0.0
    return grad


def _resample_weights(n_controls: int, n_out: int):
    """Uniform polyline resampling weights: output i blends controls k(i), k(i)+1."""
    u = np.linspace(0.0, n_controls - 1.0, n_out)
    k = np.clip(np.floor(u).astype(int), 0, n_controls - 2)
    f = u - k
    return k, f


def interpolate_controls(control_points, points_per_shot: int) -> np.ndarray:
    """Piecewise-linear resampling of per-shot control polylines.

    Accepts an ``(S, m, 2)`` array or a sequence of ``(m_s, 2)`` arrays
    (at least two controls per shot) and returns dense coordinates of
    shape ``(S * points_per_shot, 2)`` with endpoints preserved exactly.
    """
    out = []
    for ctrl in control_points:
        ctrl = np.asarray(ctrl, dtype=np.float64)
        if ctrl.ndim != 2 or ctrl.shape[1] != 2 or ctrl.shape[0] < 2:
            raise ValueError("each shot needs at least 2 control points of shape (m, 2)")
        k, f = _resample_weights(ctrl.shape[0], points_per_shot)
        out.append((1.0 - f)[:, None] * ctrl[k] + f[:, None] * ctrl[k + 1])
    return np.concatenate(out, axis=0)


def controls_grad_from_coords(
    coord_grads: np.ndarray, control_points: np.ndarray, points_per_shot: int
) -> np.ndarray:
    """Transpose of the interpolation: pull dense coordinate gradients onto controls."""
    ctrl = np.asarray(control_points, dtype=np.float64)
    grads = np.asarray(coord_grads, dtype=np.float64)
    shots, m = ctrl.shape[0], ctrl.shape[1]
    if grads.shape != (shots * points_per_shot, 2):
        raise ValueError(
            f"coord_grads shape {grads.shape} != ({shots * points_per_shot}, 2)"
        )
    k, f = _resample_weights(m, points_per_shot)
    out = np.zeros_like(ctrl)
    g = grads.reshape(shots, points_per_shot, 2)
    for s in range(shots):
        np.add.at(out[s], k, (1.0 - f)[:, None] * g[s])
        np.add.at(out[s], k + 1, f[:, None] * g[s])
    return out


def gap_schedule(epoch: int, total_epochs: int, initial_gap: int) -> int:
    """Interpolation-gap annealing: linear from initial_gap to 1 over the first half.

    Values are rounded half-up and never drop below 1; from epoch
    ``total_epochs // 2`` onward the gap stays 1.
    """
    if total_epochs < 2:
        raise ValueError("total_epochs must be >= 2")
    half = total_epochs // 2
    if epoch >= half:
        return 1
    raw = initial_gap - (initial_gap - 1) * (epoch / half)
    return max(1, int(np.floor(raw + 0.5)))


def n_controls_for_gap(points_per_shot: int, gap: int) -> int:
    """Control-point count at a given gap: roughly one control per `gap` dense points."""
    m = int(np.ceil((points_per_shot - 1) / gap)) + 1
    return max(2, min(points_per_shot, m))


def resample_controls(traj: RadialTrajectory, gap: int) -> np.ndarray:
    """Derive control points at `gap` by uniformly resampling the dense trajectory."""
    m = n_controls_for_gap(traj.points_per_shot, gap)
    dense = traj.coords.reshape(traj.shots, traj.points_per_shot, 2)
    return interpolate_controls(dense, m).reshape(traj.shots, m, 2)


def trajectory_from_controls(
    shots: int, points_per_shot: int, control_points: np.ndarray, gap: int
) -> RadialTrajectory:
    coords = interpolate_controls(control_points, points_per_shot)
    return RadialTrajectory(shots, points_per_shot, coords, np.asarray(control_points), gap)


def with_coords(traj: RadialTrajectory, coords: np.ndarray) -> RadialTrajectory:
    """Copy of the trajectory with replaced dense coordinates (controls dropped)."""
    return replace(traj, coords=coords, control_points=None)


def write_trajectory_csv(traj: RadialTrajectory, path) -> None:
    """Export as `shot,point,kx,ky` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["shot", "point", "kx", "ky"])
        for s in range(traj.shots):
            for p in range(traj.points_per_shot):
                kx, ky = traj.coords[s * traj.points_per_shot + p]
                writer.writerow([s, p, repr(float(kx)), repr(float(ky))])


def read_trajectory_csv(path) -> RadialTrajectory:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["shot", "point", "kx", "ky"]:
            raise ValueError(f"unexpected trajectory CSV header: {header}")
        for row in reader:
            rows.append((int(row[0]), int(row[1]), float(row[2]), float(row[3])))
    if not rows:
        raise ValueError("empty trajectory CSV")
    shots = max(r[0] for r in rows) + 1
    pps = max(r[1] for r in rows) + 1
    coords = np.zeros((shots * pps, 2))
    for s, p, kx, ky in rows:
        coords[s * pps + p] = (kx, ky)
    return RadialTrajectory(shots, pps, coords)


def write_mask_lines(mask: CartesianMask, path) -> None:
    """Export as one 0/1 per line."""
    Path(path).write_text("".join(f"{int(v)}\n" for v in mask.lines))


def read_mask_lines(path) -> CartesianMask:
    lines = np.array([int(s) for s in Path(path).read_text().split()], dtype=np.uint8)
    return CartesianMask(lines, int(lines.sum()))

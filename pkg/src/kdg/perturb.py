"""Domain-generalization noise injectors and their schedule.

Three training-time perturbations: random trajectory jitter (integer line
offsets for Cartesian, Gaussian coordinate jitter for radial), adversarial
trajectory noise (sign-of-gradient steps for radial, XOR bit flips for
Cartesian), and plain image-domain noise.  All are gated per sample by a
Bernoulli draw and scaled by a shared warmup-then-decay intensity
schedule; the scheduled strength multiplies the calibrated magnitude
parameters, so every injector is the identity at strength 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .fourier import ComplexImage, Domain
from .trajectory import CartesianMask, RadialTrajectory, with_coords


class NoiseKind(str, enum.Enum):
    NONE = "none"
    IMAGE = "image"
    TRAJECTORY = "trajectory"
    TRAJECTORY_ADV = "trajectory_adv"


@dataclass(frozen=True)
class NoiseConfig:
    """Noise-injection settings; magnitude defaults follow the calibrated values."""

    kind: NoiseKind = NoiseKind.NONE
    tau_cartesian: float = 10.0
    tau_radial: float = 30.0
    epsilon_adv: float = 1.0
    num_bits: int = 4
    sigma_image: float = 6e-5
    sigma_measurement: float = 0.0
    eps_max: float = 1.0
    t_warmup: int = 4
    apply_prob: float = 0.5

    def __post_init__(self) -> None:
        for name in ("tau_cartesian", "tau_radial", "epsilon_adv", "sigma_image",
                     "sigma_measurement", "eps_max"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.num_bits < 0:
            raise ValueError("num_bits must be >= 0")
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ValueError("apply_prob must lie in [0, 1]")


def noise_schedule(t: float, total: float, t_warmup: int = 4, eps_max: float = 1.0) -> float:
    """Warmup-then-decay intensity: linear up to t_warmup, linear back to 0 at t=total."""
    if not 0 < t_warmup < total:
        raise ValueError(f"need 0 < t_warmup < total, got t_warmup={t_warmup}, total={total}")
    if t < 0 or t > total:
        raise ValueError(f"epoch {t} outside [0, {total}]")
    if t <= t_warmup:
        return eps_max * t / t_warmup
    return eps_max * (1.0 - (t - t_warmup) / (total - t_warmup))


def jittered_line_positions(
    acquired: np.ndarray, height: int, sigma: float, rng: np.random.Generator
) -> np.ndarray:
    """New line positions aligned with `acquired`: integer Gaussian offsets, all unique.

    Each position is ``round(N(0, sigma^2))`` away from its line, clamped to
    the valid range.  Colliding positions are redrawn (up to 100 times),
    then fall back to the nearest free index.
    """
    taken: set[int] = set()
    out = np.empty(len(acquired), dtype=np.int64)
    for j, i in enumerate(acquired):
        pos = int(i)
        for _ in range(100):
            delta = int(np.rint(rng.normal(0.0, sigma)))
            pos = min(max(int(i) + delta, 0), height - 1)
            if pos not in taken:
                break
        else:
            pos = _nearest_free(pos, taken, height)
        taken.add(pos)
        out[j] = pos
    return out


def perturb_cartesian_random(
    mask: CartesianMask, tau: float, strength: float, rng: np.random.Generator
) -> CartesianMask:
    """Jitter each acquired line by an integer Gaussian offset, keeping cardinality."""
    sigma = strength * tau
    if sigma == 0:
        return mask
    positions = jittered_line_positions(mask.acquired_indices, mask.height, sigma, rng)
    lines = np.zeros(mask.height, dtype=np.uint8)
    lines[positions] = 1
    return CartesianMask(lines, mask.n_acquired)


def _nearest_free(pos: int, taken: set[int], height: int) -> int:
    for d in range(height):
        for cand in (pos - d, pos + d):
            if 0 <= cand < height and cand not in taken:
                return cand
    raise RuntimeError("no free line index left")  # unreachable: n_acquired <= height


def perturb_radial_random(
    traj: RadialTrajectory, tau: float, strength: float, rng: np.random.Generator
) -> RadialTrajectory:
    """Independent Gaussian offsets N(0, (strength*tau)^2) on every kx and ky."""
    sigma = strength * tau
    if sigma == 0:
        return traj
    return with_coords(traj, traj.coords + rng.normal(0.0, sigma, traj.coords.shape))


def fgsm_radial(
    traj: RadialTrajectory, coord_grads: np.ndarray, epsilon_adv: float, strength: float
) -> RadialTrajectory:
    """Single-step sign-of-gradient attack on the trajectory coordinates.

    Moves each scalar coordinate by ``strength * epsilon_adv * sign(grad)``
    (with sign(0) = 0), so the perturbation saturates the L-infinity budget
    wherever the gradient is nonzero.
    """
    grads = np.asarray(coord_grads, dtype=np.float64)
    if grads.shape != traj.coords.shape:
        raise ValueError(f"coord_grads shape {grads.shape} != {traj.coords.shape}")
    step = strength * epsilon_adv
    if step == 0:
        return traj
    return with_coords(traj, traj.coords + step * np.sign(grads))


def adversarial_cartesian_xor(
    mask: CartesianMask, line_grads: np.ndarray, num_bits: int
) -> CartesianMask:
    """Worst-case line mis-sampling via XOR flips, preserving cardinality.

    Turns off the ``num_bits`` acquired lines with the highest loss-gradient
    magnitude and turns on the ``num_bits`` skipped lines with the lowest,
    flipping exactly ``2 * num_bits`` entries.  Ties break toward the lower
    index.
    """
    if num_bits == 0:
        return mask
    grads = np.asarray(line_grads, dtype=np.float64)
    if grads.shape != (mask.height,):
        raise ValueError(f"line_grads shape {grads.shape} != ({mask.height},)")
    acquired = np.flatnonzero(mask.lines == 1)
    skipped = np.flatnonzero(mask.lines == 0)
    if acquired.size < num_bits or skipped.size < num_bits:
        raise ValueError(
            f"need at least {num_bits} lines in each class, have "
            f"{acquired.size} acquired / {skipped.size} skipped"
        )
    mag = np.abs(grads)
    off = acquired[np.lexsort((acquired, -mag[acquired]))[:num_bits]]
    on = skipped[np.lexsort((skipped, mag[skipped]))[:num_bits]]
    lines = mask.lines.copy()
    lines[off] = 0
    lines[on] = 1
    return CartesianMask(lines, mask.n_acquired)


def image_noise(
    x_gt: ComplexImage, sigma: float, strength: float, rng: np.random.Generator
) -> ComplexImage:
    """Additive Gaussian noise on the (real) ground-truth image.

    The caller re-encodes the noisy image to k-space through whichever
    acquisition operator is in use.
    """
    if x_gt.domain is not Domain.IMAGE:
        raise ValueError("image_noise expects an image-domain input")
    scale = strength * sigma
    if scale == 0:
        return x_gt
    return ComplexImage(x_gt.data + rng.normal(0.0, scale, x_gt.data.shape), Domain.IMAGE)


def measurement_noise(
    samples: np.ndarray, sigma: float, strength: float, rng: np.random.Generator
) -> np.ndarray:
    """Complex Gaussian measurement noise n in y' = F_u x + n (off by default)."""
    scale = strength * sigma
    if scale == 0:
        return samples
    noise = rng.normal(0.0, scale, samples.shape) + 1j * rng.normal(0.0, scale, samples.shape)
    return samples + noise


@dataclass(frozen=True)
class DGOutcome:
    """Possibly-perturbed acquisition inputs plus what happened, for logging."""

    gt: ComplexImage
    mask: CartesianMask | None
    traj: RadialTrajectory | None
    applied: bool
    strength: float


def apply_dg(
    gt: ComplexImage,
    mask: CartesianMask | None,
    traj: RadialTrajectory | None,
    config: NoiseConfig,
    epoch: int,
    total_epochs: int,
    rng: np.random.Generator,
    grad_provider=None,
) -> DGOutcome:
    """Bernoulli-gated dispatch to the configured injector at the scheduled strength.

    ``grad_provider`` is required for the adversarial kind; it must return
    the loss gradient w.r.t. the mask lines (Cartesian) or the trajectory
    coordinates (radial), evaluated at the unperturbed acquisition.
    """
    if config.kind is NoiseKind.NONE:
        return DGOutcome(gt, mask, traj, False, 0.0)
    if config.kind is NoiseKind.TRAJECTORY_ADV and grad_provider is None:
        raise ValueError("adversarial trajectory noise requires a grad_provider")
    strength = noise_schedule(epoch, total_epochs, config.t_warmup, config.eps_max)
    if rng.random() >= config.apply_prob:
        return DGOutcome(gt, mask, traj, False, strength)

    if config.kind is NoiseKind.IMAGE:
        gt = image_noise(gt, config.sigma_image, strength, rng)
    elif config.kind is NoiseKind.TRAJECTORY:
        if mask is not None:
            mask = perturb_cartesian_random(mask, config.tau_cartesian, strength, rng)
        elif traj is not None:
            traj = perturb_radial_random(traj, config.tau_radial, strength, rng)
    elif config.kind is NoiseKind.TRAJECTORY_ADV and strength > 0:
        if mask is not None:
            bits = int(round(strength * config.num_bits))
            if bits > 0:
                mask = adversarial_cartesian_xor(mask, grad_provider(), bits)
        elif traj is not None:
            traj = fgsm_radial(traj, grad_provider(), config.epsilon_adv, strength)
    return DGOutcome(gt, mask, traj, True, strength)

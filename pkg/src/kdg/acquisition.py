"""Differentiable acquisition simulation shared by training and evaluation.

The forward simulation maps a ground-truth image to the network input:

* Cartesian: FFT -> zero skipped phase-encoding lines -> inverse FFT ->
  magnitude -> [0,1] normalization.
* Radial: NUDFT at the trajectory coordinates -> adjoint (zero-filled)
  reconstruction -> magnitude -> [0,1] normalization.

The context returned alongside the input retains every intermediate
needed to pull the network's input gradient back to the sampling
parameters (mask-line gradients or trajectory-coordinate gradients),
including the subgradient routing through magnitude and min-max
normalization.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .data import normalize01
from .fourier import (
    ComplexImage,
    Domain,
    cartesian_sample,
    fft2,
    ifft2,
    nudft_adjoint,
    nudft_adjoint_coord_grad,
    nudft_coord_grad,
    nudft_forward,
)
from .trajectory import CartesianMask, RadialTrajectory


class Sampling(str, enum.Enum):
    CARTESIAN = "cartesian"
    RADIAL = "radial"


@dataclass
class AcquireContext:
    sampling: Sampling
    gt: ComplexImage
    mask: CartesianMask | None = None
    traj: RadialTrajectory | None = None
    full_ksp: np.ndarray | None = None  # Cartesian: unmasked k-space
    samples: np.ndarray | None = None  # radial: acquired k-samples
    zf: np.ndarray | None = None  # complex zero-filled reconstruction
    mag: np.ndarray | None = None  # |zf| before normalization
    norm_constant: bool = False


def _finish(zf: ComplexImage, ctx: AcquireContext) -> np.ndarray:
    ctx.zf = zf.data
    ctx.mag = np.abs(zf.data)
    net_input, ctx.norm_constant = normalize01(ctx.mag)
    return net_input


def acquire(
    gt: ComplexImage,
    mask: CartesianMask | None = None,
    traj: RadialTrajectory | None = None,
    ksp_extra: np.ndarray | None = None,
) -> tuple[np.ndarray, AcquireContext]:
    """Simulate acquisition of `gt` through a mask or a radial trajectory.

    Exactly one of ``mask`` / ``traj`` must be given.  ``ksp_extra`` is
    optional additive measurement noise in the sampled representation
    (full-grid k-space for Cartesian, per-coordinate samples for radial).
    Returns the real network input in [0, 1] and the gradient context.
    """
    if (mask is None) == (traj is None):
        raise ValueError("provide exactly one of mask or traj")
    if gt.domain is not Domain.IMAGE:
        raise ValueError("acquire expects an image-domain ground truth")
    if mask is not None:
        ctx = AcquireContext(Sampling.CARTESIAN, gt, mask=mask)
        ctx.full_ksp = fft2(gt).data
        sampled = ctx.full_ksp * (mask.lines != 0)[:, None]
        if ksp_extra is not None:
            sampled = sampled + ksp_extra * (mask.lines != 0)[:, None]
        zf = ifft2(ComplexImage(sampled, Domain.KSPACE))
        return _finish(zf, ctx), ctx
    ctx = AcquireContext(Sampling.RADIAL, gt, traj=traj)
    h, w = gt.height, gt.width
    ctx.samples = nudft_forward(gt, traj.coords)
    if ksp_extra is not None:
        ctx.samples = ctx.samples + ksp_extra
    zf = nudft_adjoint(ctx.samples, traj.coords, h, w)
    return _finish(zf, ctx), ctx


def _normalize_vjp(mag: np.ndarray, g: np.ndarray, constant: bool) -> np.ndarray:
    """Pull back through v = (x - min) / (max - min), routing min/max subgradients."""
    if constant:
        return np.zeros_like(g)
    a = int(np.argmin(mag))
    b = int(np.argmax(mag))
    mn = mag.flat[a]
    mx = mag.flat[b]
    span = mx - mn
    gx = g / span
    gx_flat = gx.ravel()
    gx_flat[a] += float(np.sum(g * (mag - mx))) / span ** 2
    gx_flat[b] += float(np.sum(g * (mn - mag))) / span ** 2
    return gx


def _magnitude_vjp(zf: np.ndarray, g_mag: np.ndarray) -> np.ndarray:
    """Pull back through v = |z|; subgradient at z = 0 is 0."""
    mag = np.abs(zf)
    out = np.zeros_like(zf)
    nz = mag > 0
    out[nz] = g_mag[nz] * zf[nz] / mag[nz]
    return out


def input_grad_to_zf_grad(ctx: AcquireContext, input_grad: np.ndarray) -> np.ndarray:
    """Network-input gradient -> gradient w.r.t. the complex zero-filled image."""
    g_mag = _normalize_vjp(ctx.mag, np.asarray(input_grad, dtype=np.float64), ctx.norm_constant)
    return _magnitude_vjp(ctx.zf, g_mag)


def input_grad_to_line_grads(ctx: AcquireContext, input_grad: np.ndarray) -> np.ndarray:
    """Loss gradient w.r.t. each mask line (length H), for learned Cartesian masks."""
    if ctx.sampling is not Sampling.CARTESIAN:
        raise ValueError("line gradients only exist for Cartesian acquisition")
    g_zf = input_grad_to_zf_grad(ctx, input_grad)
    g_sampled = fft2(ComplexImage(g_zf, Domain.IMAGE)).data  # adjoint of ifft2
    return np.real(np.conj(g_sampled) * ctx.full_ksp).sum(axis=1)


def input_grad_to_coord_grads(ctx: AcquireContext, input_grad: np.ndarray) -> np.ndarray:
    """Loss gradient w.r.t. every (kx, ky), combining forward and adjoint terms."""
    if ctx.sampling is not Sampling.RADIAL:
        raise ValueError("coordinate gradients only exist for radial acquisition")
    coords = ctx.traj.coords
    h, w = ctx.gt.height, ctx.gt.width
    g_zf = input_grad_to_zf_grad(ctx, input_grad)
    g_samples = nudft_forward(ComplexImage(g_zf, Domain.IMAGE), coords)  # adjoint of nudft_adjoint
    term_fwd = nudft_coord_grad(ctx.gt, coords, g_samples)
    term_adj = nudft_adjoint_coord_grad(ctx.samples, coords, h, w, g_zf)
    return term_fwd + term_adj

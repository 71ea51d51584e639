"""Complex-valued 2D Fourier operators for k-space simulation.

Conventions used throughout the package:

* Orthonormal scaling ``1/sqrt(H*W)`` in both directions, for the uniform
  FFT as well as the non-uniform DFT, so that Parseval holds exactly and
  the adjoint equals the inverse on the full grid.
* k-space coordinates are measured in grid units with the DC bin at
  ``(0, 0)``: integer coordinates coincide with DFT bins.  Coordinates are
  never clamped; out-of-range values alias periodically through the
  complex exponential.
* Coordinate arrays have shape ``(M, 2)`` with columns ``(kx, ky)``;
  ``kx`` runs along image columns (width), ``ky`` along rows (height).
* The NUDFT is evaluated directly (O(M*N) via separable phase tables),
  not approximated by a gridding NUFFT.  At desk-scale sizes this is fast
  and, more importantly, exact, which the adjoint and gradient checks
  rely on.

Gradients of a real-valued loss with respect to complex arrays follow the
``g = dL/dRe + i*dL/dIm`` convention, so for a linear map ``y = A x`` the
upstream gradient pulls back as ``gx = A^H gy``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

_TWO_PI = 2.0 * np.pi


class Domain(enum.Enum):
    """Which side of the Fourier transform an array lives on."""

    IMAGE = "image"
    KSPACE = "kspace"


@dataclass(frozen=True)
class ComplexImage:
    """A complex 2D array tagged with its domain.

    The tag exists to catch the classic bug of transforming an array that
    is already in the other domain; every operator checks it.
    """

    data: np.ndarray
    domain: Domain = Domain.IMAGE

    def __post_init__(self) -> None:
        data = np.ascontiguousarray(self.data, dtype=np.complex128)
        if data.ndim != 2:
            raise ValueError(f"ComplexImage data must be 2D, got shape {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_real(cls, arr: np.ndarray, domain: Domain = Domain.IMAGE) -> "ComplexImage":
        return cls(np.asarray(arr, dtype=np.float64).astype(np.complex128), domain)


def _require_domain(img: ComplexImage, domain: Domain, op: str) -> None:
    if img.domain is not domain:
        raise ValueError(f"{op} expects a {domain.value}-domain input, got {img.domain.value}")


def fft2(img: ComplexImage) -> ComplexImage:
    """Orthonormal 2D DFT; flips the domain tag to k-space."""
    _require_domain(img, Domain.IMAGE, "fft2")
    return ComplexImage(np.fft.fft2(img.data, norm="ortho"), Domain.KSPACE)


def ifft2(ksp: ComplexImage) -> ComplexImage:
    """Exact inverse of :func:`fft2`; flips the domain tag to image."""
    _require_domain(ksp, Domain.KSPACE, "ifft2")
    return ComplexImage(np.fft.ifft2(ksp.data, norm="ortho"), Domain.IMAGE)


def check_coords(coords: np.ndarray) -> np.ndarray:
    """Validate and canonicalize an ``(M, 2)`` coordinate array."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        raise ValueError(f"coords must have shape (M, 2), got {coords.shape}")
    bad = np.flatnonzero(~np.isfinite(coords).all(axis=1))
    if bad.size:
        raise ValueError(f"non-finite k-space coordinate at index {bad[0]}")
    return coords


def _phase_tables(coords: np.ndarray, height: int, width: int):
    """Separable phase factors: ax[j, q] = e^{-2pi i kx_j q / W}, ay[j, p] likewise."""
    q = np.arange(width, dtype=np.float64)
    p = np.arange(height, dtype=np.float64)
    ax = np.exp((-1j * _TWO_PI / width) * np.outer(coords[:, 0], q))
    ay = np.exp((-1j * _TWO_PI / height) * np.outer(coords[:, 1], p))
    return ax, ay


def _forward_with_tables(data: np.ndarray, ax: np.ndarray, ay: np.ndarray) -> np.ndarray:
    # s_j = sum_p ay[j,p] * sum_q data[p,q] * ax[j,q], caller normalizes
    t = data @ ax.T  # (H, M)
    return np.einsum("jp,pj->j", ay, t)


def nudft_forward(img: ComplexImage, coords: np.ndarray) -> np.ndarray:
    """Direct non-uniform DFT of an image at arbitrary k-space coordinates.

    Returns one complex sample per coordinate:
    ``s_j = (1/sqrt(HW)) sum_{p,q} img[p,q] exp(-2pi i (kx_j q/W + ky_j p/H))``.
    """
    _require_domain(img, Domain.IMAGE, "nudft_forward")
    coords = check_coords(coords)
    ax, ay = _phase_tables(coords, img.height, img.width)
    s = _forward_with_tables(img.data, ax, ay)
    return s / np.sqrt(img.height * img.width)


def nudft_adjoint(samples: np.ndarray, coords: np.ndarray, height: int, width: int) -> ComplexImage:
    """Exact adjoint of :func:`nudft_forward` (zero-filled reconstruction).

    ``img[p,q] = (1/sqrt(HW)) sum_j s_j exp(+2pi i (kx_j q/W + ky_j p/H))``.
    """
    coords = check_coords(coords)
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.ndim != 1 or samples.shape[0] != coords.shape[0]:
        raise ValueError(
            f"sample count {samples.shape} does not match {coords.shape[0]} coordinates"
        )
    ax, ay = _phase_tables(coords, height, width)
    img = (ay.conj() * samples[:, None]).T @ ax.conj()
    return ComplexImage(img / np.sqrt(height * width), Domain.IMAGE)


def _axis_factors(height: int, width: int):
    # d phase / d kx multiplies columns by -2pi i q/W; d/d ky rows by -2pi i p/H
    col = (-1j * _TWO_PI / width) * np.arange(width, dtype=np.float64)
    row = (-1j * _TWO_PI / height) * np.arange(height, dtype=np.float64)
    return col, row


def nudft_coord_grad(img: ComplexImage, coords: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Gradient of a real loss w.r.t. the sample coordinates of the forward NUDFT.

    ``upstream`` is the loss gradient w.r.t. the complex samples
    (``dL/dRe + i dL/dIm``).  Returns an ``(M, 2)`` real array of
    ``(dL/dkx_j, dL/dky_j)`` computed as ``Re(conj(upstream_j) * ds_j/dk)``.
    """
    _require_domain(img, Domain.IMAGE, "nudft_coord_grad")
    coords = check_coords(coords)
    upstream = np.asarray(upstream, dtype=np.complex128)
    if upstream.shape != (coords.shape[0],):
        raise ValueError(
            f"upstream shape {upstream.shape} does not match {coords.shape[0]} coordinates"
        )
    h, w = img.height, img.width
    ax, ay = _phase_tables(coords, h, w)
    col, row = _axis_factors(h, w)
    scale = 1.0 / np.sqrt(h * w)
    ds_dkx = _forward_with_tables(img.data * col[None, :], ax, ay) * scale
    ds_dky = _forward_with_tables(img.data * row[:, None], ax, ay) * scale
    gx = np.real(np.conj(upstream) * ds_dkx)
    gy = np.real(np.conj(upstream) * ds_dky)
    return np.stack([gx, gy], axis=1)


def nudft_adjoint_coord_grad(
    samples: np.ndarray,
    coords: np.ndarray,
    height: int,
    width: int,
    upstream_image: np.ndarray,
) -> np.ndarray:
    """Coordinate gradient through :func:`nudft_adjoint`.

    When a trajectory is used both to acquire samples and to zero-fill them
    back, the coordinates enter the loss twice; this is the adjoint-side
    term.  ``upstream_image`` is the loss gradient w.r.t. the complex
    zero-filled image.  Returns ``(M, 2)`` like :func:`nudft_coord_grad`.
    """
    coords = check_coords(coords)
    samples = np.asarray(samples, dtype=np.complex128)
    upstream_image = np.asarray(upstream_image, dtype=np.complex128)
    if samples.shape != (coords.shape[0],):
        raise ValueError("sample count does not match coordinate count")
    if upstream_image.shape != (height, width):
        raise ValueError(
            f"upstream image shape {upstream_image.shape} != ({height}, {width})"
        )
    ax, ay = _phase_tables(coords, height, width)
    col, row = _axis_factors(height, width)
    scale = 1.0 / np.sqrt(height * width)
    # d z[p,q] / d kx_j = s_j * (+2pi i q/W) * e^{+i phi}; contracting with the
    # upstream image gives Re(s_j * conj(sum_pq g[p,q] * (-2pi i q/W) e^{-i phi})).
    dx = _forward_with_tables(upstream_image * col[None, :], ax, ay) * scale
    dy = _forward_with_tables(upstream_image * row[:, None], ax, ay) * scale
    gx = np.real(samples * np.conj(dx))
    gy = np.real(samples * np.conj(dy))
    return np.stack([gx, gy], axis=1)


def cartesian_sample(img: ComplexImage, mask) -> ComplexImage:
    """Masked Cartesian acquisition: FFT, then zero the skipped rows.

    ``mask`` is a 0/1 array over image rows (phase-encoding lines), or any
    object exposing such an array as ``.lines``.
    """
    lines = np.asarray(getattr(mask, "lines", mask))
    if lines.shape != (img.height,):
        raise ValueError(f"mask length {lines.shape} does not match height {img.height}")
    ksp = fft2(img)
    return ComplexImage(ksp.data * (lines != 0)[:, None], Domain.KSPACE)

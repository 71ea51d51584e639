"""Synthetic two-domain phantom data, preprocessing, and dataset file I/O.

Phantoms are random overlapping ellipses.  The source domain uses bright,
high-contrast ellipses rendered at the target size; the target domain uses
dimmer, lower-contrast ellipses, an additive texture-noise floor, and a
smaller native resolution that is bilinearly upscaled — a controlled
distribution shift along contrast, noise, and resolution axes.  The
preprocessing chain (root-sum-of-squares coil combination, bilinear
resize, [0,1] normalization) mirrors standard raw-MRI preparation and is
kept even though the default pipeline is single-coil.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np

from . import binio
from .fourier import ComplexImage

DATASET_MAGIC = b"KDGD"
DATASET_VERSION = 1


class PhantomDomain(str, enum.Enum):
    SOURCE = "source"
    TARGET = "target"


_DOMAIN_CODE = {PhantomDomain.SOURCE: 0, PhantomDomain.TARGET: 1}
_CODE_DOMAIN = {v: k for k, v in _DOMAIN_CODE.items()}


@dataclass(frozen=True)
class PhantomSpec:
    domain: PhantomDomain
    size: int = 64
    n_ellipses_min: int = 6
    n_ellipses_max: int = 10
    axis_low: float = 0.22
    axis_high: float = 0.65
    aspect_max: float = 1.0  # >1 squeezes the first axis: thin elongated shapes
    intensity_low: float = 0.55
    intensity_high: float = 1.0
    texture_noise_floor: float = 0.0
    native_size: int = 0  # 0 -> generate directly at `size`


def source_spec(size: int = 64) -> PhantomSpec:
    return PhantomSpec(PhantomDomain.SOURCE, size=size)


def target_spec(size: int = 64) -> PhantomSpec:
    """Target-domain generator: dimmer, thin elongated ellipses (fine structure),
    a texture-noise floor, and a smaller native resolution upscaled to `size`."""
    return PhantomSpec(
        PhantomDomain.TARGET,
        size=size,
        n_ellipses_min=8,
        n_ellipses_max=14,
        axis_low=0.12,
        axis_high=0.5,
        aspect_max=8.0,
        intensity_low=0.15,
        intensity_high=0.5,
        texture_noise_floor=0.05,
        native_size=max(16, int(round(0.8 * size))),
    )


@dataclass(frozen=True)
class Sample:
    gt: np.ndarray  # float64 (size, size), values in [0, 1]
    id: int
    domain: PhantomDomain


def generate_phantom(spec: PhantomSpec, seed: int) -> Sample:
    """Deterministic random overlapping-ellipse phantom for (spec, seed)."""
    if spec.size < 16:
        raise ValueError("phantom size must be >= 16")
    rng = np.random.default_rng([int(seed), _DOMAIN_CODE[spec.domain]])
    gen_size = spec.native_size or spec.size
    ax = np.linspace(-1.0, 1.0, gen_size)
    xx, yy = np.meshgrid(ax, ax)
    canvas = np.zeros((gen_size, gen_size))
    n = int(rng.integers(spec.n_ellipses_min, spec.n_ellipses_max + 1))
    for _ in range(n):
        cx, cy = rng.uniform(-0.55, 0.55, 2)
        a, b = rng.uniform(spec.axis_low, spec.axis_high, 2)
        if spec.aspect_max > 1.0:
            a /= rng.uniform(1.0, spec.aspect_max)
        theta = rng.uniform(0.0, np.pi)
        amp = rng.uniform(spec.intensity_low, spec.intensity_high)
        ct, st = np.cos(theta), np.sin(theta)
        u = (xx - cx) * ct + (yy - cy) * st
        v = -(xx - cx) * st + (yy - cy) * ct
        canvas += amp * ((u / a) ** 2 + (v / b) ** 2 <= 1.0)
    if spec.texture_noise_floor > 0:
        canvas += spec.texture_noise_floor * rng.random(canvas.shape)
    if gen_size != spec.size:
        canvas = resize_bilinear(canvas, spec.size, spec.size)
    img, _ = normalize01(canvas)
    return Sample(img, int(seed), spec.domain)


def rss_combine(coil_images: list[ComplexImage]) -> np.ndarray:
    """Root-sum-of-squares combination of multi-coil images into one magnitude image."""
    if not coil_images:
        raise ValueError("need at least one coil image")
    shape = coil_images[0].data.shape
    for c in coil_images:
        if c.data.shape != shape:
            raise ValueError(f"coil shape {c.data.shape} != {shape}")
    return np.sqrt(sum(np.abs(c.data) ** 2 for c in coil_images))


def resize_bilinear(img: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize with a corner-aligned sampling grid.

    Output position i along an axis samples the source at
    ``i * (n_src - 1) / (n_dst - 1)``, so the first and last samples always
    coincide with the source corners.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 2 or img.shape[1] < 2:
        raise ValueError("resize_bilinear expects a 2D image with dims >= 2")
    h, w = img.shape
    r = np.linspace(0.0, h - 1.0, new_h) if new_h > 1 else np.zeros(1)
    c = np.linspace(0.0, w - 1.0, new_w) if new_w > 1 else np.zeros(1)
    r0 = np.clip(np.floor(r).astype(int), 0, h - 2)
    c0 = np.clip(np.floor(c).astype(int), 0, w - 2)
    fr = (r - r0)[:, None]
    fc = (c - c0)[None, :]
    tl = img[np.ix_(r0, c0)]
    tr = img[np.ix_(r0, c0 + 1)]
    bl = img[np.ix_(r0 + 1, c0)]
    br = img[np.ix_(r0 + 1, c0 + 1)]
    top = tl * (1 - fc) + tr * fc
    bot = bl * (1 - fc) + br * fc
    return top * (1 - fr) + bot * fr


def normalize01(img: np.ndarray) -> tuple[np.ndarray, bool]:
    """Min-max normalization to [0, 1].

    Constant images cannot be normalized; they come back as all-zeros with
    the flag set (division guard) instead of raising.
    """
    img = np.asarray(img, dtype=np.float64)
    mn = img.min()
    mx = img.max()
    if mx == mn:
        return np.zeros_like(img), True
    return (img - mn) / (mx - mn), False


def write_dataset(path, samples: list[Sample]) -> None:
    """Binary dataset: magic, version, count, then (id, domain, H, W, float64 pixels)."""
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<I", DATASET_VERSION))
        fh.write(struct.pack("<I", len(samples)))
        for s in samples:
            h, w = s.gt.shape
            fh.write(struct.pack("<IBHH", s.id, _DOMAIN_CODE[s.domain], h, w))
            fh.write(np.ascontiguousarray(s.gt, dtype="<f8").tobytes())


def read_dataset(path) -> list[Sample]:
    with open(path, "rb") as fh:
        magic = binio.read_exact(fh, 4, "dataset magic")
        if magic != DATASET_MAGIC:
            raise binio.BadMagicError(f"bad dataset magic {magic!r}")
        (version,) = struct.unpack("<I", binio.read_exact(fh, 4, "dataset version"))
        if version != DATASET_VERSION:
            raise binio.VersionMismatchError(
                f"dataset version {version}, expected {DATASET_VERSION}"
            )
        (count,) = struct.unpack("<I", binio.read_exact(fh, 4, "sample count"))
        samples = []
        for i in range(count):
            sid, dom, h, w = struct.unpack("<IBHH", binio.read_exact(fh, 9, f"sample {i} header"))
            if dom not in _CODE_DOMAIN:
                raise binio.FormatError(f"unknown domain code {dom} in sample {i}")
            raw = binio.read_exact(fh, 8 * h * w, f"sample {i} pixels")
            gt = np.frombuffer(raw, dtype="<f8").reshape(h, w).copy()
            samples.append(Sample(gt, sid, _CODE_DOMAIN[dom]))
    return samples


def write_pgm(path, img: np.ndarray) -> None:
    """16-bit binary PGM (P5) export of a [0, 1] image, for visual inspection."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PGM export expects a 2D image")
    u16 = np.round(np.clip(img, 0.0, 1.0) * 65535.0).astype(">u2")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode())
        fh.write(u16.tobytes())

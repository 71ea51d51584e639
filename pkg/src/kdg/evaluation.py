"""PSNR metrics, model evaluation, and paired cross-domain analysis.

Evaluation always uses clean (noise-free) acquisition.  The paired
analysis reports the per-sample PSNR difference between two model
variants; means and population standard deviations summarize it.  Sign
conventions: in a (no-TL minus TL) pairing a negative mean says trajectory
learning generalizes better; in a (noise minus no-noise) pairing a
positive mean says the noise strategy helps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acquisition import Sampling, acquire
from .data import PhantomDomain, Sample
from .fourier import ComplexImage
from .network import ReconNet
from .perturb import NoiseKind
from .trajectory import CartesianMask, RadialTrajectory

PSNR_CAP_DB = 100.0


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB with data range 1 (gt normalized to [0,1]).

    Exact matches (and anything above the cap) return 100 dB.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    mse = float(np.mean((pred - gt) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))


@dataclass(frozen=True)
class ModelTag:
    sampling: Sampling
    trajectory_learning: bool
    noise: NoiseKind
    arch: str = "unet"

    def __str__(self) -> str:
        tl = "tl" if self.trajectory_learning else "fixed"
        return f"{self.arch}-{self.sampling.value}-{tl}-{self.noise.value}"


@dataclass(frozen=True)
class EvalRecord:
    sample_id: int
    domain: PhantomDomain
    model: str
    psnr: float


@dataclass(frozen=True)
class TrainedModel:
    """Everything needed to run inference: network, params, and the sampling pattern."""

    tag: ModelTag
    net: ReconNet
    params: list[np.ndarray]
    mask: CartesianMask | None = None
    traj: RadialTrajectory | None = None


@dataclass(frozen=True)
class PairedEvalReport:
    model_a: str
    model_b: str
    diffs: np.ndarray
    mean_diff: float
    std_diff: float
    n: int


def evaluate_model(
    model: TrainedModel,
    dataset: list[Sample],
    trajectory_override: CartesianMask | RadialTrajectory | None = None,
    bypass_net: bool = False,
) -> list[EvalRecord]:
    """Clean acquisition + forward pass + PSNR per sample.

    ``trajectory_override`` evaluates the model under a different sampling
    pattern; ``bypass_net`` scores the zero-filled input itself (the
    baseline every trained model should beat).
    """
    if not dataset:
        raise ValueError("empty dataset")
    mask, traj = model.mask, model.traj
    if trajectory_override is not None:
        if isinstance(trajectory_override, CartesianMask):
            mask, traj = trajectory_override, None
        else:
            mask, traj = None, trajectory_override
    records = []
    for sample in dataset:
        net_input, _ = acquire(ComplexImage.from_real(sample.gt), mask=mask, traj=traj)
        pred = net_input if bypass_net else model.net.forward(model.params, net_input)
        records.append(EvalRecord(sample.id, sample.domain, str(model.tag), psnr(pred, sample.gt)))
    return records


def paired_diff(records_a: list[EvalRecord], records_b: list[EvalRecord]) -> PairedEvalReport:
    """Per-sample PSNR difference (A minus B) over the common sample ids."""
    by_id_a = {r.sample_id: r for r in records_a}
    by_id_b = {r.sample_id: r for r in records_b}
    common = sorted(set(by_id_a) & set(by_id_b))
    if not common:
        raise ValueError("no common sample ids between the two record sets")
    diffs = np.array([by_id_a[i].psnr - by_id_b[i].psnr for i in common])
    return PairedEvalReport(
        model_a=records_a[0].model,
        model_b=records_b[0].model,
        diffs=diffs,
        mean_diff=float(diffs.mean()),
        std_diff=float(diffs.std()),  # population std, matching the mean +- SD convention
        n=len(common),
    )


@dataclass(frozen=True)
class CrossDomainCell:
    model: str
    domain: PhantomDomain
    mean_psnr: float
    std_psnr: float
    records: list[EvalRecord] = field(repr=False, default_factory=list)


@dataclass(frozen=True)
class CrossDomainResult:
    cells: list[CrossDomainCell]
    tl_pairs: dict[PhantomDomain, list[PairedEvalReport]]
    noise_pairs: dict[PhantomDomain, list[PairedEvalReport]]


def cross_domain_matrix(
    models: list[TrainedModel], datasets: dict[PhantomDomain, list[Sample]]
) -> CrossDomainResult:
    """Mean +- std PSNR per model and domain, plus both paired-table families.

    The TL family pairs (no-TL minus TL) for every sampling/noise combination
    present in both variants; the noise family pairs (noise minus no-noise)
    among fixed-trajectory models only, mirroring the cross-domain analyses.
    """
    if not models:
        raise ValueError("no models to evaluate")
    if not datasets:
        raise ValueError("no datasets to evaluate on")
    records: dict[tuple[str, PhantomDomain], list[EvalRecord]] = {}
    cells = []
    for model in models:
        for domain, dataset in datasets.items():
            recs = evaluate_model(model, dataset)
            records[(str(model.tag), domain)] = recs
            values = np.array([r.psnr for r in recs])
            cells.append(
                CrossDomainCell(str(model.tag), domain, float(values.mean()),
                                float(values.std()), recs)
            )

    by_tag = {str(m.tag): m.tag for m in models}
    tl_pairs: dict[PhantomDomain, list[PairedEvalReport]] = {d: [] for d in datasets}
    noise_pairs: dict[PhantomDomain, list[PairedEvalReport]] = {d: [] for d in datasets}
    for domain in datasets:
        for tag_str, tag in sorted(by_tag.items()):
            if tag.trajectory_learning:
                continue
            # (no TL) minus (TL) for the same sampling and noise kind
            twin = ModelTag(tag.sampling, True, tag.noise, tag.arch)
            if str(twin) in by_tag:
                tl_pairs[domain].append(
                    paired_diff(records[(tag_str, domain)], records[(str(twin), domain)])
                )
            # (noise) minus (no noise) among fixed-trajectory models
            if tag.noise is not NoiseKind.NONE:
                clean = ModelTag(tag.sampling, False, NoiseKind.NONE, tag.arch)
                if str(clean) in by_tag:
                    noise_pairs[domain].append(
                        paired_diff(records[(tag_str, domain)], records[(str(clean), domain)])
                    )
    return CrossDomainResult(cells, tl_pairs, noise_pairs)

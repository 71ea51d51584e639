"""Joint acquisition/reconstruction training loop.

Each step simulates acquisition of one sample (batch size is fixed at 1),
optionally perturbed by the configured domain-generalization noise,
updates the network by Adam under a warmup-then-decay learning rate, and,
when trajectory learning is on, chains the network's input gradient back
through the acquisition operators to update the sampling parameters
(Cartesian line scores via the straight-through estimator, radial control
points via the interpolation transpose) at their own learning rate.
Perturbed coordinates drive the forward pass but gradients always update
the unperturbed parameters, keeping the perturbation a data augmentation.

Reproducibility contract: all randomness flows from named child streams of
the config seed (split / init / mask / data order / noise), so identical
(config, seed) reproduce byte-identical metrics and checkpoints, and
disabling the noise gate cannot disturb the rest of the run.
"""

from __future__ import annotations

import copy
import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .acquisition import (
    Sampling,
    acquire,
    input_grad_to_coord_grads,
    input_grad_to_line_grads,
)
from .data import Sample
from .evaluation import ModelTag, TrainedModel, evaluate_model
from .fourier import ComplexImage
from .network import (
    AdamState,
    GradBundle,
    ReconNet,
    ReconNetConfig,
    adam_step,
    init_adam,
    init_params,
    save_checkpoint,
)
from .perturb import NoiseConfig, NoiseKind, apply_dg, measurement_noise
from .trajectory import (
    CartesianMask,
    CartesianScores,
    RadialTrajectory,
    binarize_quantile,
    center_band_indices,
    controls_grad_from_coords,
    gap_schedule,
    make_fixed_cartesian,
    make_fixed_radial,
    n_controls_for_gap,
    resample_controls,
    straight_through_mask_grad,
    trajectory_from_controls,
    write_mask_lines,
    write_trajectory_csv,
)

LR_FLOOR_FRACTION = 0.01  # floor at lr_max/100 so epochs 0 and T-1 still learn


class NumericAbort(RuntimeError):
    """Raised when the loss goes non-finite; carries epoch/sample context."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 1
    lr_recon_max: float = 5e-4
    lr_traj_cartesian: float = 0.025
    lr_traj_radial: float = 0.005
    trajectory_learning: bool = False
    sampling: Sampling = Sampling.CARTESIAN
    acceleration: int = 4
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0
    image_size: int = 64
    center_fraction: float = 0.1
    shots: int = 8
    points_per_shot: int = 128
    initial_gap: int = 8
    val_fraction: float = 0.1
    weight_decay: float = 0.0
    net: ReconNetConfig = field(default_factory=ReconNetConfig)

    def __post_init__(self) -> None:
        if self.batch_size != 1:
            raise ValueError("batch_size is fixed at 1")
        for name in ("lr_recon_max", "lr_traj_cartesian", "lr_traj_radial"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.acceleration < 1:
            raise ValueError("acceleration must be >= 1")

    @property
    def n_acquired(self) -> int:
        return self.image_size // self.acceleration

    def tag(self) -> ModelTag:
        return ModelTag(self.sampling, self.trajectory_learning, self.noise.kind)


def lr_schedule(t: int, total: int, lr_max: float, t_warmup: int = 4) -> float:
    """Warmup-then-decay learning rate, floored at lr_max/100."""
    floor = lr_max * LR_FLOOR_FRACTION
    if total <= 0:
        return floor
    warm = min(t_warmup, total)
    if t <= warm:
        raw = lr_max * t / warm if warm > 0 else lr_max
    else:
        raw = lr_max * (1.0 - (t - warm) / (total - warm))
    return max(floor, raw)


@dataclass
class TrainState:
    config: TrainConfig
    net: ReconNet
    params: list[np.ndarray]
    opt: AdamState
    epoch: int = 0
    # sampling parameters: exactly one family is populated
    fixed_mask: CartesianMask | None = None
    scores: np.ndarray | None = None
    fixed_traj: RadialTrajectory | None = None
    controls: np.ndarray | None = None
    gap: int = 1
    traj_opt: AdamState | None = None
    rng_data: np.random.Generator | None = None
    rng_noise: np.random.Generator | None = None
    metrics: list[dict] = field(default_factory=list)
    noise_log: list[dict] = field(default_factory=list)
    best_val_psnr: float = -np.inf
    best_params: list[np.ndarray] | None = None
    best_mask: CartesianMask | None = None
    best_traj: RadialTrajectory | None = None

    def current_mask(self) -> CartesianMask | None:
        if self.config.sampling is not Sampling.CARTESIAN:
            return None
        if self.scores is not None:
            return binarize_quantile(
                CartesianScores(self.scores, self.config.center_fraction),
                self.config.n_acquired,
            )
        return self.fixed_mask

    def current_traj(self) -> RadialTrajectory | None:
        if self.config.sampling is not Sampling.RADIAL:
            return None
        if self.controls is not None:
            return trajectory_from_controls(
                self.config.shots, self.config.points_per_shot, self.controls, self.gap
            )
        return self.fixed_traj

    def to_model(self, best: bool = True) -> TrainedModel:
        params = self.best_params if (best and self.best_params is not None) else self.params
        mask = self.best_mask if (best and self.best_params is not None) else self.current_mask()
        traj = self.best_traj if (best and self.best_params is not None) else self.current_traj()
        return TrainedModel(self.config.tag(), self.net, params, mask, traj)


def init_state(config: TrainConfig) -> TrainState:
    h = config.image_size
    net = ReconNet(config.net)
    seed = config.seed
    params = init_params(config.net, np.random.default_rng([seed, 2]))
    state = TrainState(
        config=config,
        net=net,
        params=params,
        opt=init_adam(params),
        rng_data=np.random.default_rng([seed, 4]),
        rng_noise=np.random.default_rng([seed, 5]),
    )
    if config.sampling is Sampling.CARTESIAN:
        state.fixed_mask = make_fixed_cartesian(
            h, config.n_acquired, config.center_fraction, np.random.default_rng([seed, 3])
        )
        if config.trajectory_learning:
            # start at the fixed mask: its lines dominate the small score noise
            jitter = np.random.default_rng([seed, 6]).normal(0.0, 0.01, h)
            state.scores = state.fixed_mask.lines.astype(np.float64) + jitter
            state.traj_opt = init_adam([state.scores])
    else:
        state.fixed_traj = make_fixed_radial(config.shots, config.points_per_shot, h, h)
        if config.trajectory_learning:
            state.gap = gap_schedule(0, max(config.epochs, 2), config.initial_gap)
            state.controls = resample_controls(state.fixed_traj, state.gap)
            state.traj_opt = init_adam([state.controls])
    return state


def _adv_grad_provider(state: TrainState, gt: ComplexImage, target: np.ndarray,
                       mask: CartesianMask | None, traj: RadialTrajectory | None):
    """Loss gradient w.r.t. the sampling parameters at the unperturbed acquisition."""

    def provider() -> np.ndarray:
        net_input, ctx = acquire(gt, mask=mask, traj=traj)
        _, bundle = state.net.backward(state.params, net_input, target)
        if mask is not None:
            return input_grad_to_line_grads(ctx, bundle.input_grad)
        return input_grad_to_coord_grads(ctx, bundle.input_grad)

    return provider


def train_step(state: TrainState, sample: Sample) -> float:
    """One acquisition + reconstruction + update on a single sample."""
    cfg = state.config
    t, total = state.epoch, cfg.epochs
    gt = ComplexImage.from_real(sample.gt)
    base_mask = state.current_mask()
    base_traj = state.current_traj()

    provider = None
    if cfg.noise.kind is NoiseKind.TRAJECTORY_ADV:
        provider = _adv_grad_provider(state, gt, sample.gt, base_mask, base_traj)
    outcome = apply_dg(gt, base_mask, base_traj, cfg.noise, t, total, state.rng_noise, provider)
    state.noise_log.append({
        "epoch": t,
        "sample": sample.id,
        "applied": int(outcome.applied),
        "kind": cfg.noise.kind.value,
        "strength": outcome.strength,
    })

    ksp_extra = None
    if outcome.applied and cfg.noise.sigma_measurement > 0:
        shape = (gt.height, gt.width) if outcome.mask is not None else (outcome.traj.n_points,)
        ksp_extra = measurement_noise(
            np.zeros(shape, dtype=np.complex128),
            cfg.noise.sigma_measurement, outcome.strength, state.rng_noise,
        )

    net_input, ctx = acquire(outcome.gt, mask=outcome.mask, traj=outcome.traj,
                             ksp_extra=ksp_extra)
    loss, bundle = state.net.backward(state.params, net_input, sample.gt)
    if not np.isfinite(loss):
        raise NumericAbort(f"non-finite loss {loss} at epoch {t}, sample {sample.id}")

    lr_t = lr_schedule(t, total, cfg.lr_recon_max)
    state.params = adam_step(state.params, bundle.param_grads, lr_t, state.opt,
                             weight_decay=cfg.weight_decay)

    if cfg.trajectory_learning:
        if cfg.sampling is Sampling.CARTESIAN:
            line_grads = input_grad_to_line_grads(ctx, bundle.input_grad)
            band = center_band_indices(cfg.image_size, cfg.n_acquired, cfg.center_fraction)
            score_grads = straight_through_mask_grad(line_grads, band)
            lr_u = lr_schedule(t, total, cfg.lr_traj_cartesian)
            (state.scores,) = adam_step([state.scores], [score_grads], lr_u, state.traj_opt)
        else:
            coord_grads = input_grad_to_coord_grads(ctx, bundle.input_grad)
            ctrl_grads = controls_grad_from_coords(coord_grads, state.controls,
                                                   cfg.points_per_shot)
            lr_u = lr_schedule(t, total, cfg.lr_traj_radial)
            (state.controls,) = adam_step([state.controls], [ctrl_grads], lr_u, state.traj_opt)
    return loss


def _noise_strength(cfg: TrainConfig, epoch: int) -> float:
    if cfg.noise.kind is NoiseKind.NONE or cfg.epochs <= cfg.noise.t_warmup:
        return 0.0
    from .perturb import noise_schedule

    return noise_schedule(epoch, cfg.epochs, cfg.noise.t_warmup, cfg.noise.eps_max)


def train(config: TrainConfig, dataset: list[Sample], out_dir=None) -> TrainState:
    """Run the full loop; optionally write metrics, logs, and the best checkpoint."""
    if not dataset:
        raise ValueError("empty dataset")
    h = config.image_size
    for s in dataset:
        if s.gt.shape != (h, h):
            raise ValueError(f"sample {s.id} has shape {s.gt.shape}, expected ({h}, {h})")

    perm = np.random.default_rng([config.seed, 1]).permutation(len(dataset))
    n_val = int(round(config.val_fraction * len(dataset)))
    n_val = min(n_val, len(dataset) - 1)
    val_set = [dataset[i] for i in perm[:n_val]]
    train_set = [dataset[i] for i in perm[n_val:]]

    state = init_state(config)
    for epoch in range(config.epochs):
        state.epoch = epoch
        if config.sampling is Sampling.RADIAL and config.trajectory_learning:
            gap = gap_schedule(epoch, max(config.epochs, 2), config.initial_gap)
            if gap != state.gap:
                dense = state.current_traj()
                state.gap = gap
                state.controls = resample_controls(dense, gap)
                state.traj_opt = init_adam([state.controls])  # moments refer to old variables
        order = state.rng_data.permutation(len(train_set))
        losses = [train_step(state, train_set[i]) for i in order]

        val_psnr = float("nan")
        if val_set:
            model = TrainedModel(config.tag(), state.net, state.params,
                                 state.current_mask(), state.current_traj())
            recs = evaluate_model(model, val_set)
            val_psnr = float(np.mean([r.psnr for r in recs]))
        if val_set and (val_psnr > state.best_val_psnr):
            state.best_val_psnr = val_psnr
            state.best_params = [p.copy() for p in state.params]
            state.best_mask = state.current_mask()
            state.best_traj = state.current_traj()
        state.metrics.append({
            "epoch": epoch,
            "mean_loss": float(np.mean(losses)) if losses else float("nan"),
            "val_psnr": val_psnr,
            "gap": state.gap,
            "lr": lr_schedule(epoch, config.epochs, config.lr_recon_max),
            "noise_strength": _noise_strength(config, epoch),
        })
    state.epoch = config.epochs
    if state.best_params is None:
        state.best_params = [p.copy() for p in state.params]
        state.best_mask = state.current_mask()
        state.best_traj = state.current_traj()
    if out_dir is not None:
        write_run_outputs(state, out_dir)
    return state


def write_run_outputs(state: TrainState, out_dir) -> None:
    """Persist checkpoint (best-by-validation), sampling pattern, metrics, and logs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = state.to_model(best=True)
    save_checkpoint(out / "checkpoint.kdgw", state.config.net, model.params)
    if model.mask is not None:
        write_mask_lines(model.mask, out / "mask.txt")
    if model.traj is not None:
        write_trajectory_csv(model.traj, out / "trajectory.csv")
    _write_metrics_csv(out / "metrics.csv", state.metrics)
    _write_noise_log_csv(out / "noise_log.csv", state.noise_log)
    (out / "train_config.json").write_text(train_config_to_json(state.config))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_metrics_csv(path, rows: list[dict]) -> None:
    cols = ["epoch", "mean_loss", "val_psnr", "gap", "lr", "noise_strength"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in cols])


def _write_noise_log_csv(path, rows: list[dict]) -> None:
    cols = ["epoch", "sample", "applied", "kind", "strength"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in cols])


def train_config_to_json(config: TrainConfig) -> str:
    from .config import to_plain_dict

    return json.dumps(to_plain_dict(config), indent=2) + "\n"


def train_config_from_json(text: str) -> TrainConfig:
    from .config import dataclass_from_dict

    return dataclass_from_dict(TrainConfig, json.loads(text), "train")

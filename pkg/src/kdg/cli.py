"""Command-line entry point: dataset generation, training, evaluation, export.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import binio
from .acquisition import Sampling, acquire
from .config import (
    ConfigError,
    RunConfig,
    load_run_config,
    run_config_to_json,
    to_plain_dict,
)
from .data import (
    PhantomDomain,
    generate_phantom,
    read_dataset,
    source_spec,
    target_spec,
    write_dataset,
    write_pgm,
)
from .evaluation import CrossDomainResult, TrainedModel, cross_domain_matrix
from .fourier import ComplexImage
from .network import ReconNet, load_checkpoint
from .perturb import NoiseKind
from .trajectory import read_mask_lines, read_trajectory_csv, write_mask_lines, write_trajectory_csv
from .training import NumericAbort, train, train_config_from_json


class DataError(RuntimeError):
    """Missing or malformed data artifacts (datasets, checkpoints, run dirs)."""


def cmd_gen_data(config: RunConfig) -> None:
    """Generate the source/target phantom datasets plus a manifest."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dc = config.data
    if dc.size < 16:
        raise ConfigError("config.data.size: phantom size must be >= 16")
    if dc.n_source < 1 or dc.n_target < 1:
        raise ConfigError("config.data.n_source/n_target: counts must be >= 1")
    src = [generate_phantom(source_spec(dc.size), dc.seed + i) for i in range(dc.n_source)]
    tgt = [generate_phantom(target_spec(dc.size), dc.seed + i) for i in range(dc.n_target)]
    write_dataset(out / dc.source_path, src)
    write_dataset(out / dc.target_path, tgt)
    manifest = {
        "size": dc.size,
        "seed": dc.seed,
        "source": {"path": dc.source_path, "count": dc.n_source},
        "target": {"path": dc.target_path, "count": dc.n_target},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {dc.n_source} source + {dc.n_target} target phantoms under {out}")


GRID_AXES = [
    (Sampling.CARTESIAN, Sampling.RADIAL),
    (False, True),
    (NoiseKind.NONE, NoiseKind.IMAGE, NoiseKind.TRAJECTORY, NoiseKind.TRAJECTORY_ADV),
]


def grid_configs(base) -> list:
    """Expand a train config into the 2 (sampling) x 2 (TL) x 4 (noise) grid."""
    out = []
    for sampling in GRID_AXES[0]:
        for tl in GRID_AXES[1]:
            for kind in GRID_AXES[2]:
                out.append(dataclasses.replace(
                    base,
                    sampling=sampling,
                    trajectory_learning=tl,
                    noise=dataclasses.replace(base.noise, kind=kind),
                ))
    return out


def _load_train_dataset(config: RunConfig):
    path = Path(config.out_dir) / config.data.source_path
    if not path.exists():
        raise DataError(f"training dataset not found: {path} (run gen-data first)")
    return read_dataset(path)


def cmd_train(config: RunConfig, grid: bool = False) -> None:
    """Train one model (or the full 16-model grid) into run directories."""
    dataset = _load_train_dataset(config)
    out = Path(config.out_dir)
    if grid:
        for tc in grid_configs(config.train):
            run_dir = out / "grid" / str(tc.tag())
            state = train(tc, dataset, run_dir)
            (run_dir / "run_config.json").write_text(run_config_to_json(
                dataclasses.replace(config, train=tc)))
            print(f"{tc.tag()}: best val PSNR {state.best_val_psnr:.3f} dB -> {run_dir}")
    else:
        run_dir = out / str(config.train.tag())
        state = train(config.train, dataset, run_dir)
        (run_dir / "run_config.json").write_text(run_config_to_json(config))
        print(f"{config.train.tag()}: best val PSNR {state.best_val_psnr:.3f} dB -> {run_dir}")


def load_run_model(run_dir) -> TrainedModel:
    """Rebuild a TrainedModel from a run directory's artifacts."""
    run_dir = Path(run_dir)
    ckpt = run_dir / "checkpoint.kdgw"
    if not ckpt.exists():
        raise DataError(f"missing checkpoint: {ckpt}")
    try:
        net_config, params = load_checkpoint(ckpt)
    except binio.FormatError as exc:
        raise DataError(f"{ckpt}: {exc}") from exc
    tc_path = run_dir / "train_config.json"
    if not tc_path.exists():
        raise DataError(f"missing train config echo: {tc_path}")
    tc = train_config_from_json(tc_path.read_text())
    mask = traj = None
    if (run_dir / "mask.txt").exists():
        mask = read_mask_lines(run_dir / "mask.txt")
    if (run_dir / "trajectory.csv").exists():
        traj = read_trajectory_csv(run_dir / "trajectory.csv")
    if mask is None and traj is None:
        raise DataError(f"run {run_dir} has neither mask.txt nor trajectory.csv")
    return TrainedModel(tc.tag(), ReconNet(net_config), params, mask, traj)


def _write_summary_csv(path, result: CrossDomainResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "domain", "mean_psnr", "std_psnr"])
        for cell in result.cells:
            writer.writerow([cell.model, cell.domain.value,
                             repr(cell.mean_psnr), repr(cell.std_psnr)])


def _write_paired_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_a", "model_b", "mean_diff", "std_diff", "n"])
        for r in reports:
            writer.writerow([r.model_a, r.model_b, repr(r.mean_diff), repr(r.std_diff), r.n])


def cmd_eval(config: RunConfig) -> None:
    """Evaluate every run under runs_root on both domains; emit summary and paired CSVs."""
    out = Path(config.out_dir)
    runs_root = out / config.eval.runs_root
    if not runs_root.exists():
        raise DataError(f"runs root not found: {runs_root}")
    run_dirs = sorted(d for d in runs_root.iterdir() if (d / "checkpoint.kdgw").exists())
    if not run_dirs:
        raise DataError(f"no runs with checkpoints under {runs_root}")
    models = [load_run_model(d) for d in run_dirs]

    datasets = {}
    for domain, rel in ((PhantomDomain.SOURCE, config.eval.source_path),
                        (PhantomDomain.TARGET, config.eval.target_path)):
        path = out / rel
        if not path.exists():
            raise DataError(f"evaluation dataset not found: {path}")
        samples = read_dataset(path)
        if config.eval.max_samples:
            samples = samples[: config.eval.max_samples]
        datasets[domain] = samples

    result = cross_domain_matrix(models, datasets)
    _write_summary_csv(out / "summary.csv", result)
    for domain in datasets:
        _write_paired_csv(out / f"paired_tl_{domain.value}.csv", result.tl_pairs[domain])
        _write_paired_csv(out / f"paired_noise_{domain.value}.csv", result.noise_pairs[domain])
    print(f"evaluated {len(models)} models on {len(datasets)} domains -> {out / 'summary.csv'}")


def cmd_export(config: RunConfig) -> None:
    """Dump (input, recon, gt) PGM triptychs and the sampling pattern for a run."""
    out = Path(config.out_dir)
    run_dir = out / config.export.run_dir if config.export.run_dir else out
    model = load_run_model(run_dir)
    data_path = out / config.export.dataset_path
    if not data_path.exists():
        raise DataError(f"dataset not found: {data_path}")
    samples = read_dataset(data_path)
    ids = set(config.export.sample_ids) if config.export.sample_ids else None
    chosen = [s for s in samples if ids is None or s.id in ids]
    if ids is None:
        chosen = chosen[: config.export.count]
    if not chosen:
        raise DataError("no matching samples to export")
    for s in chosen:
        net_input, _ = acquire(ComplexImage.from_real(s.gt), mask=model.mask, traj=model.traj)
        recon = model.net.forward(model.params, net_input)
        write_pgm(run_dir / f"{s.id}_input.pgm", net_input)
        write_pgm(run_dir / f"{s.id}_recon.pgm", recon)
        write_pgm(run_dir / f"{s.id}_gt.pgm", s.gt)
    if model.traj is not None:
        write_trajectory_csv(model.traj, run_dir / "trajectory.csv")
    if model.mask is not None:
        write_mask_lines(model.mask, run_dir / "mask.txt")
    print(f"exported {len(chosen)} sample(s) to {run_dir}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kdg",
        description="k-space acquisition learning and trajectory-noise domain generalization",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("gen-data", "generate the two-domain phantom datasets"),
        ("train", "train one model or the 16-model grid"),
        ("eval", "cross-domain evaluation and paired tables"),
        ("export", "export PGM triptychs and trajectory/mask files"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, default=None, help="JSON run config path")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", type=str, default=None, help="output directory override")
        if name == "train":
            p.add_argument("--grid", action="store_true",
                           help="expand into the 2x2x4 = 16-run sweep")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_run_config(args.config, args.seed, args.out)
        if args.command == "gen-data":
            cmd_gen_data(config)
        elif args.command == "train":
            cmd_train(config, grid=args.grid)
        elif args.command == "eval":
            cmd_eval(config)
        elif args.command == "export":
            cmd_export(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, binio.FormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())

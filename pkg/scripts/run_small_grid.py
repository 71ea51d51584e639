#!/usr/bin/env python3
"""Run the full 16-model grid end to end at a small, laptop-friendly scale.

Generates the two-domain phantom datasets, trains the 2 (sampling) x
2 (trajectory learning) x 4 (noise) grid, evaluates every model on both
domains, and leaves the summary and paired-difference CSVs in the output
directory.

Usage:
    python scripts/run_small_grid.py [--out runs/small_grid] [--seed 0]
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from kdg.cli import main as kdg_main
from kdg.config import RunConfig, run_config_to_json
from kdg.network import ReconNetConfig


def build_config(out_dir: str, seed: int) -> RunConfig:
    base = RunConfig()
    return dataclasses.replace(
        base,
        seed=seed,
        out_dir=out_dir,
        data=dataclasses.replace(base.data, n_source=60, n_target=60, size=32, seed=seed),
        train=dataclasses.replace(
            base.train,
            epochs=8,
            image_size=32,
            shots=6,
            points_per_shot=48,
            lr_recon_max=1e-3,
            seed=seed,
            net=ReconNetConfig(depth=2, base_channels=8),
        ),
        eval=dataclasses.replace(base.eval, max_samples=32),
    )


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/small_grid")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_path = out / "config.json"
    cfg_path.write_text(run_config_to_json(build_config(str(out), args.seed)))

    for argv in (["gen-data", "--config", str(cfg_path)],
                 ["train", "--config", str(cfg_path), "--grid"],
                 ["eval", "--config", str(cfg_path)]):
        code = kdg_main(argv)
        if code != 0:
            return code
    print(f"done; see {out / 'summary.csv'} and the paired_*.csv tables")
    return 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Reproduce the cross-domain observation tables at desk scale, over 5 seeds.

Runs the radial trajectory-learning study (fixed vs learned spokes) and the
Cartesian noise study (clean vs trajectory noise vs image noise on a fixed
mask), then prints and saves paired-difference tables in the layout of the
cross-domain analyses, plus the three directional gates:

* learned radial >= fixed radial in-domain (mean PSNR),
* paired (no-TL minus TL) on the target domain negative,
* trajectory-noise-trained above image-noise-trained on the target domain.

This is the expensive script (~30 min on a laptop CPU).

Usage:
    python scripts/observation_tables.py [--out runs/observations] [--seeds 0 1 2 3 4]
"""

import argparse
import sys
from pathlib import Path

from kdg.experiments import (
    StudyConfig,
    format_paired_table,
    gate_noise_cross_domain,
    gate_tl_cross_domain,
    gate_tl_in_domain,
    make_eval_sets,
    noise_paired_table,
    run_cartesian_noise_study,
    run_radial_tl_study,
    tl_paired_table,
    write_paired_table_csv,
)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/observations")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    study = StudyConfig(seeds=tuple(args.seeds))
    eval_sets = make_eval_sets(study)

    print("radial trajectory-learning study:")
    radial = run_radial_tl_study(study, eval_sets, verbose=True)
    print("cartesian noise study:")
    cartesian = run_cartesian_noise_study(study, eval_sets, verbose=True)

    tl_rows = tl_paired_table(radial)
    noise_rows = noise_paired_table(cartesian)
    write_paired_table_csv(out / "paired_tl_radial.csv", tl_rows)
    write_paired_table_csv(out / "paired_noise_cartesian.csv", noise_rows)

    print()
    print(format_paired_table(tl_rows, "Cross-domain paired PSNR differences (No TL - With TL)"))
    print()
    print(format_paired_table(noise_rows, "Cross-domain PSNR improvement, fixed masks (Noise - No Noise)"))
    print()
    for gate in (gate_tl_in_domain(radial), gate_tl_cross_domain(radial),
                 gate_noise_cross_domain(cartesian)):
        status = "PASS" if gate.passed else "FAIL"
        print(f"[{status}] {gate.description}: {gate.wins}/{gate.total} seeds, "
              f"per-seed {[round(v, 3) for v in gate.per_seed]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Run the default two-notation experiment twice and check the outputs match.

    python3 scripts/run_experiment.py --out runs/default
"""

import argparse
import filecmp
import time
from pathlib import Path

from structok.corpus import default_corpus_dir, load_manifest
from structok.experiment import RunConfig, all_cells_populated, format_report, run_experiment


def tree_equal(a: Path, b: Path) -> bool:
    cmp = filecmp.dircmp(a, b, ignore=["run.log"])
    if cmp.left_only or cmp.right_only or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    if mismatch or errors:
        return False
    return all(tree_equal(a / d, b / d) for d in cmp.common_dirs)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/default")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--once", action="store_true", help="skip the determinism rerun")
    args = ap.parse_args()
    manifest = load_manifest(default_corpus_dir() / "manifest.json")
    out = Path(args.out)
    t0 = time.perf_counter()
    report = run_experiment(manifest, RunConfig(seed=args.seed), out / "a")
    print(format_report(report))
    print(f"elapsed {time.perf_counter() - t0:.1f} s; all cells populated: "
          f"{all_cells_populated(report)}")
    if not args.once:
        run_experiment(manifest, RunConfig(seed=args.seed), out / "b")
        print("rerun identical:", tree_equal(out / "a", out / "b"))


if __name__ == "__main__":
    main()

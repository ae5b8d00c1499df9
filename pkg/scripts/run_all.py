"""Run every shipped experiment config and summarise the outcomes.

    python scripts/run_all.py                 # all nine experiments
    python scripts/run_all.py nls smoothing   # a subset
    python scripts/run_all.py --jobs 4 --out results

Each experiment writes its CSV, JSON sidecar and manifest under ``<out>/<id>``.
Exit status is the worst of the individual runs (0 < 2 < 1).
"""
import argparse
import sys
import time
from pathlib import Path

from dlab.cli import main as dlab_main
from dlab.experiments import REGISTRY

CONFIGS = Path(__file__).resolve().parent / "configs"


def run(ids, out: Path, jobs: int) -> int:
    rows, worst = [], 0
    for eid in ids:
        t0 = time.perf_counter()
        code = dlab_main(["run", str(CONFIGS / f"{eid}.json"), "--jobs", str(jobs),
                          "--set", f"output_dir={(out / eid).as_posix()}"])
        rows.append((eid, code, time.perf_counter() - t0))
        worst = max(worst, code, key=lambda c: {0: 0, 2: 1, 1: 2}[c])
    print()
    for eid, code, dt in rows:
        print(f"{eid:<16} {({0: 'PASS', 2: 'FAIL', 1: 'ERROR'})[code]:<6} {dt:8.1f} s")
    return worst


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("ids", nargs="*", default=list(REGISTRY))
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--jobs", type=int, default=1)
    a = ap.parse_args()
    unknown = [i for i in a.ids if i not in REGISTRY]
    if unknown:
        sys.exit(f"unknown experiment(s): {', '.join(unknown)}")
    sys.exit(run(a.ids, a.out, a.jobs))

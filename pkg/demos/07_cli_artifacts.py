"""The experiment runner end to end, including byte-exact reproducibility.

Writes a JSON config, runs the CLI twice into two directories, shows the
exit code and the report summary, and verifies that every CSV artifact is
byte-identical between the runs.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path


def main() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        config = {
            "scenario": "example1",
            "steps": 64,
            "paths": 500,
            "seed": 1,
            "output_dir": str(tmp / "run_a"),
        }
        cfg_path = tmp / "config.json"
        cfg_path.write_text(json.dumps(config, indent=2))
        print("config:", json.dumps(config, indent=2))

        outs = []
        for out in (tmp / "run_a", tmp / "run_b"):
            proc = subprocess.run(
                [sys.executable, "-m", "slqkit", "--config", str(cfg_path),
                 "--out", str(out)],
                capture_output=True, text=True)
            print(f"\n$ slqkit --config config.json --out {out.name}")
            print(proc.stdout.strip())
            print(f"exit code: {proc.returncode}")
            outs.append(out)

        report = json.loads((outs[0] / "report.json").read_text())
        print("\nreport.json highlights:")
        print(f"  solver: {report['riccati_summary']['solver_tag']}, "
              f"P at start = {report['riccati_summary']['P_at_start_mean']:.4f}")
        print(f"  all checks passed: {report['all_passed']}")
        print(f"  artifacts: {report['manifest']}")

        print("\nbyte-identity across the two runs:")
        for name in ("riccati.csv", "sweep.csv", "regularity.csv"):
            same = (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
            print(f"  {name}: {'identical' if same else 'DIFFERS'}")


if __name__ == "__main__":
    main()

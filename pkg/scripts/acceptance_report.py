"""Run the acceptance suite and print only its per-criterion summary lines."""

import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-s", str(ROOT / "tests" / "test_acceptance.py")],
        capture_output=True, text=True, cwd=ROOT,
    )
    for line in proc.stdout.splitlines():
        if line.startswith("criterion "):
            print(line)
    raise SystemExit(proc.returncode)

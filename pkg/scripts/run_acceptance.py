#!/usr/bin/env python3
"""Run the full-size acceptance criteria and print one PASS/FAIL line each.

Thin wrapper over ``pytest tests/test_acceptance.py``; extra arguments are
passed through (e.g. ``-k burke``).
"""

import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    cmd = [sys.executable, "-m", "pytest", str(ROOT / "tests" / "test_acceptance.py"), "-q", *sys.argv[1:]]
    sys.exit(subprocess.call(cmd, cwd=ROOT))

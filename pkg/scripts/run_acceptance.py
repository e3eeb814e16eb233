#!/usr/bin/env python3
"""Run the acceptance suite and print one pass/fail line per criterion."""
import sys
from pathlib import Path

import pytest

if __name__ == "__main__":
    here = Path(__file__).resolve().parent.parent / "tests" / "test_acceptance.py"
    sys.exit(pytest.main([str(here), "-q", "-s", *sys.argv[1:]]))

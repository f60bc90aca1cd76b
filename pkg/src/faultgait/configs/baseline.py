"""Committed baseline thresholds for trend and accuracy checks.

The numbers in baseline.json were measured on the committed desk-profile
baseline run (root seed 0) and are regenerated by
``scripts/regen_baseline.py``; regenerate them whenever the desk profile
or reward defaults change.
"""

import json
from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=1)
def thresholds() -> dict:
    text = resources.files("faultgait").joinpath("configs/baseline.json").read_text()
    return json.loads(text)

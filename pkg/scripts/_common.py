"""Small helpers shared by the experiment scripts."""
from __future__ import annotations

import json
from pathlib import Path

from treerange.harness import ExperimentConfig, run


def run_experiment(outdir: Path, tag: str, **kwargs) -> dict:
    """Run one harness experiment, write <outdir>/<tag>.csv and return the parsed row."""
    outdir.mkdir(parents=True, exist_ok=True)
    options = kwargs.pop("options", {})
    cfg = ExperimentConfig(options=options, out=str(outdir / f"{tag}.csv"), **kwargs)
    rows, _ = run(cfg)
    row = rows[0]
    return {"value": float(row[6]), "stderr": float(row[7]), "extra": json.loads(row[8]),
            "elapsed_s": float(row[9]) / 1e3}

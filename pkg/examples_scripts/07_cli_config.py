"""Driving the command-line tool from a JSON configuration.

Writes a config for the unit circle, validates it, runs the lprime, sweep,
oracle and fit stages into a temporary directory and prints the files it
produced. The same is available as ``thin-inductor validate|run cfg.json``.
"""

import json
import tempfile
from pathlib import Path

from thin_inductor.cli import run, validate

with tempfile.TemporaryDirectory() as tmp:
    cfg = {"curve": {"preset": "circle", "R": 1.0}, "delta": 0.4,
           "stages": ["lprime", "sweep", "oracle", "fit"], "sweep": {"count": 4},
           "output_dir": str(Path(tmp) / "out")}
    path = Path(tmp) / "circle.json"
    path.write_text(json.dumps(cfg, indent=2))
    code, payload = validate(path)
    print("validate:", code, {k: payload[k] for k in ("delta", "length")})
    code, report = run(path)
    print("run exit code:", code, "fit slope:", report["stages"]["fit"]["result"]["slope"])
    out = Path(cfg["output_dir"])
    for f in sorted(out.iterdir()):
        print(f"--- {f.name}")
        print(f.read_text()[:400])

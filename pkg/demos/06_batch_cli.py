#!/usr/bin/env python3
"""Drive the batch front end programmatically: problem file in, result out.

The same flow is available from the shell as

    bandctrl --input problem.json --output result.json

with exit codes 0 (solved + certified), 1 (spec errors), 2 (infeasible),
3 (all-abnormal regime), 4 (non-convergence).
"""

import json
import tempfile
from pathlib import Path

from bandctrl.cli import run, spectrum_report

problem = {
    "horizon": 8,
    "dynamics": {"builtin": "scalar_integrator"},
    "cost": {"Q": [[0.0]], "R": [[1.0]]},
    "boundary": {"x0": [0.0], "xf": [4.0]},
    "banned_frequencies": [[2, 6]],
    "solver": "transfer_freq",
}

with tempfile.TemporaryDirectory() as tmp:
    inp = Path(tmp) / "problem.json"
    out = Path(tmp) / "result.json"
    inp.write_text(json.dumps(problem, indent=2))

    code = run(str(inp), str(out), quiet=True)
    result = json.loads(out.read_text())
    print(f"exit code {code}, status {result['status']}, cost {result['cost']:.6f}")
    print(f"certificate passed: {result['certificate']['passed']}")
    print(f"normality: {result['normality']['classification']}")

    print("\nchannel  frequency  magnitude     banned")
    for row in spectrum_report(result):
        flag = "yes" if row["banned"] else "no"
        print(f"{row['channel']:7d}  {row['frequency']:9d}  {row['magnitude']:.6e}  {flag}")

    # overriding fields from the command line: --set boundary.xf=[2.0]
    code = run(str(inp), str(out), overrides=["boundary.xf=[2.0]"], quiet=True)
    result = json.loads(out.read_text())
    print(f"\nwith xf overridden to 2.0: cost {result['cost']:.6f} (exit {code})")

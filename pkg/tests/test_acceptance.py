"""End-to-end acceptance run on the default configuration.

The whole pipeline runs once per session (tens of minutes on one core). Set
``CONTRASTBANDS_ACCEPTANCE_DIR`` to keep the artifacts; a rerun then reuses
every cached stage whose parameter echo still matches.
"""

import json
import os
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from contrastbands import cli
from contrastbands.config import from_dict

CRITERIA = {
    1: "discretization oracle",
    2: "band limits approach the Neumann levels",
    3: "open gaps at the smallest eps",
    4: "interface eigenvalue near the enlarged-cell level",
    5: "interface band inside the bulk gap",
    6: "interface mode localization",
    7: "strip spectrum inside bulk bands",
    8: "localized X-defect eigenvalue",
    9: "structural invariants",
}
RESULTS: dict = {}


@pytest.fixture(scope="session")
def default_run(tmp_path_factory):
    env = os.environ.get("CONTRASTBANDS_ACCEPTANCE_DIR")
    out = Path(env) if env else tmp_path_factory.mktemp("acceptance")
    code = cli.run_pipeline(from_dict({}), ["all"], out)
    summary_path = out / "summary.json"
    summary = json.loads(summary_path.read_text()) if summary_path.exists() else None
    return code, summary, out


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(default_run, number, capsys):
    code, summary, _ = default_run
    assert summary is not None, f"pipeline exited with {code} before writing a summary"
    entry = next(c for c in summary["criteria"] if c["number"] == number)
    passed = entry["verdict"] == "PASS"
    line = f"criterion {number} ({CRITERIA[number]}): {'PASS' if passed else 'FAIL'}"
    RESULTS[number] = line
    with capsys.disabled():
        print("\n" + line)
    assert passed, json.dumps(entry["detail"], indent=1)


def test_exit_code_and_summary(default_run):
    code, summary, out = default_run
    assert code == 0
    a, b = summary["gap"]
    lo, hi = summary["interface_band"]
    assert a < lo <= hi < b
    for name in ("limit.json", "bands_eps0.08.csv", "bands_eps0.04.csv", "bands_eps0.02.csv",
                 "gaps.json", "interface.csv", "xdefect.json", "summary.json", "diagram.svg"):
        assert (out / name).exists(), name


def test_diagram_level_in_gap(default_run):
    _, summary, out = default_run
    root = ET.fromstring((out / "diagram.svg").read_text())
    ns = "{http://www.w3.org/2000/svg}"
    shaded = [(float(r.get("y")), float(r.get("y")) + float(r.get("height")))
              for r in root.iter(ns + "rect") if r.get("fill-opacity")]
    red = [l for l in root.iter(ns + "line") if l.get("stroke") == "#cb181d"]
    assert red
    y = float(red[0].get("y1"))
    assert not any(lo <= y <= hi for lo, hi in shaded)

import math
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from contrastbands.bands import BandTable, gap_detect, phase_grid
from contrastbands.diagram import PHASE_PATH, emit_band_diagram, path_samples
from contrastbands.waveguide import InterfaceBand

NS = "{http://www.w3.org/2000/svg}"


def synthetic_table(grid=5):
    ph = phase_grid(grid)
    b1 = 0.5 * (1 - np.cos(ph[:, 0])) * 0.3 + 0.1 * (1 - np.cos(ph[:, 1]))
    b2 = 4.0 + 0.5 * np.cos(ph[:, 0]) + 0.2 * np.cos(ph[:, 1])
    b3 = 9.0 + 0.4 * np.cos(ph[:, 0] + ph[:, 1])
    return BandTable(ph, np.stack([b1, b2, b3], axis=1), {"eps": 0.04})


def synthetic_interface():
    z = np.linspace(0, math.pi, 5)
    v = 2.2 + 0.2 * np.sin(z / 2)
    ones = np.ones_like(z)
    return InterfaceBand(z, v, ones, 0 * ones, 0 * ones, 6, (0.65, 3.3), 2.238)


def shaded_ranges(svg):
    root = ET.fromstring(svg)
    out = []
    for r in root.iter(NS + "rect"):
        if r.get("fill-opacity"):
            y, h = float(r.get("y")), float(r.get("height"))
            out.append((y, y + h))
    return root, out


def test_identical_inputs_identical_bytes():
    t = synthetic_table()
    a = emit_band_diagram([t], gap_detect(t), synthetic_interface(), [0.0, 5.0355], 2.238)
    b = emit_band_diagram([t], gap_detect(t), synthetic_interface(), [0.0, 5.0355], 2.238)
    assert a == b
    ET.fromstring(a)


def test_bands_only_diagram():
    t = synthetic_table()
    svg = emit_band_diagram([t])
    root = ET.fromstring(svg)
    assert len(list(root.iter(NS + "polyline"))) == t.count
    assert "#cb181d" not in svg


def test_interface_line_sits_in_unshaded_gap():
    t = synthetic_table()
    svg = emit_band_diagram([t], gap_detect(t), synthetic_interface(), [], 2.238)
    root, shaded = shaded_ranges(svg)
    dashed = [l for l in root.iter(NS + "line") if l.get("stroke") == "#cb181d"]
    assert dashed
    y = float(dashed[0].get("y1"))
    assert not any(lo <= y <= hi for lo, hi in shaded)
    assert len(list(root.iter(NS + "circle"))) == 5


def test_path_samples_follow_loop():
    t = synthetic_table()
    s, vals, total = path_samples(t)
    assert total == pytest.approx(4 * math.pi)
    assert np.all(np.diff(s) >= 0)
    assert len(s) == 4 * 5
    assert PHASE_PATH[0] == PHASE_PATH[-1]


def test_needs_a_table():
    with pytest.raises(ValueError):
        emit_band_diagram([])


def test_numbers_are_fixed_precision():
    svg = emit_band_diagram([synthetic_table()])
    assert not re.search(r"\d\.\d{3,}", svg)

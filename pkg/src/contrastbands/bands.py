"""Brillouin-zone sweeps, band intervals, gaps and the Neumann limit spectrum."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np

from . import fem
from ._pool import parallel_map
from .coeff import ContrastField, Lattice, Periodic, near_degenerate_levels
from .eig import EigenSolverError, solve_smallest


class NonMonotoneError(ValueError):
    """Band-limit errors do not decrease with eps (usually an under-resolved mesh)."""


# -- limit spectra ----------------------------------------------------------

@dataclass(frozen=True)
class LimitLevel:
    mu: float
    j: int
    k: int
    c: float  # c^2 = (1+d_j0)(1+d_k0)/(l1 l2), factor of cos(pi j (x1+l1)/(2 l1)) cos(pi k (x2+l2)/(2 l2))

    @property
    def unit_factor(self) -> float:
        """Factor giving the cosine product unit L2 norm on the cell."""
        return self.c / ((1 + (self.j == 0)) * (1 + (self.k == 0)))


@dataclass
class LimitSpectrum:
    entries: list[LimitLevel]
    lattice: Lattice
    near_degenerate: list = field(default_factory=list)

    @property
    def values(self) -> np.ndarray:
        return np.array([e.mu for e in self.entries])

    def mu(self, n: int) -> float:
        """1-based level ``mu_n``."""
        return self.entries[n - 1].mu

    def to_json(self) -> dict:
        return {
            "lattice": {"l1": self.lattice.l1, "l2": self.lattice.l2},
            "levels": [{"n": i + 1, "mu": e.mu, "j": e.j, "k": e.k, "c": e.c,
                        "unit_factor": e.unit_factor}
                       for i, e in enumerate(self.entries)],
            "near_degenerate": [list(p) for p in self.near_degenerate],
        }


def _rect_levels(l1: float, l2: float, count: int, start: int):
    # enumerate enough (j, k) to contain the ``count`` smallest
    r = count + start + 2
    levels = []
    for j in range(start, r):
        for k in range(start, r):
            levels.append(((math.pi ** 2 / 4) * (j * j / l1 ** 2 + k * k / l2 ** 2), j, k))
    levels.sort()
    return levels[:count]


def limit_spectrum(lattice: Lattice, count: int, warn: bool = True) -> LimitSpectrum:
    """Neumann eigenvalues of ``-Laplace`` on the period cell, with index pairs."""
    if count < 1:
        raise ValueError("count must be at least 1")
    levels = _rect_levels(lattice.l1, lattice.l2, max(count, 10), 0)
    entries = []
    for mu, j, k in levels[:count]:
        c = math.sqrt((1 + (j == 0)) * (1 + (k == 0)) / (lattice.l1 * lattice.l2))
        entries.append(LimitLevel(mu, j, k, c))
    near = near_degenerate_levels([lv[0] for lv in levels[:10]])
    if near and warn:
        warnings.warn(f"limit levels nearly degenerate at index pairs {near}; "
                      "(l1/l2)^2 is close to a small-integer ratio", RuntimeWarning, stacklevel=2)
    return LimitSpectrum(entries, lattice, near)


def dirichlet_spectrum(lattice: Lattice, count: int) -> np.ndarray:
    """Dirichlet eigenvalues of ``-Laplace`` on the period cell (j, k >= 1)."""
    return np.array([lv[0] for lv in _rect_levels(lattice.l1, lattice.l2, count, 1)])


# -- band tables -----------------------------------------------------------

@dataclass
class BandTable:
    phases: np.ndarray          # (P, 2)
    values: np.ndarray          # (P, m); row p holds Lambda_1..m at phases[p]
    params: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return self.values.shape[1]

    @property
    def intervals(self) -> np.ndarray:
        return np.stack([self.values.min(axis=0), self.values.max(axis=0)], axis=1)

    def interval(self, k: int) -> tuple[float, float]:
        """Sampled band ``beta_k`` (1-based)."""
        lo, hi = self.intervals[k - 1]
        return float(lo), float(hi)

    def gap_after(self, k: int) -> tuple[float, float]:
        """``(max beta_k, min beta_{k+1})``; open only if the first is smaller."""
        return self.interval(k)[1], self.interval(k + 1)[0]

    def at(self, phi1: float, phi2: float, tol: float = 1e-12) -> np.ndarray:
        d = np.abs(self.phases - np.array([phi1, phi2])).max(axis=1)
        i = int(np.argmin(d))
        if d[i] > tol:
            raise KeyError(f"phase ({phi1}, {phi2}) not sampled")
        return self.values[i]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.params, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["phi1", "phi2", "k", "lambda"])
        for (p1, p2), row in zip(self.phases, self.values):
            for k, lam in enumerate(row, start=1):
                w.writerow([repr(float(p1)), repr(float(p2)), k, repr(float(lam))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BandTable":
        lines = text.splitlines()
        params = {}
        if lines and lines[0].startswith("#"):
            params = json.loads(lines[0][1:])
            lines = lines[1:]
        rows = list(csv.DictReader(lines))
        keys = []
        data: dict = {}
        for r in rows:
            key = (float(r["phi1"]), float(r["phi2"]))
            if key not in data:
                keys.append(key)
                data[key] = {}
            data[key][int(r["k"])] = float(r["lambda"])
        m = max(len(v) for v in data.values())
        values = np.array([[data[key][k] for k in range(1, m + 1)] for key in keys])
        return cls(np.array(keys), values, params)


@lru_cache(maxsize=8)
def _cell_matrices(field: ContrastField, target_h: float, frame_h: Optional[float]):
    mesh = fem.build_mesh(fem.cell_domain(field), field, target_h, frame_h)
    k, m = fem.assemble_nodal(mesh, field)
    return mesh, k, m


def solve_cell(phase, field: ContrastField, count: int, target_h: float,
               frame_h: Optional[float] = None, tol: float = 1e-8, seed: int = 0) -> np.ndarray:
    """``count`` smallest Bloch eigenvalues of the period cell at ``phase``."""
    mesh, k, m = _cell_matrices(field, target_h, frame_h)
    problem = fem.reduce(k, m, mesh, fem.BoundarySpec.bloch(*phase), field)
    res = solve_smallest(problem, count, tol=tol, seed=seed, vectors=False)
    if not res.valid or len(res.values) < count:
        raise EigenSolverError(f"cell solve failed at phase {tuple(phase)}")
    return res.values


def phase_grid(g: int) -> np.ndarray:
    t = np.linspace(0.0, math.pi, g)
    p1, p2 = np.meshgrid(t, t, indexing="ij")
    return np.stack([p1.ravel(), p2.ravel()], axis=1)


def cell_bands(field: ContrastField, count: int = 6, grid: int = 9, target_h: float = 0.025,
               frame_h: Optional[float] = None, tol: float = 1e-8, workers: int = 1,
               refine: bool = True, seed: int = 0, max_refine: int = 4) -> BandTable:
    """Sample ``Lambda_1..count`` on a ``grid x grid`` mesh of ``[0, pi]^2``.

    With ``refine`` the neighbourhood of every band extremum is resampled at
    half the step until the extremum stops moving.
    """
    if grid < 2:
        raise ValueError("phase grid needs at least 2 points per axis")
    if not isinstance(field.variant, Periodic):
        raise ValueError("cell bands need the periodic field variant")
    solve = dict(field=field, count=count, target_h=target_h, frame_h=frame_h, tol=tol, seed=seed)
    samples: dict = {}

    def run(points):
        new = [tuple(p) for p in points if tuple(p) not in samples]
        new = list(dict.fromkeys(new))
        results = parallel_map(solve_cell, new, workers, **solve)
        for p, v in zip(new, results):
            samples[p] = v

    pts = [tuple(map(float, p)) for p in phase_grid(grid)]
    run(pts)
    if refine:
        step0 = math.pi / (grid - 1)
        for k in range(count):
            for sign in (1.0, -1.0):
                step = step0
                for _ in range(max_refine):
                    keys = list(samples)
                    vals = np.array([sign * samples[p][k] for p in keys])
                    best = np.array(keys[int(np.argmax(vals))])
                    step /= 2
                    offs = np.array([(a, b) for a in (-step, 0, step) for b in (-step, 0, step)])
                    cand = np.clip(best[None, :] + offs, 0.0, math.pi)
                    run([tuple(map(float, c)) for c in cand])
                    keys = list(samples)
                    vals = np.array([sign * samples[p][k] for p in keys])
                    moved = np.abs(np.array(keys[int(np.argmax(vals))]) - best).max()
                    if moved < step:
                        break
    keys = sorted(samples)
    phases = np.array(keys)
    values = np.array([samples[p] for p in keys])
    mesh = _cell_matrices(field, target_h, frame_h)[0]
    params = dict(field.echo(), grid=grid, count=count, target_h=target_h,
                  frame_h=frame_h if frame_h is not None else field.eps / 3, tol=tol,
                  refine=refine, seed=seed, mesh={"n1": mesh.n1, "n2": mesh.n2})
    return BandTable(phases, values, params)


# -- gaps ------------------------------------------------------------------

@dataclass
class GapReport:
    bands: list[tuple[float, float]]   # merged components, increasing
    gaps: list[tuple[float, float]]
    params: dict = field(default_factory=dict)

    def gap_containing(self, x: float) -> Optional[tuple[float, float]]:
        for a, b in self.gaps:
            if a < x < b:
                return (a, b)
        return None

    def components_below(self, x: float) -> int:
        return sum(1 for lo, _ in self.bands if lo < x)

    def to_json(self) -> dict:
        return {"bands": [list(b) for b in self.bands], "gaps": [list(g) for g in self.gaps],
                "params": self.params}


def merge_intervals(intervals: Iterable[Sequence[float]]) -> list[tuple[float, float]]:
    ivs = sorted((float(lo), float(hi)) for lo, hi in intervals)
    merged: list[list[float]] = []
    for lo, hi in ivs:
        if hi < lo:
            raise ValueError(f"bad interval ({lo}, {hi})")
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [(a, b) for a, b in merged]


def gap_detect(tables) -> GapReport:
    """Merge band intervals of one or more tables (or raw ``[lo, hi]`` lists)."""
    if isinstance(tables, BandTable):
        tables = [tables]
    intervals = []
    params = {}
    for t in tables:
        if isinstance(t, BandTable):
            intervals.extend(t.intervals.tolist())
            params = t.params
        else:
            intervals.append(tuple(t))
    if not all(np.isfinite(v) for iv in intervals for v in iv):
        raise ValueError("band intervals must be finite")
    merged = merge_intervals(intervals)
    gaps = [(merged[i][1], merged[i + 1][0]) for i in range(len(merged) - 1)]
    return GapReport(merged, gaps, params)


# -- asymptotics -----------------------------------------------------------

@dataclass
class AsymptoticFit:
    n: int
    eps: list[float]
    errors: list[float]
    slope: float
    constant: float
    threshold: float
    monotone: bool
    passed: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


def band_limit_error(table: BandTable, spectrum: LimitSpectrum, n: int) -> float:
    """``max_phi |Lambda_n(phi) - mu_n|``; clusters of near-equal ``mu`` use the closest member."""
    lam = table.values[:, n - 1]
    mu = spectrum.mu(n)
    cluster = [mu]
    for i, j in spectrum.near_degenerate:
        if n - 1 in (i, j):
            cluster = [spectrum.entries[i].mu, spectrum.entries[j].mu]
    dev = np.min(np.abs(lam[:, None] - np.array(cluster)[None, :]), axis=1)
    return float(dev.max())


def asymptotic_check(errors: Sequence[tuple[float, float]], n: int, gamma: float = 0.75,
                     slack: float = 0.15) -> AsymptoticFit:
    """Fit ``log(error) = p log(eps) + log(C)``; pass when errors shrink and ``p >= gamma - 1/2 - slack``."""
    pairs = [(float(e), float(d)) for e, d in errors]
    eps = [p[0] for p in pairs]
    if len(set(eps)) < 3:
        raise ValueError("asymptotic check needs at least three distinct eps values")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps values must be given in decreasing order")
    errs = [p[1] for p in pairs]
    if any(d <= 0 for d in errs):
        raise ValueError("errors must be positive for a log-log fit")
    if any(b >= a for a, b in zip(errs, errs[1:])):
        raise NonMonotoneError(
            f"band {n}: errors {errs} do not decrease with eps {eps}; refine the mesh")
    slope, intercept = np.polyfit(np.log(eps), np.log(errs), 1)
    threshold = (gamma - 0.5) - slack
    return AsymptoticFit(n, eps, errs, float(slope), float(math.exp(intercept)), threshold,
                         True, bool(slope >= threshold))

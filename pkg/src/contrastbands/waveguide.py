"""Interface and defect modes of the mirrored and X-shaped media.

The mirrored medium is studied on the horizontal unit strip with a Bloch phase
``zeta`` across ``x2`` and Dirichlet ends far from the interface; the X-defect
on a square patch of cells with Dirichlet sides.  Eigenvalues in a bulk gap
are classified by how their mass is spread over the columns (rows) of cells.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from . import fem
from ._pool import parallel_map
from .coeff import ContrastField, Lattice, Mirrored, XDefect
from .eig import EigenSolverError, solve_near, solve_smallest

log = logging.getLogger(__name__)

FAR_FRACTION_MAX = 0.05
DECAY_RATE_MIN = 0.2
FIT_FLOOR = 1e-14


class DefectLevelError(ValueError):
    """The enlarged-cell levels are not ordered as the construction needs."""


# -- closed-form levels ----------------------------------------------------

@dataclass
class DefectLevels:
    levels: list[tuple[float, str]]
    target: float
    window: tuple[float, float]

    def to_json(self) -> dict:
        return {"levels": [[v, name] for v, name in self.levels], "target": self.target,
                "window": list(self.window)}


def neumann_level(half_widths: Sequence[float], modes: Sequence[int]) -> float:
    """``(pi^2/4) sum_j (m_j / L_j)^2``: Neumann eigenvalue of a box with half-widths ``L_j``."""
    return (math.pi ** 2 / 4) * sum((m / L) ** 2 for m, L in zip(modes, half_widths))


def analytic_defect_levels(lattice: Lattice, h: Optional[float] = None,
                           h12: Optional[tuple[float, float]] = None) -> DefectLevels:
    """Closed-form enlarged-cell levels and the window they must sit in.

    Pass ``h`` for the mirrored strip or ``h12 = (h1, h2)`` for the X-defect.
    All levels use the half-length convention ``(pi^2/4) L^-2``.
    """
    l1, l2 = lattice.l1, lattice.l2
    cell_first = neumann_level((l1, l2), (1, 0))
    if (h is None) == (h12 is None):
        raise ValueError("give exactly one of h or h12")
    if h is not None:
        if not 0 < h < l1:
            raise DefectLevelError(f"h={h} must lie in (0, l1)")
        target = neumann_level((l1 + h,), (1,))
        if not 0 < target < cell_first:
            raise DefectLevelError(f"enlarged-cell level {target} not inside (0, {cell_first})")
        return DefectLevels([(0.0, "mu_1"), (target, "interface"), (cell_first, "mu_2")],
                            target, (0.0, cell_first))
    h1, h2 = h12
    if not (0 < h1 < l1 and 0 < h2 < l2):
        raise DefectLevelError(f"(h1, h2)=({h1}, {h2}) out of range")
    col = neumann_level((l1 + h1,), (1,))
    row = neumann_level((l2 + h2,), (1,))
    cross = col + row
    if not 0 < col < row < cell_first:
        raise DefectLevelError(
            f"need 0 < {col:.6g} (column) < {row:.6g} (row) < {cell_first:.6g} (cell)")
    if not row < cross < cell_first:
        raise DefectLevelError(f"cross level {cross:.6g} not inside ({row:.6g}, {cell_first:.6g})")
    return DefectLevels([(col, "column"), (row, "row"), (cross, "cross"), (cell_first, "cell")],
                        cross, (row, cell_first))


# -- layout of columns -----------------------------------------------------

def column_index(x, half: float, shift: float):
    """Cell column of coordinate ``x``: 0 for the enlarged centre, +-1, +-2, ... outward."""
    x = np.asarray(x, dtype=float)
    centre = half + shift
    out = np.sign(x) * np.ceil((np.abs(x) - centre) / (2 * half))
    return np.where(np.abs(x) < centre, 0, out).astype(int)


def strip_extent(field: ContrastField, columns: int) -> float:
    l1 = field.lattice.l1
    return l1 + field.shifts()[0] + 2 * columns * l1


@dataclass
class LocalizationReport:
    columns: np.ndarray        # signed column indices
    fractions: np.ndarray      # energy fraction per column
    rate: float                # fitted decay of log fraction per column (inf: too fast to fit)
    far_fraction: float        # sum over |c| >= 3
    center_fraction: float

    def localized(self, far_max: float = FAR_FRACTION_MAX, rate_min: float = DECAY_RATE_MIN) -> bool:
        return self.far_fraction < far_max and self.rate > rate_min

    @property
    def total(self) -> float:
        return float(self.fractions.sum())


def decay_rate(by_distance: Sequence[float], floor: float = FIT_FLOOR) -> float:
    """Least-squares decay of ``log E_d`` over distances ``d = 1, 2, ...``.

    ``by_distance[0]`` is the centre and is not fitted.  Values below ``floor``
    are treated as numerically zero; with fewer than two usable points the
    decay is reported as infinite.
    """
    e = np.asarray(by_distance, dtype=float)
    d = np.arange(len(e))
    use = (d >= 1) & (e > floor)
    if use.sum() < 2:
        return math.inf
    slope = np.polyfit(d[use], np.log(e[use]), 1)[0]
    return float(-slope)


def element_energy(mesh: fem.StructuredMesh, u_nodal: np.ndarray) -> np.ndarray:
    ue = u_nodal[mesh.element_nodes()]
    me = fem.element_mass(mesh)
    return np.real(np.einsum("ea,eab,eb->e", ue.conj(), me, ue))


def localization_measure(u_nodal: np.ndarray, mesh: fem.StructuredMesh, half: float,
                         shift: float, axis: int = 0, far: int = 3) -> LocalizationReport:
    """Mass fractions of a nodal vector per cell column (``axis=0``) or row (``axis=1``)."""
    e = element_energy(mesh, u_nodal)
    total = e.sum()
    if total <= 0:
        raise ValueError("zero vector has no localization")
    e = e / total
    centers = mesh.element_centers()[axis]
    cols = column_index(centers, half, shift)
    lo, hi = int(cols.min()), int(cols.max())
    fractions = np.bincount(cols - lo, weights=e, minlength=hi - lo + 1)
    columns = np.arange(lo, hi + 1)
    dist = np.abs(columns)
    by_distance = np.bincount(dist, weights=fractions)
    return LocalizationReport(
        columns=columns, fractions=fractions, rate=decay_rate(by_distance),
        far_fraction=float(fractions[dist >= far].sum()),
        center_fraction=float(fractions[columns == 0].sum()))


def mirror_parity(u_nodal: np.ndarray, mesh: fem.StructuredMesh, m_nodal) -> tuple[float, float]:
    """Parity ``s`` of a vector under ``x1 -> -x1`` and the M-norm residual ``|Ru - s u| / |u|``."""
    if not np.allclose(mesh.x, -mesh.x[::-1], atol=1e-12):
        raise ValueError("mesh is not symmetric about x1 = 0")
    grid = u_nodal.reshape(len(mesh.y), len(mesh.x))
    ru = grid[:, ::-1].ravel()
    nu = np.real(np.vdot(u_nodal, m_nodal @ u_nodal))
    s = np.vdot(u_nodal, m_nodal @ ru) / nu
    r = ru - s * u_nodal
    return float(np.real(s)), float(math.sqrt(max(np.real(np.vdot(r, m_nodal @ r)), 0.0) / nu))


# -- strip problem ---------------------------------------------------------

@dataclass(frozen=True)
class StripConfig:
    field: ContrastField
    columns_per_side: int = 6
    zeta: float = 0.0
    target_h: float = 0.025
    frame_h: Optional[float] = None

    def __post_init__(self):
        if not isinstance(self.field.variant, Mirrored):
            raise ValueError("strip problems need the mirrored field variant")
        if abs(self.field.lattice.l2 - 0.5) > 1e-12:
            raise ValueError("the strip cross-section is the unit interval: l2 must be 1/2")

    def domain(self):
        x = strip_extent(self.field, self.columns_per_side)
        return ((-x, x), (-0.5, 0.5))


@lru_cache(maxsize=4)
def _strip_matrices(field: ContrastField, columns: int, target_h: float, frame_h):
    x = strip_extent(field, columns)
    mesh = fem.build_mesh(((-x, x), (-0.5, 0.5)), field, target_h, frame_h)
    k, m = fem.assemble_nodal(mesh, field)
    return mesh, k, m


@dataclass
class StripSpectrum:
    zeta: float
    columns: int
    values: np.ndarray
    far_fractions: np.ndarray
    rates: np.ndarray
    gap_indices: list[int]
    gap_vectors: dict            # index -> nodal vector, eigenvalues inside the gap
    parity: dict                 # index -> (sign, residual)

    def localized(self, i: int, far_max=FAR_FRACTION_MAX, rate_min=DECAY_RATE_MIN) -> bool:
        return self.far_fractions[i] < far_max and self.rates[i] > rate_min


def solve_strip(config: StripConfig, gap: tuple[float, float], tol: float = 1e-8,
                seed: int = 0) -> StripSpectrum:
    """All strip eigenvalues up to the gap top, with localization of each."""
    f, n = config.field, config.columns_per_side
    mesh, k_nodal, m_nodal = _strip_matrices(f, n, config.target_h, config.frame_h)
    problem = fem.reduce(k_nodal, m_nodal, mesh, fem.BoundarySpec(None, config.zeta), f)
    count = 2 * n + 8
    while True:
        res = solve_smallest(problem, count, tol=tol, seed=seed)
        if not res.valid:
            raise EigenSolverError(f"strip solve failed at zeta={config.zeta}, N={n}")
        if res.values[-1] >= gap[1] or count >= problem.dim - 2:
            break
        count += 2 * n + 2
    u = problem.expand(res.vectors)
    l1 = f.lattice.l1
    shift = f.shifts()[0]
    reports = [localization_measure(u[:, i], mesh, l1, shift) for i in range(len(res.values))]
    inside = [i for i, v in enumerate(res.values) if gap[0] < v < gap[1]]
    parity = {i: mirror_parity(u[:, i], mesh, m_nodal) for i in inside}
    return StripSpectrum(
        zeta=config.zeta, columns=n, values=res.values,
        far_fractions=np.array([r.far_fraction for r in reports]),
        rates=np.array([r.rate for r in reports]),
        gap_indices=inside, gap_vectors={i: u[:, i] for i in inside}, parity=parity)


def _strip_task(zeta, field, columns, target_h, frame_h, gap, tol, seed):
    cfg = StripConfig(field, columns, float(zeta), target_h, frame_h)
    return solve_strip(cfg, gap, tol, seed)


@dataclass
class InterfaceBand:
    zetas: np.ndarray
    values: np.ndarray               # tracked branch, nan where nothing was found
    rates: np.ndarray
    far_fractions: np.ndarray
    parity_residuals: np.ndarray
    columns: int
    gap: tuple[float, float]
    target: float
    refined_values: Optional[np.ndarray] = None   # same branch at columns + 2
    refined_rates: Optional[np.ndarray] = None
    spectra: list = field(default_factory=list)  # StripSpectrum per zeta (columns)
    candidates: list = field(default_factory=list)
    messages: list = field(default_factory=list)

    @property
    def found(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    @property
    def interval(self) -> tuple[float, float]:
        if not self.found:
            return (math.nan, math.nan)
        return float(np.min(self.values)), float(np.max(self.values))

    @property
    def truncation_error(self) -> float:
        if self.refined_values is None:
            return math.nan
        return float(np.max(np.abs(self.values - self.refined_values)))

    def to_json(self) -> dict:
        """Everything except eigenvectors; non-finite numbers become null."""
        return {
            "zetas": _floats(self.zetas), "values": _floats(self.values),
            "rates": _floats(self.rates), "far_fractions": _floats(self.far_fractions),
            "parity_residuals": _floats(self.parity_residuals), "columns": self.columns,
            "gap": list(self.gap), "target": self.target,
            "refined_values": None if self.refined_values is None else _floats(self.refined_values),
            "refined_rates": None if self.refined_rates is None else _floats(self.refined_rates),
            "truncation_error": _finite(self.truncation_error),
            "spectra": [{"zeta": s.zeta, "values": _floats(s.values),
                         "far_fractions": _floats(s.far_fractions), "rates": _floats(s.rates),
                         "gap_indices": list(s.gap_indices),
                         "parity": {str(i): [float(a), float(b)] for i, (a, b) in s.parity.items()}}
                        for s in self.spectra],
            "candidates": self.candidates, "messages": self.messages,
        }

    @classmethod
    def from_json(cls, data: dict) -> "InterfaceBand":
        arr = _array
        spectra = [StripSpectrum(s["zeta"], data["columns"], arr(s["values"]),
                                 arr(s["far_fractions"]), arr(s["rates"]), list(s["gap_indices"]),
                                 {}, {int(i): tuple(v) for i, v in s["parity"].items()})
                   for s in data.get("spectra", [])]
        rv, rr = data.get("refined_values"), data.get("refined_rates")
        return cls(arr(data["zetas"]), arr(data["values"]), arr(data["rates"]),
                   arr(data["far_fractions"]), arr(data["parity_residuals"]), data["columns"],
                   tuple(data["gap"]), data["target"],
                   None if rv is None else arr(rv), None if rr is None else arr(rr),
                   spectra, [[tuple(c) for c in group] for group in data.get("candidates", [])],
                   list(data.get("messages", [])))

    def to_csv(self, params: Optional[dict] = None) -> str:
        import json
        lines = []
        if params is not None:
            lines.append("# " + json.dumps(params, sort_keys=True))
        lines.append("zeta,lambda,loc_rate,far_fraction")
        for z, v, r, f in zip(self.zetas, self.values, self.rates, self.far_fractions):
            lines.append(f"{float(z)!r},{float(v)!r},{float(r)!r},{float(f)!r}")
        return "\n".join(lines) + "\n"


def _track(spectra: list[StripSpectrum], target: float, m_nodal):
    """Follow the localized gap branch closest to ``target`` across ``zeta``."""
    chosen: list[Optional[int]] = []
    prev_vec = None
    prev_val = None
    for s in spectra:
        cands = [i for i in s.gap_indices if s.localized(i)]
        if not cands:
            chosen.append(None)
            continue
        if prev_vec is None:
            pick = min(cands, key=lambda i: abs(s.values[i] - target))
        else:
            def score(i):
                v = s.gap_vectors[i]
                ov = abs(np.vdot(prev_vec, m_nodal @ v))
                ov /= math.sqrt(abs(np.vdot(v, m_nodal @ v)) * abs(np.vdot(prev_vec, m_nodal @ prev_vec)))
                return (-round(ov, 3), abs(s.values[i] - prev_val))
            pick = min(cands, key=score)
        chosen.append(pick)
        prev_vec, prev_val = s.gap_vectors[pick], s.values[pick]
    return chosen


def interface_band(field: ContrastField, gap: tuple[float, float],
                   zetas: Optional[Sequence[float]] = None, columns: int = 6,
                   target_h: float = 0.025, frame_h: Optional[float] = None, tol: float = 1e-8,
                   workers: int = 1, seed: int = 0, check_truncation: bool = True,
                   target: Optional[float] = None) -> InterfaceBand:
    """Sweep the strip over ``zeta`` and track the localized branch inside ``gap``."""
    if columns < 4:
        raise ValueError("need at least 4 columns per side")
    if zetas is None:
        zetas = np.linspace(0.0, math.pi, 9)
    zetas = np.asarray(zetas, dtype=float)
    if target is None:
        h = field.variant.h
        target = (analytic_defect_levels(field.lattice, h=h).target if h > 0
                  else 0.5 * (gap[0] + gap[1]))
    common = dict(field=field, target_h=target_h, frame_h=frame_h, gap=tuple(gap), tol=tol,
                  seed=seed)
    spectra = parallel_map(_strip_task, zetas, workers, columns=columns, **common)
    m_nodal = _strip_matrices(field, columns, target_h, frame_h)[2]
    picks = _track(spectra, target, m_nodal)
    nan = np.full(len(zetas), np.nan)
    values, rates, far, par = nan.copy(), nan.copy(), nan.copy(), nan.copy()
    messages = []
    for i, (s, p) in enumerate(zip(spectra, picks)):
        if p is None:
            messages.append(f"no localized eigenvalue in gap {tuple(gap)} at zeta={s.zeta:.6g}")
            continue
        values[i], rates[i], far[i] = s.values[p], s.rates[p], s.far_fractions[p]
        par[i] = s.parity[p][1]
    candidates = [[(float(s.values[i]), float(s.far_fractions[i]), float(s.rates[i]))
                   for i in s.gap_indices if s.localized(i)] for s in spectra]
    band = InterfaceBand(zetas, values, rates, far, par, columns, tuple(gap), target,
                         spectra=spectra, candidates=candidates, messages=messages)
    if check_truncation:
        refined = parallel_map(_strip_task, zetas, workers, columns=columns + 2, **common)
        rv, rr = nan.copy(), nan.copy()
        for i, s in enumerate(refined):
            cands = [j for j in s.gap_indices if s.localized(j)]
            if cands and np.isfinite(values[i]):
                j = min(cands, key=lambda j: abs(s.values[j] - values[i]))
                rv[i], rr[i] = s.values[j], s.rates[j]
        band.refined_values, band.refined_rates = rv, rr
        err = band.truncation_error
        if np.isfinite(err) and err > 1e-6 * (gap[1] - gap[0]):
            band.messages.append(f"truncation sensitivity {err:.3g} exceeds 1e-6 of the gap width")
    for msg in band.messages:
        log.warning(msg)
    return band


# -- strip vs bulk ---------------------------------------------------------

@dataclass
class BulkConsistencyReport:
    violations: list          # (zeta, lambda)
    checked: int
    slack: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"violations": [list(v) for v in self.violations], "checked": self.checked}


def strip_bulk_consistency(band: InterfaceBand, intervals, top: Optional[float] = None,
                           rel_slack: float = 0.01, abs_slack: float = 1e-6) -> BulkConsistencyReport:
    """Strip eigenvalues below ``top`` (other than the tracked branch) must lie in some inflated band.

    ``intervals`` is a :class:`~contrastbands.bands.BandTable` or a list of ``[lo, hi]``.
    """
    if hasattr(intervals, "intervals"):
        intervals = intervals.intervals
    ivs = [(float(lo), float(hi)) for lo, hi in intervals]
    slack = [rel_slack * (hi - lo) + abs_slack for lo, hi in ivs]
    if top is None:
        top = band.gap[1]
    violations = []
    checked = 0
    for s, tracked in zip(band.spectra, band.values):
        for v in s.values:
            if v >= top:
                continue
            if np.isfinite(tracked) and abs(v - tracked) <= 1e-12 * max(1.0, abs(v)):
                continue
            checked += 1
            if not any(lo - sl <= v <= hi + sl for (lo, hi), sl in zip(ivs, slack)):
                violations.append((float(s.zeta), float(v)))
    return BulkConsistencyReport(violations, checked, slack)


# -- X-shaped defect -------------------------------------------------------

SECTORS = ("odd-odd", "odd-even", "even-odd", "even-even")


@dataclass
class DefectCandidate:
    value: float
    sector: str
    report_x: LocalizationReport
    report_y: LocalizationReport

    def localized(self, far_max=FAR_FRACTION_MAX, rate_min=DECAY_RATE_MIN) -> bool:
        return self.report_x.localized(far_max, rate_min) and self.report_y.localized(far_max, rate_min)


@dataclass
class XDefectResult:
    value: float                      # nan when no localized eigenvalue was found
    report_x: Optional[LocalizationReport]
    report_y: Optional[LocalizationReport]
    window: tuple[float, float]
    target: float
    cells: tuple[int, int]
    sector: Optional[str] = None
    candidates: list = field(default_factory=list)
    window_counts: dict = field(default_factory=dict)
    refined_value: Optional[float] = None
    messages: list = field(default_factory=list)

    @property
    def found(self) -> bool:
        return math.isfinite(self.value)

    @property
    def truncation_error(self) -> float:
        if self.refined_value is None:
            return math.nan
        return abs(self.value - self.refined_value)

    def to_json(self) -> dict:
        def rep(r):
            if r is None:
                return None
            return {"rate": _finite(r.rate), "far_fraction": r.far_fraction,
                    "center_fraction": r.center_fraction,
                    "fractions": {int(c): float(v) for c, v in zip(r.columns, r.fractions)}}
        return {
            "lambda_d": _finite(self.value), "target": self.target, "window": list(self.window),
            "cells": list(self.cells), "sector": self.sector, "report_x": rep(self.report_x),
            "report_y": rep(self.report_y), "refined_lambda_d": _finite(self.refined_value),
            "truncation_error": _finite(self.truncation_error),
            "window_counts": self.window_counts,
            "localized_candidates": [[c.value, c.sector] for c in self.candidates if c.localized()],
            "messages": self.messages,
        }


def _floats(a) -> list:
    return [_finite(v) for v in np.asarray(a, dtype=float).ravel()]


def _array(values) -> np.ndarray:
    return np.array([np.nan if v is None else v for v in values], dtype=float)


def _finite(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _window_pairs(problem, window, tol, seed, start=24, cap=600):
    """Every eigenpair of ``problem`` inside ``window`` via one shift at its centre."""
    lo, hi = window
    centre = 0.5 * (lo + hi)
    count = min(start, problem.dim - 2)
    while True:
        res = solve_near(problem, centre, count, tol=tol, seed=seed)
        if not res.valid:
            raise EigenSolverError(f"defect solve failed with {count} pairs near {centre}")
        covered = res.values.min() < lo and res.values.max() > hi
        if covered or count >= min(cap, problem.dim - 2):
            if not covered:
                log.warning("window %s not fully covered with %d pairs", window, count)
            break
        count = min(2 * count, cap, problem.dim - 2)
    keep = (res.values > lo) & (res.values < hi)
    return res.values[keep], res.vectors[:, keep]


def _sector_task(sector, field, cells, target_h, frame_h, window, tol, seed):
    px, py = sector.split("-")
    l1, l2 = field.lattice.half_widths
    h1, h2 = field.shifts()
    x = l1 + h1 + 2 * cells[0] * l1
    y = l2 + h2 + 2 * cells[1] * l2
    mesh = fem.build_mesh(((0.0, x), (0.0, y)), field, target_h, frame_h)
    bc = fem.BoundarySpec(None, None, ("D" if px == "odd" else "N", "D"),
                          ("D" if py == "odd" else "N", "D"))
    problem = fem.assemble(mesh, field, bc)
    vals, vecs = _window_pairs(problem, window, tol, seed)
    u = problem.expand(vecs)
    out = []
    for i, v in enumerate(vals):
        rx = localization_measure(u[:, i], mesh, l1, h1, axis=0)
        ry = localization_measure(u[:, i], mesh, l2, h2, axis=1)
        out.append(DefectCandidate(float(v), sector, rx, ry))
    return out


def x_defect_eigenvalue(field: ContrastField, cells: tuple[int, int] = (4, 4),
                        target_h: float = 0.025, frame_h: Optional[float] = None,
                        tol: float = 1e-8, workers: int = 1, seed: int = 0,
                        window: Optional[tuple[float, float]] = None,
                        target: Optional[float] = None,
                        check_truncation: bool = True,
                        sectors: Sequence[str] = SECTORS) -> XDefectResult:
    """Localized eigenvalue of the Dirichlet-truncated X-defect patch closest to the cross level.

    The patch and coefficient are symmetric in both axes, so the search runs on
    the quarter patch once per parity sector (odd: Dirichlet on the axis,
    even: natural condition) and collects every eigenvalue inside ``window``.
    """
    if not isinstance(field.variant, XDefect):
        raise ValueError("x_defect_eigenvalue needs the XDefect field variant")
    if min(cells) < 4:
        raise ValueError("need at least 4 cells per half-axis")
    if window is None or target is None:
        levels = analytic_defect_levels(field.lattice, h12=(field.variant.h1, field.variant.h2))
        window = window or levels.window
        target = target if target is not None else levels.target
    common = dict(field=field, target_h=target_h, frame_h=frame_h, window=tuple(window), tol=tol,
                  seed=seed)
    per_sector = parallel_map(_sector_task, list(sectors), workers, cells=tuple(cells), **common)
    cands = [c for group in per_sector for c in group]
    counts = {s: len(g) for s, g in zip(sectors, per_sector)}
    localized = [c for c in cands if c.localized()]
    messages = []
    if not localized:
        messages.append(f"no localized eigenvalue inside window {tuple(window)}")
        for m in messages:
            log.warning(m)
        return XDefectResult(math.nan, None, None, tuple(window), target, tuple(cells),
                             candidates=cands, window_counts=counts, messages=messages)
    best = min(localized, key=lambda c: abs(c.value - target))
    result = XDefectResult(best.value, best.report_x, best.report_y, tuple(window), target,
                           tuple(cells), best.sector, cands, counts, messages=messages)
    if check_truncation:
        bigger = (cells[0] + 2, cells[1] + 2)
        refined = _sector_task(best.sector, cells=bigger, **common)
        loc = [c for c in refined if c.localized()]
        if loc:
            result.refined_value = min(loc, key=lambda c: abs(c.value - best.value)).value
            err = result.truncation_error
            if err > 1e-6 * (window[1] - window[0]):
                messages.append(f"truncation sensitivity {err:.3g} exceeds 1e-6 of the window width")
        else:
            messages.append("localized eigenvalue lost on the larger patch")
    for m in messages:
        log.warning(m)
    return result

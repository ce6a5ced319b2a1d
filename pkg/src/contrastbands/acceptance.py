"""Pass/fail predicates evaluated by the ``verify`` stage and by the test suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import fem
from .bands import (BandTable, LimitSpectrum, NonMonotoneError, asymptotic_check,
                    band_limit_error, gap_detect)
from .coeff import ContrastField, ContrastProfile, Lattice, Periodic
from .eig import solve_dense, solve_smallest, verify_result
from .waveguide import (DECAY_RATE_MIN, FAR_FRACTION_MAX, InterfaceBand, XDefectResult,
                        strip_bulk_consistency)

ORACLE_PHASES = ((0.0, 0.0), (math.pi, 0.0), (math.pi, math.pi))
INTERFACE_TOL = 0.5
XDEFECT_TOL = 0.6
RATE_STABILITY = 0.2
MARGIN_FACTOR = 10.0


@dataclass
class Criterion:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.number}. {self.name}"

    def to_json(self) -> dict:
        return {"number": self.number, "name": self.name,
                "verdict": "PASS" if self.passed else "FAIL", "detail": _clean(self.detail)}


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def _uniform_cell(lattice: Lattice, h: float) -> fem.StructuredMesh:
    l1, l2 = lattice.half_widths
    n1, n2 = int(math.ceil(2 * l1 / h)), int(math.ceil(2 * l2 / h))
    return fem.StructuredMesh(np.linspace(-l1, l1, n1 + 1), np.linspace(-l2, l2, n2 + 1))


def discretization_oracle(lattice: Lattice, eps: float = 0.04, count: int = 5,
                          phases=ORACLE_PHASES) -> Criterion:
    """Constant coefficient cell on uniform grids with ``h = eps/3`` and ``eps/6``."""
    field_ = ContrastField(lattice, ContrastProfile(eps), Periodic(), homogeneous=True)
    errors = {}
    for h in (eps / 3, eps / 6):
        mesh = _uniform_cell(lattice, h)
        k, m = fem.assemble_nodal(mesh, field_)
        for ph in phases:
            problem = fem.reduce(k, m, mesh, fem.BoundarySpec.bloch(*ph), field_)
            vals = solve_smallest(problem, count, vectors=False).values
            exact = fem.constant_coefficient_oracle(lattice, ph, count)
            errors[(h, ph)] = (vals, exact)
    rel, ratios = [], []
    for ph in phases:
        coarse, exact = errors[(eps / 3, ph)]
        fine, _ = errors[(eps / 6, ph)]
        nz = exact > 1e-12
        rel.extend((np.abs(coarse - exact)[nz] / exact[nz]).tolist())
        ratios.extend((np.abs(coarse - exact)[nz] / np.abs(fine - exact)[nz]).tolist())
        # the zero mode at phase (0, 0) is exact up to round-off on any mesh
        rel.extend(np.abs(coarse[~nz]).tolist())
    max_rel = max(rel)
    ok = max_rel < 0.01 and all(3.5 <= r <= 4.5 for r in ratios)
    return Criterion(1, "discretization oracle", ok,
                     {"max_relative_error": max_rel, "ratio_min": min(ratios),
                      "ratio_max": max(ratios), "h": eps / 3})


def asymptotics(tables: dict, spectrum: LimitSpectrum, gamma: float,
                bands_checked: Sequence[int] = (2, 3)) -> Criterion:
    """``tables`` maps eps to BandTable; needs at least three eps values."""
    eps = sorted(tables, reverse=True)
    detail, ok = {}, True
    for n in bands_checked:
        errs = [(e, band_limit_error(tables[e], spectrum, n)) for e in eps]
        try:
            fit = asymptotic_check(errs, n, gamma)
            detail[f"n={n}"] = fit.to_json()
            ok &= fit.passed
        except (NonMonotoneError, ValueError) as err:
            detail[f"n={n}"] = {"errors": errs, "error": str(err)}
            ok = False
    return Criterion(2, "band limits approach the Neumann levels", ok, detail)


def gap_opening(table: BandTable, spectrum: LimitSpectrum, level: int = 4,
                components: int = 3) -> Criterion:
    report = gap_detect(table)
    mu = spectrum.mu(level)
    n = report.components_below(mu)
    return Criterion(3, "open gaps at the smallest eps", n >= components,
                     {"eps": table.params.get("eps"), "mu": mu, "components_below": n,
                      "gaps": report.gaps})


def _deviation(band: InterfaceBand) -> float:
    if not band.found:
        return math.inf
    return float(np.max(np.abs(band.values - band.target)))


def interface_near_level(bands: dict) -> Criterion:
    """``bands`` maps eps to InterfaceBand; the largest eps is tested, smaller ones must improve."""
    eps = sorted(bands, reverse=True)
    devs = {e: _deviation(bands[e]) for e in eps}
    ok = devs[eps[0]] <= INTERFACE_TOL
    ok &= all(devs[b] < devs[a] for a, b in zip(eps, eps[1:]))
    return Criterion(4, "interface eigenvalue near the enlarged-cell level", bool(ok),
                     {"target": bands[eps[0]].target, "max_deviation": devs,
                      "found": {e: bands[e].found for e in eps}})


def interface_in_gap(band: InterfaceBand, table: BandTable,
                     control: Optional[InterfaceBand]) -> Criterion:
    a, b = table.gap_after(1)
    detail = {"gap": [a, b]}
    ok = band.found and a < b
    if ok:
        lo, hi = band.interval
        margin = min(lo - a, b - hi)
        slack = band.truncation_error
        if not math.isfinite(slack):
            slack = math.inf
        detail.update(interface=[lo, hi], margin=margin, truncation_slack=slack)
        ok = margin > MARGIN_FACTOR * slack
    if control is None:
        ok = False
        detail["control"] = "missing"
    else:
        n_loc = sum(len(c) for c in control.candidates)
        detail["control_localized"] = n_loc
        ok = ok and n_loc == 0
    return Criterion(5, "interface band inside the bulk gap", bool(ok), detail)


def localization(band: InterfaceBand) -> Criterion:
    detail = {"max_far_fraction": None, "min_rate": None}
    ok = band.found
    if ok:
        far = float(np.max(band.far_fractions))
        rate = float(np.min(band.rates))
        detail.update(max_far_fraction=far, min_rate=rate)
        ok = far < FAR_FRACTION_MAX and rate > DECAY_RATE_MIN
        if band.refined_rates is None or not np.all(np.isfinite(band.refined_rates)):
            ok = False
            detail["refined"] = "missing"
        else:
            rel = np.abs(band.refined_rates - band.rates) / np.abs(band.rates)
            detail["max_rate_change"] = float(rel.max())
            ok = ok and bool(rel.max() <= RATE_STABILITY)
    return Criterion(6, "interface mode localization", bool(ok), detail)


def bulk_consistency(bands: dict, tables: dict) -> Criterion:
    detail, ok = {}, True
    for e, band in bands.items():
        rep = strip_bulk_consistency(band, tables[e])
        detail[e] = rep.to_json()
        ok &= rep.ok
    return Criterion(7, "strip spectrum inside bulk bands", bool(ok), detail)


def x_defect(result) -> Criterion:
    """``result`` is an :class:`XDefectResult` or its ``to_json()`` form."""
    r = result.to_json() if isinstance(result, XDefectResult) else result
    ok = r["lambda_d"] is not None
    detail = {"lambda_d": r["lambda_d"], "window": r["window"], "target": r["target"]}
    if ok:
        lo, hi = r["window"]
        rx, ry = r["report_x"], r["report_y"]

        def loc(rep):
            rate = math.inf if rep["rate"] is None else rep["rate"]
            return rep["far_fraction"] < FAR_FRACTION_MAX and rate > DECAY_RATE_MIN

        ok = (lo < r["lambda_d"] < hi and abs(r["lambda_d"] - r["target"]) <= XDEFECT_TOL
              and loc(rx) and loc(ry))
        detail.update(rate_x=rx["rate"], rate_y=ry["rate"], far_x=rx["far_fraction"],
                      far_y=ry["far_fraction"])
    return Criterion(8, "localized X-defect eigenvalue", bool(ok), detail)


def invariants(lattice: Lattice, eps: float, bands: Sequence[InterfaceBand] = (),
               mass_totals: Sequence[float] = (), target_h: float = 0.05) -> Criterion:
    """Cheap structural checks on a coarse cell plus the stored strip and defect data."""
    f = ContrastField(lattice, ContrastProfile(eps), Periodic())
    mesh = fem.build_mesh(fem.cell_domain(f), f, target_h, 2 * target_h)
    k, m = fem.assemble_nodal(mesh, f)
    detail = {}
    phase = (0.7, 1.9)
    p = fem.reduce(k, m, mesh, fem.BoundarySpec.bloch(*phase), f)
    q = fem.reduce(k, m, mesh, fem.BoundarySpec.bloch(-phase[0], -phase[1]), f)
    herm = max(abs(p.K - p.K.conj().T).max(), abs(p.M - p.M.conj().T).max())
    detail["hermiticity"] = float(herm)
    dense = solve_dense(p, 6)
    detail["min_mass_eigenvalue"] = float(np.linalg.eigvalsh(p.M.toarray()).min())
    conj = np.max(np.abs(dense.values - solve_dense(q, 6, vectors=False).values))
    detail["conjugation_gap"] = float(conj / max(1.0, dense.values.max()))
    ok = herm < 1e-12 and detail["min_mass_eigenvalue"] > 0 and detail["conjugation_gap"] < 1e-10
    if p.dim <= 2000:
        it = solve_smallest(p, 6, force_iterative=True)
        detail["dense_vs_iterative"] = float(np.max(np.abs(it.values - dense.values)
                                                  / np.maximum(1.0, np.abs(dense.values))))
        detail["verify_ok"] = verify_result(p, it).ok
        ok = ok and detail["dense_vs_iterative"] < 1e-8 and detail["verify_ok"]
    par = [float(r) for b in bands for r in b.parity_residuals if np.isfinite(r)]
    detail["max_parity_residual"] = max(par, default=0.0)
    ok = ok and detail["max_parity_residual"] < 1e-6
    if mass_totals:
        detail["mass_fraction_total_error"] = max(abs(t - 1.0) for t in mass_totals)
        ok = ok and detail["mass_fraction_total_error"] < 1e-9
    return Criterion(9, "structural invariants", bool(ok), detail)

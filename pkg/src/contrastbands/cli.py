"""``bands-tool``: run the limit -> bands -> gaps -> interface -> xdefect -> verify pipeline."""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import sys
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import acceptance
from .bands import BandTable, cell_bands, gap_detect, limit_spectrum
from .config import ConfigError, RunConfig, load_config
from .diagram import emit_band_diagram
from .waveguide import (InterfaceBand, analytic_defect_levels, interface_band,
                        strip_bulk_consistency, x_defect_eigenvalue)

log = logging.getLogger(__name__)

STAGES = ("limit", "bands", "gaps", "interface", "xdefect", "verify")
LIMIT_COUNT = 8

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2

CONVENTION_NOTE = (
    "Enlarged-cell levels use the half-width Neumann convention (pi^2/4)(l_j + h_j)^-2. "
    "The alternative form without the factor 1/4 paired with sin(pi x_j/(l_j + h_j)) does not "
    "satisfy the Neumann condition at x_j = +-(l_j + h_j) and is not used.")


@contextlib.contextmanager
def _control_run(what: str):
    """Controls are expected to find nothing; keep their warnings out of the log."""
    log.info("%s: control run, no localized eigenvalue is the expected outcome", what)
    wlog = logging.getLogger("contrastbands.waveguide")
    level = wlog.level
    wlog.setLevel(logging.ERROR)
    try:
        yield
    finally:
        wlog.setLevel(level)


class StageError(RuntimeError):
    """A computation failed; the message names the stage and parameter point."""


def _eps_tag(eps: float) -> str:
    return f"{eps:g}"


def _dump(path: Path, data) -> None:
    path.write_text(json.dumps(acceptance._clean(data), indent=2, sort_keys=True) + "\n")


class Pipeline:
    """Stage runner with on-disk caching keyed by the parameter echo of each artifact."""

    def __init__(self, config: RunConfig, out: Path, workers: int = 1, seed: int = 0):
        self.cfg = config
        self.out = Path(out)
        self.workers = max(1, int(workers))
        self.seed = int(seed)
        self.out.mkdir(parents=True, exist_ok=True)
        self._tables: dict = {}
        self._interfaces: dict = {}
        self._control: Optional[InterfaceBand] = None
        self._xdefect = None

    # -- parameter echoes --------------------------------------------------

    def _mesh_echo(self, eps: float) -> dict:
        return {"target_h": self.cfg.mesh.target_h, "frame_h": self.cfg.frame_h(eps)}

    def band_params(self, eps: float) -> dict:
        f = self.cfg.periodic_field(eps)
        b = self.cfg.bands
        return dict(f.echo(), grid=b.grid, count=b.count, tol=self.cfg.solver.tol,
                    refine=b.refine, seed=self.seed, **self._mesh_echo(eps))

    def interface_params(self, eps: float, h: Optional[float] = None) -> dict:
        f = self.cfg.mirrored_field(eps, h)
        i = self.cfg.interface
        return dict(f.echo(), columns=i.columns, zeta_count=i.zeta_count,
                    tol=self.cfg.solver.tol, seed=self.seed, bands=self.band_params(eps),
                    **self._mesh_echo(eps))

    def xdefect_params(self) -> dict:
        x = self.cfg.xdefect
        f = self.cfg.xdefect_field(x.eps)
        return dict(f.echo(), cells=list(x.cells), tol=self.cfg.solver.tol, seed=self.seed,
                    **self._mesh_echo(x.eps))

    # -- stages ------------------------------------------------------------

    def limit(self):
        spec = limit_spectrum(self.cfg.lattice_obj(), LIMIT_COUNT)
        _dump(self.out / "limit.json", dict(spec.to_json(), params=self.cfg.to_dict()))
        return spec

    def band_table(self, eps: float) -> BandTable:
        if eps in self._tables:
            return self._tables[eps]
        path = self.out / f"bands_eps{_eps_tag(eps)}.csv"
        want = self.band_params(eps)
        if path.exists():
            table = BandTable.from_csv(path.read_text())
            have = {k: v for k, v in table.params.items() if k != "mesh"}
            if have == want:
                log.info("bands eps=%g: using cached %s", eps, path.name)
                self._tables[eps] = table
                return table
        log.info("bands eps=%g: sweeping the phase grid", eps)
        try:
            table = cell_bands(self.cfg.periodic_field(eps), self.cfg.bands.count,
                               self.cfg.bands.grid, self.cfg.mesh.target_h, self.cfg.frame_h(eps),
                               self.cfg.solver.tol, self.workers, self.cfg.bands.refine,
                               self.seed)
        except Exception as err:
            raise StageError(f"bands failed at eps={eps:g}: {err}") from err
        table.params = dict(want, mesh=table.params["mesh"])
        path.write_text(table.to_csv())
        self._tables[eps] = table
        return table

    def bands(self):
        return [self.band_table(e) for e in self.cfg.profile.eps]

    def gaps(self):
        reports = {}
        for e in self.cfg.profile.eps:
            rep = gap_detect(self.band_table(e))
            reports[_eps_tag(e)] = rep.to_json()
        _dump(self.out / "gaps.json", {"params": self.cfg.to_dict(), "reports": reports})
        return reports

    def _interface_run(self, eps: float, h: Optional[float], name: str,
                       check_truncation: bool) -> InterfaceBand:
        path = self.out / name
        want = self.interface_params(eps, h)
        if path.exists():
            data = json.loads(path.read_text())
            if data.get("params") == acceptance._clean(want):
                log.info("interface eps=%g h=%s: using cached %s", eps, h, name)
                return InterfaceBand.from_json(data["band"])
        table = self.band_table(eps)
        gap = table.gap_after(1)
        if not gap[0] < gap[1]:
            raise StageError(f"interface failed at eps={eps:g}: no open gap after the first band")
        field = self.cfg.mirrored_field(eps, h)
        zetas = np.linspace(0.0, math.pi, self.cfg.interface.zeta_count)
        log.info("interface eps=%g h=%g: sweeping %d zeta values", eps, field.variant.h, len(zetas))
        try:
            band = interface_band(field, gap, zetas, self.cfg.interface.columns,
                                  self.cfg.mesh.target_h, self.cfg.frame_h(eps),
                                  self.cfg.solver.tol, self.workers, self.seed, check_truncation)
        except Exception as err:
            raise StageError(f"interface failed at eps={eps:g}, h={field.variant.h:g}: {err}") from err
        _dump(path, {"params": want, "band": band.to_json()})
        return band

    def interface_for(self, eps: float) -> InterfaceBand:
        if eps not in self._interfaces:
            name = f"interface_eps{_eps_tag(eps)}.json"
            self._interfaces[eps] = self._interface_run(eps, None, name, True)
        return self._interfaces[eps]

    def interface_control(self) -> InterfaceBand:
        if self._control is None:
            eps = self.cfg.interface.eps[0]
            with _control_run(f"interface eps={eps:g} h=0"):
                self._control = self._interface_run(eps, 0.0, "interface_control.json", False)
        return self._control

    def interface(self):
        bands = {}
        for k, eps in enumerate(self.cfg.interface.eps):
            band = self.interface_for(eps)
            params = self.interface_params(eps)
            text = band.to_csv(acceptance._clean(params))
            (self.out / f"interface_eps{_eps_tag(eps)}.csv").write_text(text)
            if k == 0:
                (self.out / "interface.csv").write_text(text)
            bands[eps] = band
        self.interface_control()
        return bands

    def xdefect(self):
        if self._xdefect is not None:
            return self._xdefect
        path = self.out / "xdefect.json"
        want = acceptance._clean(self.xdefect_params())
        if path.exists():
            data = json.loads(path.read_text())
            if data.get("params") == want:
                log.info("xdefect: using cached %s", path.name)
                self._xdefect = data
                return data
        x = self.cfg.xdefect
        field = self.cfg.xdefect_field(x.eps)
        levels = analytic_defect_levels(field.lattice, h12=(field.variant.h1, field.variant.h2))
        log.info("xdefect eps=%g: searching window %s", x.eps, levels.window)
        try:
            result = x_defect_eigenvalue(field, tuple(x.cells), self.cfg.mesh.target_h,
                                         self.cfg.frame_h(x.eps), self.cfg.solver.tol,
                                         self.workers, self.seed)
            with _control_run(f"xdefect eps={x.eps:g} h1=h2=0"):
                control = x_defect_eigenvalue(self.cfg.xdefect_field(x.eps, (0.0, 0.0)),
                    tuple(x.cells), self.cfg.mesh.target_h, self.cfg.frame_h(x.eps),
                    self.cfg.solver.tol, self.workers, self.seed, window=levels.window,
                    target=levels.target, check_truncation=False)
        except Exception as err:
            raise StageError(f"xdefect failed at eps={x.eps:g}, cells={tuple(x.cells)}: {err}") from err
        data = {"params": want, "levels": levels.to_json(), "result": result.to_json(),
                "control": control.to_json(),
                "mass_fraction_totals": ([result.report_x.total, result.report_y.total]
                                         if result.found else None)}
        _dump(path, data)
        self._xdefect = acceptance._clean(data)
        return self._xdefect

    # -- verification and reporting ---------------------------------------

    def verify(self) -> list:
        cfg = self.cfg
        lat = cfg.lattice_obj()
        spec = limit_spectrum(lat, LIMIT_COUNT, warn=False)
        tables = {e: self.band_table(e) for e in cfg.profile.eps}
        crits = [acceptance.discretization_oracle(lat, min(cfg.profile.eps))]
        if len(tables) >= 3:
            crits.append(acceptance.asymptotics(tables, spec, cfg.profile.gamma))
        else:
            crits.append(acceptance.Criterion(2, "band limits approach the Neumann levels", False,
                                              {"error": "needs at least three eps values"}))
        crits.append(acceptance.gap_opening(tables[min(tables)], spec))
        iface = {e: self.interface_for(e) for e in cfg.interface.eps}
        itables = {e: self.band_table(e) for e in cfg.interface.eps}
        first = cfg.interface.eps[0]
        crits.append(acceptance.interface_near_level(iface))
        crits.append(acceptance.interface_in_gap(iface[first], itables[first],
                                                 self.interface_control()))
        crits.append(acceptance.localization(iface[first]))
        crits.append(acceptance.bulk_consistency(iface, itables))
        xd = self.xdefect()
        crits.append(acceptance.x_defect(xd["result"]))
        crits.append(acceptance.invariants(lat, first, list(iface.values()),
                                               xd.get("mass_fraction_totals") or ()))
        summary = {
            "params": cfg.to_dict(),
            "criteria": [c.to_json() for c in crits],
            "all_pass": all(c.passed for c in crits),
            "gap": list(itables[first].gap_after(1)),
            "interface_band": list(iface[first].interval),
            "interface_level": iface[first].target,
            "bulk_consistency": {_eps_tag(e): strip_bulk_consistency(iface[e], itables[e]).to_json()
                                 for e in iface},
            "xdefect": xd["result"],
            "notes": [CONVENTION_NOTE],
        }
        _dump(self.out / "summary.json", summary)
        for c in crits:
            print(c.line())
        return crits

    def diagram(self) -> None:
        cached = [e for e in self.cfg.profile.eps
                  if e in self._tables or (self.out / f"bands_eps{_eps_tag(e)}.csv").exists()]
        if not cached:
            return
        ifirst = self.cfg.interface.eps[0]
        eps = ifirst if ifirst in cached else min(cached)
        table = self.band_table(eps)
        band = self._interfaces.get(eps)
        if band is None and (self.out / f"interface_eps{_eps_tag(eps)}.json").exists():
            try:
                band = self.interface_for(eps)
            except StageError:
                band = None
        spec = limit_spectrum(self.cfg.lattice_obj(), LIMIT_COUNT, warn=False)
        level = None
        if not self.cfg.homogeneous:
            level = analytic_defect_levels(self.cfg.lattice_obj(), h=self.cfg.variant.h).target
        svg = emit_band_diagram([table], gap_detect(table), band, spec.values.tolist(), level)
        (self.out / "diagram.svg").write_text(svg)


def _order(stages: Iterable[str]) -> list:
    wanted = set()
    for s in stages:
        if s == "all":
            wanted.update(STAGES)
        elif s in STAGES:
            wanted.add(s)
        else:
            raise ValueError(f"unknown stage {s!r}; choose from {STAGES + ('all',)}")
    return [s for s in STAGES if s in wanted]


def run_pipeline(config: RunConfig, stages: Iterable[str], out: Optional[Path] = None,
                 workers: int = 1, seed: int = 0) -> int:
    """Run ``stages`` in dependency order; returns the process exit code."""
    order = _order(stages)
    if config.homogeneous and any(s in order for s in ("interface", "xdefect", "verify")):
        log.error("interface, xdefect and verify need the high-contrast field")
        return EXIT_ERROR
    pipe = Pipeline(config, Path(out or config.output_dir), workers, seed)
    failed = False
    try:
        for stage in order:
            log.info("stage %s", stage)
            result = getattr(pipe, stage)()
            if stage == "verify":
                failed = not all(c.passed for c in result)
        pipe.diagram()
    except StageError as err:
        log.error("%s", err)
        return EXIT_ERROR
    except Exception as err:  # anything unexpected is still a computational failure
        log.exception("stage failed: %s", err)
        return EXIT_ERROR
    return EXIT_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bands-tool", description=__doc__)
    p.add_argument("stage", nargs="+", help="one or more of " + ", ".join(STAGES + ("all",)))
    p.add_argument("--config", required=True, type=Path, help="JSON run configuration")
    p.add_argument("--workers", type=int, default=1, help="process pool size")
    p.add_argument("--out", type=Path, default=None, help="output directory (overrides config)")
    p.add_argument("--seed", type=int, default=0, help="Krylov start vector seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        _order(args.stage)
    except (ConfigError, OSError, ValueError) as err:
        print(f"bands-tool: {err}", file=sys.stderr)
        return EXIT_ERROR
    return run_pipeline(cfg, args.stage, args.out, args.workers, args.seed)


if __name__ == "__main__":
    sys.exit(main())

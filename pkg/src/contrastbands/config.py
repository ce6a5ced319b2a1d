"""Run configuration: one JSON document, unknown keys rejected."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path

from .coeff import ContrastField, ContrastProfile, Lattice, Mirrored, Periodic, XDefect
from .waveguide import analytic_defect_levels


class ConfigError(ValueError):
    pass


@dataclass
class LatticeConfig:
    l1: float = 0.7
    l2: float = 0.5


@dataclass
class ProfileConfig:
    eps: list = field(default_factory=lambda: [0.08, 0.04, 0.02])
    gamma: float = 0.75


@dataclass
class VariantConfig:
    h: float = 0.35
    h1: float = 0.5
    h2: float = 0.45


@dataclass
class MeshConfig:
    target_h: float = 0.025       # element size in the hard cores
    frame_fraction: float = 1 / 3  # element size near frames is frame_fraction * eps


@dataclass
class BandsConfig:
    count: int = 6
    grid: int = 9
    refine: bool = True


@dataclass
class InterfaceConfig:
    eps: list = field(default_factory=lambda: [0.04, 0.02])
    columns: int = 6
    zeta_count: int = 9


@dataclass
class XDefectConfig:
    eps: float = 0.04
    cells: list = field(default_factory=lambda: [4, 4])


@dataclass
class SolverConfig:
    tol: float = 1e-8


@dataclass
class RunConfig:
    lattice: LatticeConfig = field(default_factory=LatticeConfig)
    profile: ProfileConfig = field(default_factory=ProfileConfig)
    variant: VariantConfig = field(default_factory=VariantConfig)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    bands: BandsConfig = field(default_factory=BandsConfig)
    interface: InterfaceConfig = field(default_factory=InterfaceConfig)
    xdefect: XDefectConfig = field(default_factory=XDefectConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    homogeneous: bool = False
    output_dir: str = "bands-out"

    # -- construction helpers --------------------------------------------

    def lattice_obj(self) -> Lattice:
        return Lattice(self.lattice.l1, self.lattice.l2)

    def frame_h(self, eps: float) -> float:
        return self.mesh.frame_fraction * eps

    def periodic_field(self, eps: float) -> ContrastField:
        return ContrastField(self.lattice_obj(), ContrastProfile(eps, self.profile.gamma),
                             Periodic(), self.homogeneous)

    def mirrored_field(self, eps: float, h: float | None = None) -> ContrastField:
        h = self.variant.h if h is None else h
        return ContrastField(self.lattice_obj(), ContrastProfile(eps, self.profile.gamma),
                             Mirrored(h), self.homogeneous)

    def xdefect_field(self, eps: float, h12: tuple | None = None) -> ContrastField:
        h1, h2 = (self.variant.h1, self.variant.h2) if h12 is None else h12
        return ContrastField(self.lattice_obj(), ContrastProfile(eps, self.profile.gamma),
                             XDefect(h1, h2), self.homogeneous)

    def validate(self) -> None:
        """Re-check every field and level-ordering invariant; raises ConfigError."""
        try:
            for eps in self.profile.eps:
                self.periodic_field(eps)
            if not self.homogeneous:
                for eps in self.interface.eps:
                    self.mirrored_field(eps)
                self.xdefect_field(self.xdefect.eps)
                lat = self.lattice_obj()
                analytic_defect_levels(lat, h=self.variant.h)
                analytic_defect_levels(lat, h12=(self.variant.h1, self.variant.h2))
        except ValueError as err:
            raise ConfigError(str(err)) from err
        if self.bands.grid < 2 or self.bands.count < 1:
            raise ConfigError("bands.grid must be >= 2 and bands.count >= 1")
        if self.interface.columns < 4 or min(self.xdefect.cells) < 4:
            raise ConfigError("truncated supercells need at least 4 cells per side")
        if self.interface.zeta_count < 2:
            raise ConfigError("interface.zeta_count must be >= 2")
        if self.solver.tol <= 0:
            raise ConfigError("solver.tol must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def _build(cls, data, path="config"):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    kwargs = {}
    default = cls()
    for name, value in data.items():
        current = getattr(default, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{path}.{name}")
        else:
            kwargs[name] = value
    return cls(**kwargs)


def from_dict(data: dict) -> RunConfig:
    cfg = _build(RunConfig, data)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: {err}") from err
    return from_dict(data)

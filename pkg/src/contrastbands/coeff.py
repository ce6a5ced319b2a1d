"""High-contrast coefficient fields on a rectangular lattice.

A period cell is the rectangle ``(-l1, l1) x (-l2, l2)``.  Inside every cell the
coefficient equals 1 on the hard core (distance to the cell boundary at least
``2 eps``), equals ``eps**(2 gamma)`` on the soft frame (distance at most
``eps``) and is blended by a quintic smoothstep in between.

Three arrangements of cells are supported:

* ``Periodic``: the plain doubly periodic medium.
* ``Mirrored(h)``: the half-planes ``x1 > 0`` and ``x1 < 0`` are shifted by
  ``+h`` / ``-h``, which leaves a column of enlarged cells of width
  ``2 (l1 + h)`` around ``x1 = 0``.
* ``XDefect(h1, h2)``: the same construction applied along both axes, giving a
  crossing row and column of enlarged cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

SMOOTHSTEP_SLOPE = 1.875  # sup of the smoothstep derivative, at s = 1/2


class FieldError(ValueError):
    """Raised when coefficient-field parameters are inconsistent."""


@dataclass(frozen=True)
class Lattice:
    l1: float = 0.7
    l2: float = 0.5

    def __post_init__(self):
        if not (self.l1 >= self.l2 > 0):
            raise FieldError(f"lattice needs l1 >= l2 > 0, got l1={self.l1}, l2={self.l2}")

    @property
    def half_widths(self) -> tuple[float, float]:
        return (self.l1, self.l2)

    @property
    def periods(self) -> tuple[float, float]:
        return (2 * self.l1, 2 * self.l2)


@dataclass(frozen=True)
class ContrastProfile:
    eps: float
    gamma: float = 0.75

    def __post_init__(self):
        if not (0.5 < self.gamma < 1.0):
            raise FieldError(f"gamma must lie in (1/2, 1), got {self.gamma}")
        if not (0 < self.eps < 1):
            raise FieldError(f"eps must lie in (0, 1), got {self.eps}")

    @property
    def soft_value(self) -> float:
        return self.eps ** (2 * self.gamma)


@dataclass(frozen=True)
class Periodic:
    kind = "periodic"


@dataclass(frozen=True)
class Mirrored:
    """Mirror reflection across ``x1 = 0`` with half-plane shift ``h``.

    ``h = 0`` is accepted as the degenerate control case (plain periodic medium).
    """

    h: float
    kind = "mirrored"


@dataclass(frozen=True)
class XDefect:
    """Crossing row and column of enlarged cells; ``h1 = h2 = 0`` is the control case."""

    h1: float
    h2: float
    kind = "xdefect"


FieldVariant = Union[Periodic, Mirrored, XDefect]


def frame_distance(lattice: Lattice, x1, x2):
    """Distance ``min(l1 - |x1|, l2 - |x2|)`` of reference-cell points to the cell boundary."""
    return np.minimum(lattice.l1 - np.abs(x1), lattice.l2 - np.abs(x2))


def transition_profile(t):
    """Quintic smoothstep: 0 for ``t <= 1``, 1 for ``t >= 2``, C2 in between."""
    s = np.clip(np.asarray(t, dtype=float) - 1.0, 0.0, 1.0)
    return s * s * s * (s * (6.0 * s - 15.0) + 10.0)


def reduce_to_cell(x, half: float):
    """Map coordinates into ``[-half, half)`` modulo the period ``2 half``."""
    period = 2.0 * half
    return np.mod(np.asarray(x, dtype=float) + half, period) - half


@dataclass(frozen=True)
class ContrastField:
    """Pointwise-evaluable coefficient ``a(x)``.

    ``homogeneous=True`` switches the contrast off (``a == 1``) while keeping the
    lattice, which is what the discretization oracles use.
    """

    lattice: Lattice
    profile: ContrastProfile
    variant: FieldVariant = field(default_factory=Periodic)
    homogeneous: bool = False

    def __post_init__(self):
        lat, eps = self.lattice, self.profile.eps
        if eps >= lat.l2:
            raise FieldError(f"eps={eps} must be smaller than l2={lat.l2}")
        v = self.variant
        if isinstance(v, Mirrored):
            if not (0 <= v.h < lat.l1):
                raise FieldError(f"mirror shift h={v.h} must lie in [0, l1={lat.l1})")
            if v.h > 0 and not eps < (lat.l1 - v.h) / 4:
                raise FieldError(
                    f"eps={eps} must be below (l1 - h)/4 = {(lat.l1 - v.h) / 4:.6g} "
                    "so the shifted frames stay away from x1 = 0"
                )
        elif isinstance(v, XDefect):
            for hj, lj, name in ((v.h1, lat.l1, "h1"), (v.h2, lat.l2, "h2")):
                if not (0 <= hj < lj):
                    raise FieldError(f"{name}={hj} must lie in [0, {lj})")
                # the soft frame itself must not reach the symmetry axis
                if hj > 0 and not eps < lj - hj:
                    raise FieldError(f"eps={eps} must be below l - {name} = {lj - hj:.6g}")
        elif not isinstance(v, Periodic):
            raise FieldError(f"unknown field variant {v!r}")

    @property
    def eps(self) -> float:
        return self.profile.eps

    @property
    def gamma(self) -> float:
        return self.profile.gamma

    @property
    def soft_value(self) -> float:
        return self.profile.soft_value

    def shifts(self) -> tuple[float, float]:
        v = self.variant
        if isinstance(v, Mirrored):
            return (v.h, 0.0)
        if isinstance(v, XDefect):
            return (v.h1, v.h2)
        return (0.0, 0.0)

    def to_reference(self, x1, x2):
        """Fold plane coordinates into the reference cell, applying mirror shifts."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        v = self.variant
        if isinstance(v, Mirrored):
            x1 = np.abs(x1) - v.h
        elif isinstance(v, XDefect):
            x1 = np.abs(x1) - v.h1
            x2 = np.abs(x2) - v.h2
        return reduce_to_cell(x1, self.lattice.l1), reduce_to_cell(x2, self.lattice.l2)

    def __call__(self, x1, x2):
        return eval_coefficient(self, x1, x2)

    def echo(self) -> dict:
        """Parameter dictionary written next to every numeric artifact."""
        v = self.variant
        out = {
            "l1": self.lattice.l1,
            "l2": self.lattice.l2,
            "eps": self.eps,
            "gamma": self.gamma,
            "variant": v.kind,
            "homogeneous": self.homogeneous,
        }
        if isinstance(v, Mirrored):
            out["h"] = v.h
        elif isinstance(v, XDefect):
            out["h1"], out["h2"] = v.h1, v.h2
        return out


def eval_coefficient(field: ContrastField, x1, x2):
    """Evaluate ``a(x)``; accepts scalars or broadcastable arrays."""
    r1, r2 = field.to_reference(x1, x2)
    if field.homogeneous:
        return np.ones(np.broadcast(r1, r2).shape)
    rho = frame_distance(field.lattice, r1, r2)
    soft = field.soft_value
    return soft + (1.0 - soft) * transition_profile(rho / field.eps)


def plateau_lines(field: ContrastField, axis: int, lo: float, hi: float) -> np.ndarray:
    """Coordinates in ``[lo, hi]`` where the coefficient changes regime along ``axis``.

    These are the lines at distance ``0``, ``eps`` and ``2 eps`` from every cell
    edge (after mirror shifts), plus the mirror axis itself.
    """
    half = field.lattice.half_widths[axis]
    shift = field.shifts()[axis]
    mirrored = shift > 0 or not isinstance(field.variant, Periodic)
    eps = field.eps
    offsets = np.array([-(half - eps), -(half - 2 * eps), half - 2 * eps, half - eps, half])
    period = 2 * half

    def lines_for(a: float, b: float, s: float) -> list[float]:
        # lines t + s with t on the periodic reference lattice
        k0 = math.floor((a - s) / period) - 1
        k1 = math.ceil((b - s) / period) + 1
        pts = []
        for k in range(k0, k1 + 1):
            for off in offsets:
                p = k * period + off + s
                if a - 1e-12 <= p <= b + 1e-12:
                    pts.append(p)
        return pts

    if mirrored:
        pos = lines_for(0.0, max(abs(lo), abs(hi)), shift)
        pts = [p for p in pos if p >= 0] + [-p for p in pos if p > 0] + [0.0]
    else:
        pts = lines_for(lo, hi, 0.0)
    pts = np.array(sorted(p for p in pts if lo - 1e-12 <= p <= hi + 1e-12))
    return pts


def near_degenerate_levels(values, rel_tol: float = 1e-3) -> list[tuple[int, int]]:
    """Index pairs of consecutive positive values closer than ``rel_tol`` (relative)."""
    vals = list(values)
    out = []
    for i in range(len(vals) - 1):
        a, b = vals[i], vals[i + 1]
        scale = max(abs(a), abs(b))
        if scale > 0 and abs(b - a) <= rel_tol * scale:
            out.append((i, i + 1))
    return out

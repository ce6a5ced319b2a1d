"""Bilinear (Q1) finite elements on structured rectangular grids.

The nodal stiffness and mass matrices are assembled once per mesh/field and
then reduced per boundary specification: Bloch directions identify the high
side with the low side through ``u(high) = exp(i phi) u(low)`` (slave
elimination), Dirichlet directions drop their boundary nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .coeff import ContrastField, plateau_lines

MAX_ELEMENTS = 10_000_000

_GAUSS = 1.0 / math.sqrt(3.0)
_XI = np.array([-1.0, 1.0, 1.0, -1.0])
_ETA = np.array([-1.0, -1.0, 1.0, 1.0])
_QP = np.array([[-_GAUSS, -_GAUSS], [_GAUSS, -_GAUSS], [_GAUSS, _GAUSS], [-_GAUSS, _GAUSS]])


def _reference_tables():
    # per quadrature point q: shape values N[q, a] and gradient outer products
    n = np.empty((4, 4))
    gxx = np.empty((4, 4, 4))
    gyy = np.empty((4, 4, 4))
    for q, (xq, yq) in enumerate(_QP):
        n[q] = (1 + _XI * xq) * (1 + _ETA * yq) / 4
        dxi = _XI * (1 + _ETA * yq) / 4
        deta = _ETA * (1 + _XI * xq) / 4
        gxx[q] = np.outer(dxi, dxi)
        gyy[q] = np.outer(deta, deta)
    mass = np.einsum("qa,qb->ab", n, n)
    return n, gxx, gyy, mass


_N, _GXX, _GYY, _MREF = _reference_tables()


class MeshError(ValueError):
    pass


class AssemblyError(RuntimeError):
    pass


@dataclass(frozen=True)
class StructuredMesh:
    """Tensor grid given by its node coordinates along each axis."""

    x: np.ndarray
    y: np.ndarray

    @property
    def n1(self) -> int:
        return len(self.x) - 1

    @property
    def n2(self) -> int:
        return len(self.y) - 1

    @property
    def num_nodes(self) -> int:
        return len(self.x) * len(self.y)

    @property
    def num_elements(self) -> int:
        return self.n1 * self.n2

    @property
    def domain(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return (float(self.x[0]), float(self.x[-1])), (float(self.y[0]), float(self.y[-1]))

    @property
    def area(self) -> float:
        (a, b), (c, d) = self.domain
        return (b - a) * (d - c)

    def node_index(self, i, j):
        return np.asarray(j) * len(self.x) + np.asarray(i)

    def node_coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        xx, yy = np.meshgrid(self.x, self.y)
        return xx.ravel(), yy.ravel()

    def element_nodes(self) -> np.ndarray:
        """(num_elements, 4) node indices, counter-clockwise from the lower-left corner."""
        nx = len(self.x)
        i, j = np.meshgrid(np.arange(self.n1), np.arange(self.n2))
        base = (j * nx + i).ravel()
        return np.stack([base, base + 1, base + nx + 1, base + nx], axis=1)

    def element_sizes(self) -> tuple[np.ndarray, np.ndarray]:
        dx, dy = np.meshgrid(np.diff(self.x), np.diff(self.y))
        return dx.ravel(), dy.ravel()

    def element_centers(self) -> tuple[np.ndarray, np.ndarray]:
        cx, cy = np.meshgrid(0.5 * (self.x[1:] + self.x[:-1]), 0.5 * (self.y[1:] + self.y[:-1]))
        return cx.ravel(), cy.ravel()

    def echo(self) -> dict:
        return {"n1": self.n1, "n2": self.n2, "domain": [list(d) for d in self.domain]}


def _axis_nodes(lo: float, hi: float, breaks: np.ndarray, fine_h: float, coarse_h: float,
                is_fine) -> np.ndarray:
    pts = np.unique(np.concatenate([[lo, hi], breaks[(breaks > lo) & (breaks < hi)]]))
    # merge breakpoints closer than round-off
    keep = np.concatenate([[True], np.diff(pts) > 1e-12 * max(1.0, hi - lo)])
    pts = pts[keep]
    pts[-1] = hi
    nodes = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        h = fine_h if is_fine(0.5 * (a + b)) else coarse_h
        n = max(1, math.ceil((b - a) / h - 1e-9))
        nodes.append(np.linspace(a, b, n + 1)[1:])
    return np.concatenate(nodes)


def build_mesh(domain, field: ContrastField, target_h: float,
               frame_h: Optional[float] = None) -> StructuredMesh:
    """Smallest tensor grid on ``domain = ((x0, x1), (y0, y1))`` meeting the mesh rules.

    Element edges are snapped to every plateau line of ``field`` inside the
    domain.  Within distance ``2 eps`` of a cell edge the element size is at most
    ``min(target_h, frame_h)`` with ``frame_h = eps / 3`` by default; elsewhere it
    is at most ``target_h``.
    """
    if target_h <= 0:
        raise MeshError("target_h must be positive")
    eps = field.eps
    if frame_h is None:
        frame_h = eps / 3.0
    fine_h = min(target_h, frame_h)
    axes = []
    for axis, (lo, hi) in enumerate(domain):
        if not hi > lo:
            raise MeshError(f"empty domain along axis {axis}: ({lo}, {hi})")
        breaks = plateau_lines(field, axis, lo, hi)
        half = field.lattice.half_widths[axis]

        def is_fine(t, axis=axis, half=half):
            r = [0.0, 0.0]
            r[axis] = t
            ref = field.to_reference(*r)[axis]
            return half - abs(float(ref)) < 2 * eps + 1e-12

        # count first so absurd requests fail before allocating
        est = (hi - lo) / fine_h
        if est > MAX_ELEMENTS:
            raise MeshError(f"axis {axis} would need about {est:.3g} elements")
        axes.append(_axis_nodes(lo, hi, breaks, fine_h, target_h, is_fine))
    mesh = StructuredMesh(axes[0], axes[1])
    if mesh.num_elements > MAX_ELEMENTS:
        raise MeshError(f"mesh would have {mesh.num_elements} elements (limit {MAX_ELEMENTS})")
    return mesh


def cell_domain(field: ContrastField, cells: tuple[int, int] = (1, 1)):
    l1, l2 = field.lattice.half_widths
    return ((-l1 * cells[0], l1 * cells[0]), (-l2 * cells[1], l2 * cells[1]))


# -- assembly ---------------------------------------------------------------

def quadrature_points(mesh: StructuredMesh) -> tuple[np.ndarray, np.ndarray]:
    """Physical 2x2 Gauss points, shape (num_elements, 4)."""
    cx, cy = mesh.element_centers()
    dx, dy = mesh.element_sizes()
    qx = cx[:, None] + 0.5 * dx[:, None] * _QP[None, :, 0]
    qy = cy[:, None] + 0.5 * dy[:, None] * _QP[None, :, 1]
    return qx, qy


def element_matrices(mesh: StructuredMesh, field: ContrastField):
    """Local Q1 stiffness and mass blocks, each of shape (num_elements, 4, 4)."""
    qx, qy = quadrature_points(mesh)
    a = field(qx, qy)
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        raise AssemblyError(
            f"non-finite coefficient at ({qx[tuple(bad)]:.6g}, {qy[tuple(bad)]:.6g})")
    dx, dy = mesh.element_sizes()
    ke = np.einsum("eq,qab->eab", a * (dy / dx)[:, None], _GXX)
    ke += np.einsum("eq,qab->eab", a * (dx / dy)[:, None], _GYY)
    me = (dx * dy / 4)[:, None, None] * _MREF[None]
    return ke, me


def element_mass(mesh: StructuredMesh) -> np.ndarray:
    dx, dy = mesh.element_sizes()
    return (dx * dy / 4)[:, None, None] * _MREF[None]


def assemble_nodal(mesh: StructuredMesh, field: ContrastField):
    """Unreduced (natural boundary) stiffness and mass matrices in CSR form."""
    ke, me = element_matrices(mesh, field)
    conn = mesh.element_nodes()
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    n = mesh.num_nodes
    k = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    m = sp.coo_matrix((me.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return k, m


# -- boundary handling ------------------------------------------------------

@dataclass(frozen=True)
class BoundarySpec:
    """Per direction: a Bloch phase in radians, or ``None`` for a non-periodic axis.

    A non-periodic axis takes its side conditions from ``sides1`` / ``sides2``:
    ``"D"`` (Dirichlet) or ``"N"`` (natural, i.e. Neumann) for the low and high side.
    """

    phase1: Optional[float] = 0.0
    phase2: Optional[float] = 0.0
    sides1: tuple[str, str] = ("D", "D")
    sides2: tuple[str, str] = ("D", "D")

    def __post_init__(self):
        for sides in (self.sides1, self.sides2):
            if len(sides) != 2 or any(s not in ("D", "N") for s in sides):
                raise ValueError(f"side conditions must be 'D' or 'N', got {sides!r}")

    @classmethod
    def bloch(cls, phi1: float, phi2: float) -> "BoundarySpec":
        return cls(float(phi1), float(phi2))

    @classmethod
    def dirichlet(cls) -> "BoundarySpec":
        return cls(None, None)

    @property
    def phases(self) -> tuple[Optional[float], Optional[float]]:
        return (self.phase1, self.phase2)

    @property
    def is_complex(self) -> bool:
        return any(p is not None and (p % (2 * math.pi)) != 0.0 for p in self.phases)


def _axis_map(n: int, phase: Optional[float], sides=("D", "D")):
    """For grid indices 0..n along an axis: master index, factor, kept mask."""
    idx = np.arange(n + 1)
    factor = np.ones(n + 1, dtype=complex)
    keep = np.ones(n + 1, dtype=bool)
    if phase is None:
        keep[0] = sides[0] == "N"
        keep[-1] = sides[1] == "N"
    else:
        idx[-1] = 0
        factor[-1] = np.exp(1j * phase)
    return idx, factor, keep


def reduction_operator(mesh: StructuredMesh, bc: BoundarySpec) -> tuple[sp.csr_matrix, np.ndarray]:
    """Sparse ``P`` with ``u_nodes = P @ u_dofs`` and the node index of every dof."""
    mi, fi, ki = _axis_map(mesh.n1, bc.phase1, bc.sides1)
    mj, fj, kj = _axis_map(mesh.n2, bc.phase2, bc.sides2)
    # master node per node
    master = mesh.node_index(mi[None, :], mj[:, None]).ravel()
    factor = (fj[:, None] * fi[None, :]).ravel()
    keep = (kj[:, None] & ki[None, :]).ravel()
    nodes = np.arange(mesh.num_nodes)
    dof_nodes = nodes[keep & (master == nodes)]
    dof_of_node = -np.ones(mesh.num_nodes, dtype=np.int64)
    dof_of_node[dof_nodes] = np.arange(len(dof_nodes))
    rows = nodes[keep]
    cols = dof_of_node[master[keep]]
    if np.any(cols < 0):
        raise AssemblyError("identification produced a slave without a master node")
    vals = factor[keep]
    if not bc.is_complex:
        vals = vals.real
    p = sp.csr_matrix((vals, (rows, cols)), shape=(mesh.num_nodes, len(dof_nodes)))
    return p, dof_nodes


@dataclass
class BlochProblem:
    """Hermitian pencil ``(K, M)`` on the reduced degrees of freedom."""

    K: sp.csr_matrix
    M: sp.csr_matrix
    P: sp.csr_matrix
    dof_nodes: np.ndarray
    mesh: StructuredMesh
    bc: BoundarySpec
    field: Optional[ContrastField] = None

    @property
    def dim(self) -> int:
        return self.K.shape[0]

    def expand(self, u: np.ndarray) -> np.ndarray:
        """Nodal values (slaves included, Dirichlet nodes zero) of dof vectors."""
        return self.P @ u


def _check_bloch_compatible(mesh: StructuredMesh, field: Optional[ContrastField], bc: BoundarySpec):
    if field is None:
        return
    for axis, phase in enumerate(bc.phases):
        if phase is None:
            continue
        lo, hi = mesh.domain[axis]
        period = field.lattice.periods[axis]
        ratio = (hi - lo) / period
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise AssemblyError(
                f"Bloch identification along axis {axis} needs a domain length that is a "
                f"multiple of the period {period}, got {hi - lo}")
        # opposite sides must read the same coefficient
        t = np.linspace(*mesh.domain[1 - axis], 7)
        s = np.full_like(t, lo), np.full_like(t, hi)
        pts_lo = (s[0], t) if axis == 0 else (t, s[0])
        pts_hi = (s[1], t) if axis == 0 else (t, s[1])
        if not np.allclose(field(*pts_lo), field(*pts_hi), rtol=1e-9, atol=0):
            raise AssemblyError(f"coefficient is not periodic across the Bloch sides of axis {axis}")


def reduce(k_nodal, m_nodal, mesh: StructuredMesh, bc: BoundarySpec,
           field: Optional[ContrastField] = None) -> BlochProblem:
    _check_bloch_compatible(mesh, field, bc)
    p, dof_nodes = reduction_operator(mesh, bc)
    ph = p.conj().T.tocsr()
    k = (ph @ k_nodal @ p).tocsr()
    m = (ph @ m_nodal @ p).tocsr()
    return BlochProblem(K=k, M=m, P=p, dof_nodes=dof_nodes, mesh=mesh, bc=bc, field=field)


def assemble(mesh: StructuredMesh, field: ContrastField, bc: BoundarySpec) -> BlochProblem:
    """Assemble and reduce the pencil for one boundary specification."""
    k, m = assemble_nodal(mesh, field)
    return reduce(k, m, mesh, bc, field)


def constant_coefficient_oracle(lattice, phase: Sequence[float], count: int) -> np.ndarray:
    """Exact Bloch eigenvalues of ``-Laplace`` on the cell for phase ``(phi1, phi2)``.

    ``lattice`` may be a :class:`~contrastbands.coeff.Lattice` or a pair of
    half-widths (used for multi-cell supercells).
    """
    l1, l2 = lattice if isinstance(lattice, tuple) else lattice.half_widths
    phi1, phi2 = phase
    # enough integers to be sure the ``count`` smallest are present
    r = int(math.ceil(math.sqrt(count))) + 3
    m = np.arange(-r - 2, r + 3)
    k1 = (phi1 + 2 * np.pi * m) / (2 * l1)
    k2 = (phi2 + 2 * np.pi * m) / (2 * l2)
    vals = (k1[:, None] ** 2 + k2[None, :] ** 2).ravel()
    return np.sort(vals)[:count]


def dump_coo(matrix, path) -> None:
    """Write a sparse matrix as ``row col re im`` text lines."""
    c = sp.coo_matrix(matrix)
    order = np.lexsort((c.col, c.row))
    data = np.asarray(c.data, dtype=complex)[order]
    with open(path, "w") as fh:
        for r, cc, v in zip(c.row[order], c.col[order], data):
            fh.write(f"{r} {cc} {v.real:.17g} {v.imag:.17g}\n")

"""Band structure, interface bands and defect modes of high-contrast periodic media."""

from .bands import (BandTable, GapReport, LimitSpectrum, asymptotic_check, cell_bands, gap_detect,
                    limit_spectrum)
from .coeff import ContrastField, ContrastProfile, Lattice, Mirrored, Periodic, XDefect
from .eig import EigenResult, solve_smallest, verify_result
from .fem import BoundarySpec, assemble, build_mesh
from .waveguide import (InterfaceBand, XDefectResult, analytic_defect_levels, interface_band,
                        localization_measure, strip_bulk_consistency, x_defect_eigenvalue)

__version__ = "0.1.0"

__all__ = [
    "BandTable", "BoundarySpec", "ContrastField", "ContrastProfile", "EigenResult", "GapReport",
    "InterfaceBand", "Lattice", "LimitSpectrum", "Mirrored", "Periodic", "XDefect",
    "XDefectResult", "analytic_defect_levels", "assemble", "asymptotic_check", "build_mesh",
    "cell_bands", "gap_detect", "interface_band", "limit_spectrum", "localization_measure",
    "solve_smallest", "strip_bulk_consistency", "verify_result", "x_defect_eigenvalue",
]

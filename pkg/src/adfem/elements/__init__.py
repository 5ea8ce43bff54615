"""Reference elements, element residuals and element Jacobians."""
from .jacobian import Seeding, elem_jacobian_ad, elem_jacobian_fd, elem_jacobian_manual, elem_residual
from .kernels import OldroydBKernel, OldroydBParams, PoissonKernel, constitutive, mass_matrix
from .reference import P1, P2, DegenerateElementError, ElementKind, RefElement, geometry

__all__ = [
    "Seeding", "elem_jacobian_ad", "elem_jacobian_fd", "elem_jacobian_manual", "elem_residual",
    "OldroydBKernel", "OldroydBParams", "PoissonKernel", "constitutive", "mass_matrix",
    "P1", "P2", "DegenerateElementError", "ElementKind", "RefElement", "geometry",
]

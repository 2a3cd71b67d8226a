"""Spectral toolkit for perturbed periodic graphs."""
from .bloch import (BandStructure, assemble_fiber, estimate_thresholds, sample_bands,
                    spectrum_h0, verify_fiber_equivalence)
from .conditions import check_all, check_cm5, check_condition
from .crystal import QuotientEdge, QuotientGraph, TopologicalCrystal, lattice_zd, toblerone
from .dynamics import FiberedH0, band_filter, evolve, wave_probe
from .graph import GridFunction, UnboundedTailError, Vertex, schrodinger_apply
from .kernels import CompleteKernel, HubKernel, TableKernel
from .perturbation import (EdgePerturbation, PerturbedGraph, Profile, complete_example,
                           hub_example, toblerone_example, unperturbed, verify_decomposition)
from .specfile import SpecError, read_crystal, read_perturbation
from .spectral import NumericalRefusal, count_eigenvalues_in, eigensolve_section, finite_section

__all__ = [
    "BandStructure", "assemble_fiber", "estimate_thresholds", "sample_bands", "spectrum_h0",
    "verify_fiber_equivalence", "check_all", "check_cm5", "check_condition", "QuotientEdge",
    "QuotientGraph", "TopologicalCrystal", "lattice_zd", "toblerone", "FiberedH0", "band_filter",
    "evolve", "wave_probe", "GridFunction", "UnboundedTailError", "Vertex", "schrodinger_apply",
    "CompleteKernel", "HubKernel", "TableKernel", "EdgePerturbation", "PerturbedGraph", "Profile",
    "complete_example", "hub_example", "toblerone_example", "unperturbed", "verify_decomposition",
    "SpecError", "read_crystal", "read_perturbation", "NumericalRefusal", "count_eigenvalues_in",
    "eigensolve_section", "finite_section",
]

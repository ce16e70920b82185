"""Exact diagonalization of the one-conduction-electron Kondo lattice coupled to phonons."""

__version__ = "0.1.0"

from .basis import (
    ElectronState,
    NTBasisState,
    PhononBasis,
    SectorBasis,
    all_sectors,
    enumerate_nt_sector,
    enumerate_sector,
    phonon_truncation_series,
)
from .lattice import AssumptionViolation, LatticeGraph, ModelParams, chain, cycle, grid, uniform_onsite
from .operators import OperatorMatrix, build_H, build_H_tilde, build_NT_hamiltonian
from .spectral import SpectralResult, ground_states

__all__ = [
    "AssumptionViolation",
    "ElectronState",
    "LatticeGraph",
    "ModelParams",
    "NTBasisState",
    "OperatorMatrix",
    "PhononBasis",
    "SectorBasis",
    "SpectralResult",
    "all_sectors",
    "build_H",
    "build_H_tilde",
    "build_NT_hamiltonian",
    "chain",
    "cycle",
    "enumerate_nt_sector",
    "enumerate_sector",
    "ground_states",
    "grid",
    "phonon_truncation_series",
    "uniform_onsite",
]

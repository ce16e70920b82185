"""Singlet subspace, strong-coupling decomposition and the J -> infinity limit.

The singlet vectors ``(1/sqrt2)(c*_{x,up} f*_{x,dn} - c*_{x,dn} f*_{x,up}) |sigma_x>``
are generated with the fermionic sign rule and labelled by the single-hole
states ``(x, sigma_x)`` of the NT basis, in the same order. That makes the
map ``W`` onto the NT model a relabelling of columns.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .basis import NTBasisState, SectorBasis, enumerate_nt_sector, enumerate_sector
from .fermions import DOWN, UP, KondoModes, apply_op, apply_string, create_state
from .lattice import LatticeGraph, ModelParams
from .operators import (
    OperatorMatrix,
    build_exchange,
    build_H,
    build_NT_hamiltonian,
    hamiltonian_parts,
    with_phonons,
)

ORTHO_TOL = 1e-13


@lru_cache(maxsize=None)
def onsite_exchange_levels() -> tuple[float, float]:
    """(singlet, triplet) eigenvalues of ``s.S`` for one site, from the 4x4 block."""
    vals = np.linalg.eigvalsh(build_exchange(enumerate_sector(1, None), 1.0).toarray())
    return float(vals[0]), float(vals[-1])


def renormalization_constant(J: float) -> float:
    """Energy shift pinning the singlet sector: ``-E_singlet * J``."""
    return -onsite_exchange_levels()[0] * J


def separation_coefficient() -> float:
    """Triplet minus singlet level of ``s.S``."""
    singlet, triplet = onsite_exchange_levels()
    return triplet - singlet


def _hole_word_vector(label: NTBasisState, n: int, pair) -> dict[int, complex]:
    """Occupation-word expansion of ``pair |sigma_x>`` with ``|sigma_x> = f_{x,s_x} prod f*|vac>``.

    ``pair`` lists ``(coef, ops)`` two-operator strings acting at the hole.
    """
    modes = KondoModes(n)
    x = label.hole
    spins = [label.f_spin(y) if y != x else UP for y in range(n)]
    word, sign = create_state([modes.f(y, spins[y]) for y in range(n)])
    res = apply_op(word, modes.f(x, UP), dagger=False)
    word, s = res
    sign *= s
    out: dict[int, complex] = {}
    for coef, ops in pair:
        r = apply_string(word, ops)
        if r is None:
            continue
        w2, s2 = r
        out[w2] = out.get(w2, 0) + coef * sign * s2
    return out


def _pair_strings(n: int, x: int, kind: str):
    m = KondoModes(n)
    cu, cd, fu, fd = m.c(x, UP), m.c(x, DOWN), m.f(x, UP), m.f(x, DOWN)
    r = 1 / np.sqrt(2)
    table = {
        "singlet": [(r, ((cu, True), (fd, True))), (-r, ((cd, True), (fu, True)))],
        "triplet+": [(1.0, ((cu, True), (fu, True)))],
        "triplet-": [(1.0, ((cd, True), (fd, True)))],
        "triplet0": [(r, ((cu, True), (fd, True))), (r, ((cd, True), (fu, True)))],
    }
    return table[kind]


def pair_vectors(basis: SectorBasis, kind: str = "singlet") -> tuple[np.ndarray, list[NTBasisState]]:
    """Columns: on-site pair states in the electron part of ``basis``.

    Labels run over the single-hole configurations whose pair state lies in
    the sector of ``basis``.
    """
    n = basis.n_sites
    shift = {"singlet": 0, "triplet0": 0, "triplet+": 2, "triplet-": -2}[kind]
    target = basis.twice_m
    labels = enumerate_nt_sector(n, None).electron_states
    if target is not None:
        labels = [lab for lab in labels if lab.twice_m(n) + shift == target]
    cols = []
    for lab in labels:
        vec = np.zeros(basis.n_electron, dtype=complex)
        for w, c in _hole_word_vector(lab, n, _pair_strings(n, lab.hole, kind)).items():
            i = basis.word_index[w]
            vec[i] += c * basis.signs[i]
        cols.append(vec)
    V = np.array(cols).T if cols else np.zeros((basis.n_electron, 0), dtype=complex)
    return V, list(labels)


@dataclass(frozen=True, eq=False)
class SingletProjector:
    basis: SectorBasis
    singlet_vectors: np.ndarray  # electron part, columns
    labels: list
    isometry: sp.csr_matrix  # full space, singlet vectors (x) phonon basis
    P: OperatorMatrix
    P_perp: OperatorMatrix

    @property
    def rank(self) -> int:
        return self.isometry.shape[1]


def build_projector(basis: SectorBasis) -> SingletProjector:
    """Projection onto span{ singlet(x, sigma_x) (x) phonon }."""
    if basis.kind != "kondo":
        raise ValueError("singlet projector needs a Kondo basis")
    Ve, labels = pair_vectors(basis, "singlet")
    gram = Ve.conj().T @ Ve
    if np.max(np.abs(gram - np.eye(len(labels))), initial=0.0) > ORTHO_TOL:
        raise RuntimeError("singlet vectors are not orthonormal")
    iso = sp.kron(sp.csr_matrix(Ve), sp.identity(basis.phonons.dim), format="csr")
    P = (iso @ iso.conj().T).tocsr()
    eye = sp.identity(basis.dim, format="csr")
    return SingletProjector(
        basis, Ve, labels, iso,
        OperatorMatrix(P, basis, "P", True),
        OperatorMatrix(eye - P, basis, "P_perp", True),
    )


@dataclass(frozen=True, eq=False)
class StrongCouplingDecomposition:
    """``H_ren,J = H + c J`` split by the singlet projector."""

    basis: SectorBasis
    projector: SingletProjector
    J: float
    H_ren: OperatorMatrix
    H_inf: OperatorMatrix
    H_1: OperatorMatrix
    H_01: OperatorMatrix
    R: OperatorMatrix
    T: OperatorMatrix


def decompose(
    basis: SectorBasis, g: LatticeGraph, params: ModelParams, projector: Optional[SingletProjector] = None
) -> StrongCouplingDecomposition:
    proj = projector or build_projector(basis)
    parts = hamiltonian_parts(basis, g, params)
    H_ren = parts.total.shift(renormalization_constant(params.J), "H_ren,J")
    P, Q = proj.P.matrix, proj.P_perp.matrix
    Hm = H_ren.matrix

    def sandwich(a, b, tag):
        return OperatorMatrix((a @ Hm @ b).tocsr(), basis, tag, a is b)

    H_inf = sandwich(P, P, "H_inf")
    H_1 = sandwich(Q, Q, "H_1")
    H_01 = OperatorMatrix((P @ Hm @ Q + Q @ Hm @ P).tocsr(), basis, "H_01", True)
    R = OperatorMatrix(
        parts.hopping.matrix + parts.zeeman.matrix + parts.coupling.matrix + parts.phonon_energy.matrix,
        basis, "R", True,
    )
    return StrongCouplingDecomposition(basis, proj, params.J, H_ren, H_inf, H_1, H_01, R, parts.hopping)


def nt_label_basis(basis: SectorBasis) -> SectorBasis:
    """NT basis with the same sector and phonon factor as a Kondo basis."""
    M = None if basis.twice_m is None else basis.twice_m / 2
    return enumerate_nt_sector(basis.n_sites, M, basis.phonons)


def effective_hamiltonian(decomp: StrongCouplingDecomposition) -> OperatorMatrix:
    """``P R P`` on range(P), in the basis singlet(x, sigma_x) (x) phonon.

    The returned operator is expressed over the NT label basis of the sector.
    """
    iso = decomp.projector.isometry
    m = (iso.conj().T @ decomp.R.matrix @ iso).tocsr()
    labels_basis = nt_label_basis(decomp.basis)
    if [tuple(l) for l in decomp.projector.labels] != [tuple(s) for s in labels_basis.electron_states]:
        raise RuntimeError("singlet labels and NT basis are out of order")
    return OperatorMatrix(m, labels_basis, "H_ren,inf", True)


def _dense(m):
    return m.toarray() if sp.issparse(m) else np.asarray(m)


class ResolventError(ValueError):
    """z lies too close to the spectrum for a trustworthy resolvent."""


def operator_norm(a) -> float:
    a = _dense(a)
    if a.size == 0:
        return 0.0
    return float(sla.svdvals(a)[0])


def resolvent_gap(
    H_ren_J: OperatorMatrix, H_ren_inf: OperatorMatrix, projector: SingletProjector, z: complex,
    min_distance: float = 1e-8,
) -> float:
    """``|| (H_ren,J - z)^-1 - (H_ren,inf - z)^-1 P ||`` (largest singular value)."""
    A = _dense(H_ren_J.matrix)
    B = _dense(H_ren_inf.matrix)
    for M in (A, B):
        if M.size and np.min(np.abs(np.linalg.eigvalsh(M) - z)) < min_distance:
            raise ResolventError(f"z={z} is within {min_distance} of the spectrum")
    V = _dense(projector.isometry)
    RA = np.linalg.solve(A - z * np.eye(len(A)), np.eye(len(A)))
    RB = np.linalg.solve(B - z * np.eye(len(B)), V.conj().T)
    return operator_norm(RA - V @ RB)


@dataclass
class SweepRow:
    J: float
    gap: float
    separation_energy: float
    cutoff: str
    z: complex
    norm_H01: float
    hermiticity_defect: float


def default_z(H_01: OperatorMatrix, kappa: float = 10.0) -> complex:
    return 1j * kappa * operator_norm(H_01.matrix)


def ground_energy_perp(decomp: StrongCouplingDecomposition) -> float:
    """Lowest eigenvalue of ``H_1`` restricted to the orthogonal complement of the singlets."""
    Ve = decomp.projector.singlet_vectors
    comp = sla.null_space(Ve.conj().T) if Ve.shape[1] else np.eye(decomp.basis.n_electron)
    Q = np.kron(comp, np.eye(decomp.basis.phonons.dim))
    if Q.shape[1] == 0:
        return float("nan")
    block = Q.conj().T @ _dense(decomp.H_1.matrix) @ Q
    return float(np.linalg.eigvalsh(block)[0])


def j_sweep(
    basis: SectorBasis, g: LatticeGraph, params: ModelParams, J_list: Sequence[float], kappa: float = 10.0,
    z: Optional[complex] = None,
) -> list[SweepRow]:
    """Resolvent gap and separation energy along a ladder of J values at fixed z."""
    proj = build_projector(basis)
    ref = decompose(basis, g, params.replace(J=J_list[0]), proj)
    H_inf_eff = effective_hamiltonian(ref)
    if z is None:
        z = default_z(ref.H_01, kappa)
    nH01 = operator_norm(ref.H_01.matrix)
    rows = []
    for J in J_list:
        d = decompose(basis, g, params.replace(J=J), proj)
        gap = resolvent_gap(d.H_ren, H_inf_eff, proj, z)
        rows.append(SweepRow(
            float(J), gap, ground_energy_perp(d), basis.phonons.label, z, nH01,
            float(np.max(np.abs(_dense(d.H_ren.matrix) - _dense(d.H_ren.matrix).conj().T))),
        ))
    return rows


@dataclass
class SeparationFit:
    J: list
    energies: list
    slope: float
    intercept: float
    max_residual: float
    expected_slope: float
    quoted_slope: float = 0.75
    reference_intercept: Optional[float] = None


def separation_energy(
    basis: SectorBasis, g: LatticeGraph, params: ModelParams, J_list: Sequence[float]
) -> SeparationFit:
    """Linear fit of ``E(H_1 restricted to X-perp)`` against J."""
    if len(J_list) == 0:
        raise ValueError("J_list must be nonempty")
    proj = build_projector(basis)
    energies = [ground_energy_perp(decompose(basis, g, params.replace(J=J), proj)) for J in J_list]
    J_arr = np.asarray(J_list, dtype=float)
    if len(J_list) > 1:
        slope, intercept = np.polyfit(J_arr, energies, 1)
    else:
        slope, intercept = separation_coefficient(), energies[0] - separation_coefficient() * J_arr[0]
    resid = np.max(np.abs(np.asarray(energies) - (slope * J_arr + intercept)))
    d0 = decompose(basis, g, params, proj)
    Ve = proj.singlet_vectors
    comp = sla.null_space(Ve.conj().T) if Ve.shape[1] else np.eye(basis.n_electron)
    Q = np.kron(comp, np.eye(basis.phonons.dim))
    ref = float(np.linalg.eigvalsh(Q.conj().T @ _dense(d0.R.matrix) @ Q)[0])
    return SeparationFit(
        [float(j) for j in J_list], energies, float(slope), float(intercept), float(resid),
        separation_coefficient(), reference_intercept=ref,
    )


def nt_unitary_check(
    H_ren_inf: OperatorMatrix, nt_basis: SectorBasis, g: LatticeGraph, params: ModelParams,
    b_matrix: Optional[np.ndarray] = None, density: str = "electron",
) -> float:
    """Max-entry norm of ``W H_ren,inf W* - H_NT`` with ``W`` the label bijection."""
    if b_matrix is None:
        b_matrix = g.hopping / 2
    H_nt = build_NT_hamiltonian(nt_basis, g, params, b_matrix, density)
    src = H_ren_inf.basis
    if src.dim != nt_basis.dim or src.phonons.states != nt_basis.phonons.states:
        raise ValueError("basis size mismatch between H_ren,inf and the NT basis")
    perm = np.array([nt_basis.state_index[s] for s in src.electron_states])
    nph = nt_basis.phonons.dim
    full_perm = (perm[:, None] * nph + np.arange(nph)[None, :]).ravel()
    W = sp.csr_matrix((np.ones(src.dim), (full_perm, np.arange(src.dim))), shape=(nt_basis.dim, src.dim))
    diff = W @ H_ren_inf.matrix @ W.T - H_nt.matrix
    return float(abs(diff).max()) if diff.nnz else 0.0

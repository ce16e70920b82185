"""Measurements on computed spectra and ground states.

Total spin of the ground multiplet, correlation sign tables, positivity of
heat semigroups in a cone basis, operator-chain certificates for ergodicity
and the positive-overlap test.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .basis import ElectronState, NTBasisState, PhononBasis, SectorBasis
from .fermions import DOWN, UP
from .lattice import AssumptionViolation, LatticeGraph, ModelParams, check_connected
from .operators import (
    OperatorMatrix,
    build_spin_operator,
    correlator_terms,
    electron_matrix,
    hop_term,
    lowering,
    raising,
    spin_carriers,
    times,
    with_phonons,
)
from .spectral import degeneracy_groups, ground_states

STRICT_REL = 1e-12
INDETERMINATE = 1e-12
GRID_TOL = 1e-6


class AmbiguousDegeneracy(RuntimeError):
    """The gap above the ground multiplet is comparable to the grouping tolerance."""


def _dense(m) -> np.ndarray:
    if isinstance(m, OperatorMatrix):
        m = m.matrix
    return m.toarray() if sp.issparse(m) else np.asarray(m)


def spin_from_s2(s2: float) -> float:
    """Solve ``S(S+1) = s2`` for ``S >= 0``."""
    return 0.5 * (-1.0 + np.sqrt(1.0 + 4.0 * max(s2, 0.0)))


# -- total spin ----------------------------------------------------------------


@dataclass
class SpinReport:
    ground_energy: float
    degeneracy: int
    sectors: dict  # M -> number of ground states in that sector
    S: float
    s2_values: list
    gap: float
    cutoff: Optional[str] = None
    sector_energies: dict = field(default_factory=dict)

    @property
    def S_is_half_integer(self) -> bool:
        return abs(2 * self.S - round(2 * self.S)) < 1e-6

    @property
    def multiplet_complete(self) -> bool:
        return self.degeneracy == round(2 * self.S + 1)


def ground_multiplet_spin(
    sectors: Sequence[tuple[SectorBasis, OperatorMatrix]], k: int = 3, gap_tol: float = 1e-6,
    ambiguity_factor: float = 100.0,
) -> SpinReport:
    """Global ground multiplet over all sectors and its total spin.

    Each sector is solved for its lowest ``k`` levels; ``k`` is doubled while
    every computed level still belongs to the ground group, so multiplicities
    are never truncated.
    """
    found = []
    energies = {}
    for basis, H in sectors:
        kk = min(k, basis.dim)
        while True:
            res = ground_states(H, kk, gap_tol)
            groups = degeneracy_groups(res.eigenvalues, gap_tol)
            if len(groups) > 1 or kk == basis.dim:
                break
            kk = min(2 * kk, basis.dim)
        energies[basis.M] = res.ground_energy
        found.append((basis, res))
    allvals = np.sort(np.concatenate([r.eigenvalues for _, r in found]))
    E0 = float(allvals[0])
    tol = gap_tol * max(1.0, float(allvals[-1] - allvals[0]))
    in_ground = allvals <= E0 + tol
    above = allvals[~in_ground]
    gap = float(above[0] - E0) if above.size else float("inf")
    if gap <= ambiguity_factor * tol:
        raise AmbiguousDegeneracy(
            f"gap {gap:.3e} above the ground level is within {ambiguity_factor}x the tolerance {tol:.1e}; "
            "tighten gap_tol or raise the phonon cutoff"
        )
    per_sector, s2 = {}, []
    for basis, res in found:
        idx = np.flatnonzero(res.eigenvalues <= E0 + tol)
        per_sector[basis.M] = len(idx)
        if len(idx):
            S2 = build_spin_operator(basis, "S2").matrix
            for i in idx:
                v = res.eigenvectors[:, i]
                s2.append(float(np.vdot(v, S2 @ v).real))
    S = spin_from_s2(float(np.mean(s2)))
    cutoff = found[0][1].cutoff if found else None
    return SpinReport(E0, int(in_ground.sum()), per_sector, S, s2, gap, cutoff, energies)


# -- correlations ----------------------------------------------------------------

CORRELATORS = (("s+", "s-"), ("s+", "S-"), ("S+", "S-"), ("s-", "s+"), ("s-", "S+"), ("S-", "S+"))


def expected_sign(first: str, second: str, J: float) -> int:
    """Predicted sign: mixed conduction/localized pairs are negative for J > 0."""
    if J < 0:
        return 1
    return -1 if first[0] != second[0] else 1


@dataclass
class CorrelationEntry:
    x: int
    y: int
    operator: str
    value: complex
    expected: int

    @property
    def classification(self) -> str:
        v = self.value.real
        if abs(self.value) < INDETERMINATE:
            return "indeterminate"
        return "positive" if v > 0 else "negative"

    @property
    def matches(self) -> bool:
        want = "positive" if self.expected > 0 else "negative"
        return self.classification == want


def correlation_signs(psi: np.ndarray, basis: SectorBasis, J: float) -> list[CorrelationEntry]:
    """All six ``<A_x B_y>`` per ordered pair ``(x, y)`` in the state ``psi`` (electron x phonon)."""
    out = []
    n = basis.n_sites
    for first, second in CORRELATORS:
        for x in range(n):
            for y in range(n):
                e = electron_matrix(correlator_terms(basis, first, second, x, y), basis)
                A = with_phonons(e, basis)
                val = complex(np.vdot(psi, A @ psi))
                out.append(CorrelationEntry(x, y, f"<{first}_x {second}_y>", val, expected_sign(first, second, J)))
    return out


# -- cones and positivity --------------------------------------------------------


def hermite_grid(dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and orthogonal transform for one mode: eigenbasis of the truncated position.

    The nodes are the Gauss-Hermite points of order ``dim``; columns are
    signed so that their overlap with the oscillator ground state is positive.
    """
    b = PhononBasis.per_mode(1, dim - 1).annihilator(0).toarray()
    q = (b + b.T) / np.sqrt(2)
    nodes, U = np.linalg.eigh(q)
    U = U * np.sign(U[0, :])
    return nodes, U


@dataclass(frozen=True, eq=False)
class ConeBasis:
    """Basis in which the positive cone is the nonnegative orthant.

    ``fock_g0``: the electron basis itself (phonons decouple at g = 0, the
    audit acts on the electron factor). ``position_grid``: the electron basis
    times a Gauss-Hermite grid per phonon mode; an approximation of the cone
    of nonnegative functions, valid only up to truncation.
    """

    basis: SectorBasis
    representation: str
    transform: Optional[np.ndarray]  # columns: cone basis in the occupation basis

    @classmethod
    def build(cls, basis: SectorBasis, representation: str, params: ModelParams) -> "ConeBasis":
        if representation == "fock_g0":
            if np.any(params.g(basis.n_sites)):
                raise ValueError("fock_g0 cone requires g = 0; use position_grid")
            return cls(basis, representation, None)
        if representation == "position_grid":
            ph = basis.phonons
            if ph.policy != "per_mode":
                raise ValueError("position_grid needs a per-mode phonon cutoff")
            U = np.ones((1, 1))
            for c in ph.cutoff:
                U = np.kron(U, hermite_grid(c + 1)[1])
            if np.max(np.abs(U.T @ U - np.eye(len(U)))) > 1e-10:
                raise RuntimeError("grid transform is not orthonormal")
            return cls(basis, representation, np.kron(np.eye(basis.n_electron), U))
        raise ValueError(f"unknown representation {representation!r}")

    def represent(self, H) -> np.ndarray:
        A = _dense(H)
        if self.representation == "fock_g0":
            nph = self.basis.phonons.dim
            vac = np.arange(self.basis.n_electron) * nph
            return A[np.ix_(vac, vac)]
        T = self.transform
        return T.T @ A @ T


def phase_fix(v: np.ndarray) -> np.ndarray:
    """Rotate ``v`` so that its largest-magnitude entry is real and positive."""
    i = int(np.argmax(np.abs(v)))
    return v * (abs(v[i]) / v[i])


@dataclass
class AuditReport:
    sector: Optional[float]
    representation: str
    beta: list
    offdiag_max: Optional[float]
    check_a: Optional[bool]
    heat_min: list  # min entry of exp(-beta H) / max entry, per beta
    check_b: list
    check_c: list
    ground_min: float
    check_d: bool

    @property
    def passed(self) -> bool:
        flags = [self.check_d, *self.check_b]
        if self.check_a is not None:
            flags.append(self.check_a)
        if self.representation == "fock_g0":
            flags += self.check_c
        return all(flags)


def positivity_audit(
    H_tilde: OperatorMatrix, cone: ConeBasis, beta_list: Sequence[float], tol_neg: float = 1e-12
) -> AuditReport:
    """Checks (a)-(d): sign of off-diagonals, nonnegative and strictly positive heat kernel,
    strictly positive ground vector."""
    A = cone.represent(H_tilde)
    if np.max(np.abs(A.imag), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(A))):
        A_real = None
    else:
        A_real = A.real
    grid = cone.representation == "position_grid"
    tol = GRID_TOL if grid else STRICT_REL
    if A_real is None:
        # a complex generator cannot preserve the real cone
        off, check_a = float("inf"), False
        A_real = A
    else:
        off_mask = ~np.eye(len(A_real), dtype=bool)
        off = float(np.max(A_real[off_mask], initial=-np.inf))
        check_a = off <= tol_neg
    heat_min, cb, cc = [], [], []
    for beta in beta_list:
        K = sla.expm(-beta * A_real)
        K = K.real if np.iscomplexobj(K) else K
        mx = float(np.max(np.abs(K)))
        mn = float(np.min(K))
        heat_min.append(mn / mx)
        cb.append(mn >= -tol * mx)
        cc.append(mn > STRICT_REL * mx)
    vals, vecs = np.linalg.eigh(A_real)
    v = phase_fix(vecs[:, 0])
    gmin = float(np.min(v.real) / np.max(np.abs(v)))
    if grid:
        check_d = gmin >= -tol
        return AuditReport(cone.basis.M, cone.representation, list(beta_list), None, None, heat_min, cb,
                           [None] * len(cb), gmin, check_d)
    return AuditReport(cone.basis.M, cone.representation, list(beta_list), off, check_a, heat_min, cb, cc,
                       gmin, gmin > STRICT_REL)


# -- condition (R) certificates --------------------------------------------------


@dataclass
class ChainStep:
    kind: str  # "hop" (to, from) or "flip" (site,)
    sites: tuple
    amplitude: float


@dataclass
class Certificate:
    source: ElectronState
    target: ElectronState
    steps: list
    value: float  # <target| chain |source>
    chain_max: float  # largest |entry| of the composed chain
    expected: float  # product of step amplitudes

    @property
    def positive(self) -> bool:
        return self.value > STRICT_REL * max(self.chain_max, 1e-300)


def hop_operator(basis: SectorBasis, g: LatticeGraph, to: int, frm: int) -> sp.csr_matrix:
    """``D0_{to,from} = sum_s t_{to,from} c*_{to,s} c_{from,s}`` (no phases: g = 0)."""
    c = spin_carriers(basis)["c"]
    t = g.hopping[to, frm]
    return electron_matrix([term for k in range(2) for term in hop_term(c[to][k], c[frm][k], t)], basis)


def flip_operator(basis: SectorBasis, J: float, x: int) -> sp.csr_matrix:
    """``D1_x = J (s+_x S-_x + s-_x S+_x)``."""
    car = spin_carriers(basis)
    c, f = car["c"][x], car["f"][x]
    terms = times(raising(*c), lowering(*f)) + times(lowering(*c), raising(*f))
    return electron_matrix([(J * coef, ops) for coef, ops in terms], basis)


def plan_chain(source: ElectronState, target: ElectronState, g: LatticeGraph, J: float) -> list[ChainStep]:
    """Route the conduction electron to a mismatched site whose f-spin is opposite to
    its own spin, flip there, repeat; finish with a path to the target site."""
    n = g.site_count
    if source.twice_m(n) != target.twice_m(n):
        raise ValueError("source and target lie in different S3_tot sectors")
    if not check_connected(g):
        raise AssumptionViolation("(A.2)", "lattice graph is not connected")
    x, s, f = source
    steps: list[ChainStep] = []

    def walk(dest):
        nonlocal x
        path = g.shortest_path(x, dest)
        for a, b in zip(path, path[1:]):
            steps.append(ChainStep("hop", (b, a), float(g.hopping[b, a])))
        x = dest

    while True:
        mismatch = [z for z in range(n) if ((f >> z) & 1) != ((target.fconfig >> z) & 1)]
        if not mismatch:
            break
        flippable = [z for z in mismatch if (UP if (f >> z) & 1 else DOWN) != s]
        # a sector-preserving mismatch always contains such a site
        z = min(flippable, key=lambda z: (len(g.shortest_path(x, z)), z))
        walk(z)
        steps.append(ChainStep("flip", (z,), float(J)))
        f ^= 1 << z
        s = -s
    walk(target.x)
    assert s == target.spin
    return steps


def ergodicity_certificate(
    source: ElectronState, target: ElectronState, g: LatticeGraph, basis: SectorBasis, J: float = 1.0
) -> Certificate:
    """Operator chain connecting ``source`` to ``target`` with a strictly positive matrix element."""
    if J <= 0:
        raise ValueError("certificates use the J > 0 flip operator")
    steps = plan_chain(source, target, g, J)
    chain = sp.identity(basis.n_electron, format="csr", dtype=complex)
    for st in steps:
        D = hop_operator(basis, g, *st.sites) if st.kind == "hop" else flip_operator(basis, J, st.sites[0])
        chain = (D @ chain).tocsr()
    i, j = basis.state_index[target], basis.state_index[source]
    val = complex(chain[i, j])
    mx = float(abs(chain).max()) if chain.nnz else 0.0
    expected = float(np.prod([st.amplitude for st in steps])) if steps else 1.0
    if abs(val.imag) > 1e-12 * max(1.0, mx):
        raise RuntimeError("complex chain element")
    return Certificate(source, target, steps, val.real, mx, expected)


# -- positive overlap ------------------------------------------------------------


class PositivityError(AssertionError):
    pass


def positive_overlap_test(psi_a: np.ndarray, psi_b: np.ndarray, tol: float = STRICT_REL) -> float:
    """Phase-fix both vectors to the cone and return their (strictly positive) overlap."""
    out = []
    for v in (psi_a, psi_b):
        w = phase_fix(np.asarray(v, dtype=complex))
        if np.max(np.abs(w.imag)) > 1e-8 * np.max(np.abs(w)):
            raise PositivityError("vector has no real representative after phase fixing")
        out.append(w.real)
    val = float(out[0] @ out[1])
    scale = np.linalg.norm(out[0]) * np.linalg.norm(out[1])
    if not val > tol * scale:
        raise PositivityError(f"overlap {val:.3e} is not strictly positive")
    return val


def uniform_singlet_vector(basis: SectorBasis) -> np.ndarray:
    """``|L|^-1/2 sum_x |all up except x>_0 (x) vacuum`` in the top singlet sector."""
    from .strong_coupling import pair_vectors

    n = basis.n_sites
    if basis.twice_m != n - 1:
        raise ValueError("uniform singlet vector lives in the sector M = (|L|-1)/2")
    V, labels = pair_vectors(basis, "singlet")
    e = V.sum(axis=1) / np.sqrt(n)
    vac = np.zeros(basis.phonons.dim)
    vac[0] = 1.0
    return np.kron(e, vac)

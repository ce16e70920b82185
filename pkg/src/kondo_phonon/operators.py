"""Sparse operator assembly on sector bases.

Electron operators are written as lists of terms ``(coefficient, op-string)``
and turned into matrices by walking the basis and applying each string to
the occupation word (see :mod:`kondo_phonon.fermions`). Phonon factors are
attached with Kronecker products, so no dense full-space intermediate is
ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .basis import SectorBasis
from .fermions import DOWN, SPINS, UP, KondoModes, NTModes, apply_string
from .lattice import LatticeGraph, ModelParams

HERMITIAN_TOL = 1e-13

Term = tuple[complex, tuple]


# -- term algebra ------------------------------------------------------------


def times(a: Sequence[Term], b: Sequence[Term]) -> list[Term]:
    return [(ca * cb, oa + ob) for ca, oa in a for cb, ob in b]


def scaled(a: Sequence[Term], c: complex) -> list[Term]:
    return [(c * ca, oa) for ca, oa in a]


def hop_term(to_mode: int, from_mode: int, coef: complex = 1.0) -> list[Term]:
    return [(coef, ((to_mode, True), (from_mode, False)))]


def raising(up: int, dn: int) -> list[Term]:
    return hop_term(up, dn)


def lowering(up: int, dn: int) -> list[Term]:
    return hop_term(dn, up)


def sz(up: int, dn: int) -> list[Term]:
    return hop_term(up, up, 0.5) + hop_term(dn, dn, -0.5)


def number(up: int, dn: int) -> list[Term]:
    return hop_term(up, up) + hop_term(dn, dn)


def spin_component(up: int, dn: int, i: int) -> list[Term]:
    """``s^(1), s^(2), s^(3)`` of one spin-1/2 carrier."""
    if i == 1:
        return scaled(raising(up, dn) + lowering(up, dn), 0.5)
    if i == 2:
        return scaled(lowering(up, dn), 0.5j) + scaled(raising(up, dn), -0.5j)
    if i == 3:
        return sz(up, dn)
    raise ValueError(i)


def dot(a: tuple[int, int], b: tuple[int, int]) -> list[Term]:
    """``s_a . s_b = (1/2)(s+_a s-_b + s-_a s+_b) + s3_a s3_b``."""
    return (
        scaled(times(raising(*a), lowering(*b)), 0.5)
        + scaled(times(lowering(*a), raising(*b)), 0.5)
        + times(sz(*a), sz(*b))
    )


def electron_matrix(
    terms: Iterable[Term], bra: SectorBasis, ket: Optional[SectorBasis] = None
) -> sp.csr_matrix:
    """Matrix of an electron operator between two (electron-only) bases.

    Targets outside ``bra`` are dropped: that is the sector restriction, and
    for the NT basis it is the Gutzwiller projection.
    """
    ket = bra if ket is None else ket
    terms = [(c, ops) for c, ops in terms if c != 0]
    rows, cols, vals = [], [], []
    for j, w in enumerate(ket.words):
        w = int(w)
        sj = int(ket.signs[j])
        for coef, ops in terms:
            res = apply_string(w, ops)
            if res is None:
                continue
            w2, s = res
            i = bra.word_index.get(w2)
            if i is None:
                continue
            rows.append(i)
            cols.append(j)
            vals.append(coef * s * sj * int(bra.signs[i]))
    mat = sp.csr_matrix(
        (np.array(vals, dtype=complex), (rows, cols)), shape=(bra.n_electron, ket.n_electron)
    )
    mat.sum_duplicates()
    mat.eliminate_zeros()
    return mat


# -- operator container ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Sparse matrix tagged with its basis and what it represents."""

    matrix: sp.csr_matrix
    basis: Optional[SectorBasis]
    tag: str
    hermitian: bool = False
    col_basis: Optional[SectorBasis] = field(default=None, repr=False)

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        if self.basis is not None:
            cols = (self.col_basis or self.basis).dim
            if m.shape != (self.basis.dim, cols):
                raise ValueError(f"{self.tag}: shape {m.shape} does not match basis ({self.basis.dim}, {cols})")
        if self.hermitian:
            d = hermiticity_defect(m)
            if d > HERMITIAN_TOL * max(1.0, abs(m).max() if m.nnz else 1.0):
                raise ValueError(f"{self.tag}: not Hermitian (defect {d:.3e})")

    @property
    def shape(self):
        return self.matrix.shape

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(
            self.matrix + other.matrix, self.basis, f"{self.tag}+{other.tag}",
            self.hermitian and other.hermitian, self.col_basis,
        )

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(
            self.matrix - other.matrix, self.basis, f"{self.tag}-{other.tag}",
            self.hermitian and other.hermitian, self.col_basis,
        )

    def scale(self, c: float, tag: Optional[str] = None) -> "OperatorMatrix":
        return OperatorMatrix(
            c * self.matrix, self.basis, tag or f"{c}*{self.tag}",
            self.hermitian and np.isreal(c), self.col_basis,
        )

    def shift(self, c: float, tag: Optional[str] = None) -> "OperatorMatrix":
        eye = sp.identity(self.shape[0], format="csr")
        return OperatorMatrix(self.matrix + c * eye, self.basis, tag or f"{self.tag}+{c}", self.hermitian)


def hermiticity_defect(m) -> float:
    d = m - m.conj().T
    if sp.issparse(d):
        return float(abs(d).max()) if d.nnz else 0.0
    return float(np.max(np.abs(d))) if d.size else 0.0


def with_phonons(electron: sp.spmatrix, basis: SectorBasis, phonon: Optional[sp.spmatrix] = None) -> sp.csr_matrix:
    phonon = sp.identity(basis.phonons.dim, format="csr") if phonon is None else phonon
    return sp.kron(electron, phonon, format="csr")


def _electron_op(terms, basis: SectorBasis, tag: str, hermitian=True, ket: Optional[SectorBasis] = None) -> OperatorMatrix:
    e = electron_matrix(terms, basis, ket)
    if ket is None:
        return OperatorMatrix(with_phonons(e, basis), basis, tag, hermitian)
    m = sp.kron(e, sp.identity(basis.phonons.dim), format="csr")
    return OperatorMatrix(m, basis, tag, False, col_basis=ket)


def _require(basis: SectorBasis, kind: str):
    if basis.kind != kind:
        raise ValueError(f"expected a {kind} basis, got {basis.kind}")


# -- term catalogues ---------------------------------------------------------


def spin_carriers(basis: SectorBasis) -> dict[str, list[tuple[int, int]]]:
    """(up mode, down mode) per site for each electron species of the basis."""
    n = basis.n_sites
    if basis.kind == "kondo":
        m = KondoModes(n)
        return {
            "c": [(m.c(x, UP), m.c(x, DOWN)) for x in range(n)],
            "f": [(m.f(x, UP), m.f(x, DOWN)) for x in range(n)],
        }
    m = NTModes(n)
    return {"d": [(m.d(x, UP), m.d(x, DOWN)) for x in range(n)]}


def hopping_terms(basis: SectorBasis, t: np.ndarray, species: str = "c") -> list[Term]:
    """``sum_{x,y,s} (-t_xy) a*_{x,s} a_{y,s}``."""
    carriers = spin_carriers(basis)[species]
    n = basis.n_sites
    out = []
    for x in range(n):
        for y in range(n):
            if t[x, y] != 0:
                for k in range(2):
                    out += hop_term(carriers[x][k], carriers[y][k], -t[x, y])
    return out


def exchange_terms(basis: SectorBasis, J: float) -> list[Term]:
    c, f = spin_carriers(basis)["c"], spin_carriers(basis)["f"]
    return [term for x in range(basis.n_sites) for term in scaled(dot(c[x], f[x]), J)]


def total_sz_terms(basis: SectorBasis) -> list[Term]:
    return [t for carriers in spin_carriers(basis).values() for ud in carriers for t in sz(*ud)]


def total_raising_terms(basis: SectorBasis) -> list[Term]:
    return [t for carriers in spin_carriers(basis).values() for ud in carriers for t in raising(*ud)]


def total_lowering_terms(basis: SectorBasis) -> list[Term]:
    return [t for carriers in spin_carriers(basis).values() for ud in carriers for t in lowering(*ud)]


def spin_squared_terms(basis: SectorBasis) -> list[Term]:
    allc = [ud for carriers in spin_carriers(basis).values() for ud in carriers]
    return [t for a in allc for b in allc for t in dot(a, b)]


def site_number_terms(basis: SectorBasis, x: int) -> list[Term]:
    species = "c" if basis.kind == "kondo" else "d"
    return number(*spin_carriers(basis)[species][x])


# -- Hamiltonian pieces ------------------------------------------------------


def build_hopping(basis: SectorBasis, g: LatticeGraph) -> OperatorMatrix:
    _require(basis, "kondo")
    if g.site_count != basis.n_sites:
        raise ValueError("lattice and basis sizes differ")
    return _electron_op(hopping_terms(basis, g.hopping), basis, "T")


def build_exchange(basis: SectorBasis, J: float) -> OperatorMatrix:
    _require(basis, "kondo")
    return _electron_op(exchange_terms(basis, J), basis, "J s.S")


def build_zeeman(basis: SectorBasis, h: float) -> OperatorMatrix:
    """``-2h S^3_tot`` (works on Kondo and NT bases)."""
    return _electron_op(scaled(total_sz_terms(basis), -2.0 * h), basis, "-2h S3")


def site_densities(basis: SectorBasis) -> np.ndarray:
    """``<i|n_x|i>`` for each electron state ``i`` and site ``x`` (number ops are diagonal)."""
    out = np.zeros((basis.n_electron, basis.n_sites))
    for x in range(basis.n_sites):
        out[:, x] = electron_matrix(site_number_terms(basis, x), basis).diagonal().real
    return out


def build_phonon_terms(
    basis: SectorBasis, params: ModelParams, densities: Optional[np.ndarray] = None
) -> tuple[OperatorMatrix, OperatorMatrix]:
    """``sum g_xy n_x (b_y + b*_y)`` and ``omega N_ph``.

    ``densities`` overrides the per-state site occupations ``n_x``.
    """
    n = basis.n_sites
    g = params.g(n)
    ph = basis.phonons
    dens = site_densities(basis) if densities is None else densities
    coupling = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for y in range(n):
        col = g[:, y]
        if not np.any(col):
            continue
        b = ph.annihilator(y)
        diag = sp.diags(dens @ col)
        coupling = coupling + sp.kron(diag, b + b.T, format="csr")
    energy = params.omega * with_phonons(sp.identity(basis.n_electron), basis, ph.number())
    return (
        OperatorMatrix(coupling, basis, "g n (b+b*)", True),
        OperatorMatrix(energy, basis, "omega N_ph", True),
    )


@dataclass(frozen=True)
class HamiltonianParts:
    hopping: OperatorMatrix
    exchange: OperatorMatrix
    zeeman: OperatorMatrix
    coupling: OperatorMatrix
    phonon_energy: OperatorMatrix

    @property
    def total(self) -> OperatorMatrix:
        m = (
            self.hopping.matrix + self.exchange.matrix + self.zeeman.matrix
            + self.coupling.matrix + self.phonon_energy.matrix
        )
        return OperatorMatrix(m, self.hopping.basis, "H", True)


def hamiltonian_parts(basis: SectorBasis, g: LatticeGraph, params: ModelParams) -> HamiltonianParts:
    coupling, energy = build_phonon_terms(basis, params)
    return HamiltonianParts(
        build_hopping(basis, g), build_exchange(basis, params.J), build_zeeman(basis, params.h),
        coupling, energy,
    )


def build_H(basis: SectorBasis, g: LatticeGraph, params: ModelParams) -> OperatorMatrix:
    """``H = T + J sum s.S - 2h S3 + sum g n (b + b*) + omega N_ph``."""
    return hamiltonian_parts(basis, g, params).total


def build_spin_operator(basis: SectorBasis, which: str) -> OperatorMatrix:
    """S-conserving spin observables: ``"S3"``, ``"S2"``, ``"N_down_c"``."""
    if which == "S3":
        return _electron_op(total_sz_terms(basis), basis, "S3_tot")
    if which == "S2":
        return _electron_op(spin_squared_terms(basis), basis, "S2_tot")
    if which == "N_down_c":
        _require(basis, "kondo")
        c = spin_carriers(basis)["c"]
        return _electron_op([t for x in range(basis.n_sites) for t in hop_term(c[x][1], c[x][1])], basis, "N_down_c")
    raise ValueError(which)


def build_total_ladder(bra: SectorBasis, ket: SectorBasis, raise_: bool) -> OperatorMatrix:
    """``S^(+)_tot`` or ``S^(-)_tot`` from sector ``ket`` into sector ``bra``."""
    terms = total_raising_terms(ket) if raise_ else total_lowering_terms(ket)
    return _electron_op(terms, bra, "S+_tot" if raise_ else "S-_tot", ket=ket)


def correlator_terms(basis: SectorBasis, first: str, second: str, x: int, y: int) -> list[Term]:
    """``A_x B_y`` with each factor one of ``s+ s- S+ S-`` (lower case: conduction)."""
    car = spin_carriers(basis)

    def one(name, site):
        species = "c" if name[0] == "s" else "f"
        ud = car[species][site]
        return raising(*ud) if name[1] == "+" else lowering(*ud)

    return times(one(first, x), one(second, y))


# -- SpinOps -----------------------------------------------------------------


@dataclass(frozen=True)
class SpinOps:
    """Per-site and total spin operators on a full (all-sector) Kondo basis."""

    s: dict  # (component, x) -> OperatorMatrix, component in 1,2,3,'+','-'
    S: dict
    total: dict  # 1,2,3,'+','-','sq'

    @classmethod
    def build(cls, basis: SectorBasis) -> "SpinOps":
        _require(basis, "kondo")
        if basis.twice_m is not None:
            raise ValueError("SpinOps needs the full electron space (M=None)")
        car = spin_carriers(basis)
        s, S = {}, {}
        for store, species, label in ((s, "c", "s"), (S, "f", "S")):
            for x, ud in enumerate(car[species]):
                for i in (1, 2, 3):
                    store[(i, x)] = _electron_op(spin_component(*ud, i), basis, f"{label}{i}_{x}")
                store[("+", x)] = _electron_op(raising(*ud), basis, f"{label}+_{x}", False)
                store[("-", x)] = _electron_op(lowering(*ud), basis, f"{label}-_{x}", False)
        n = basis.n_sites
        total = {}
        for i in (1, 2, 3, "+", "-"):
            m = sum(s[(i, x)].matrix + S[(i, x)].matrix for x in range(n))
            total[i] = OperatorMatrix(m, basis, f"S{i}_tot", i in (1, 2, 3))
        total["sq"] = build_spin_operator(basis, "S2")
        return cls(s, S, total)


# -- unitaries and the transformed Hamiltonian --------------------------------


def build_spin_flip_unitary(basis: SectorBasis) -> OperatorMatrix:
    """``exp(i pi N_down^c)``: -1 on conduction-down states."""
    n_down = build_spin_operator(basis, "N_down_c").matrix.diagonal().real
    return OperatorMatrix(sp.diags(np.where(np.round(n_down) % 2 == 1, -1.0, 1.0)), basis, "exp(i pi N_down)", True)


@dataclass(frozen=True)
class LangFirsov:
    operator: OperatorMatrix
    unitarity_defect: float
    threshold: float

    @property
    def ok(self) -> bool:
        return self.unitarity_defect <= self.threshold


def _lang_firsov_generator(basis: SectorBasis, params: ModelParams, gvec: np.ndarray) -> np.ndarray:
    """Phonon-space block of ``L_c`` for one electron state: ``(1/omega) sum_y gvec_y (b*_y - b_y)``."""
    ph = basis.phonons
    L = np.zeros((ph.dim, ph.dim))
    for y in np.flatnonzero(gvec):
        b = ph.annihilator(int(y)).toarray()
        L += gvec[y] * (b.T - b)
    return L / params.omega


def build_lang_firsov(basis: SectorBasis, params: ModelParams, threshold: float = 1e-6) -> LangFirsov:
    """``exp(L_c)`` with ``L_c = -i (sqrt2/omega) sum g_xy n_x p_y``.

    ``n_x`` is diagonal in the electron basis, so ``L_c`` is block diagonal
    and each block is exponentiated densely on the phonon factor.
    """
    g = params.g(basis.n_sites)
    dens = site_densities(basis)
    cache = {}
    blocks = []
    defect = 0.0
    for i in range(basis.n_electron):
        gvec = dens[i] @ g
        key = tuple(np.round(gvec, 15))
        if key not in cache:
            U = sla.expm(_lang_firsov_generator(basis, params, gvec))
            cache[key] = U
            defect = max(defect, float(np.linalg.norm(U.T @ U - np.eye(len(U)), 2)))
        blocks.append(sp.csr_matrix(cache[key]))
    op = OperatorMatrix(sp.block_diag(blocks, format="csr"), basis, "exp(L_c)")
    return LangFirsov(op, defect, threshold)


def build_F(basis: SectorBasis, params: ModelParams) -> OperatorMatrix:
    """``F = exp(L_c) exp(i pi N_down^c)``."""
    lf = build_lang_firsov(basis, params).operator.matrix
    u = build_spin_flip_unitary(basis).matrix
    return OperatorMatrix(lf @ u, basis, "F")


def phase_operator(basis: SectorBasis, params: ModelParams, x: int, y: int) -> np.ndarray:
    """``exp(i Phi_xy)``, ``Phi_xy = (sqrt2/omega) sum_z (g_yz - g_xz) p_z`` on the phonon factor."""
    g = params.g(basis.n_sites)
    ph = basis.phonons
    phi = np.zeros((ph.dim, ph.dim), dtype=complex)
    for z in range(basis.n_sites):
        w = g[y, z] - g[x, z]
        if w != 0:
            phi += w * ph.momentum(z).toarray()
    phi *= np.sqrt(2) / params.omega
    return sla.expm(1j * phi)


def effective_G(params: ModelParams, n: int) -> np.ndarray:
    """``G_xy = (1/omega) sum_z g_xz g_yz``."""
    g = params.g(n)
    return g @ g.T / params.omega


# ladder coefficient of the transformed exchange: e^{i pi N_down} flips s^(+-),
# and the dot product carries 1/2, so conjugation yields -(J/2)(s+S- + s-S+)
LADDER_COEFFICIENT = -0.5


def build_H_tilde(
    basis: SectorBasis, g: LatticeGraph, params: ModelParams, mode: str = "conjugation",
    ladder_coefficient: float = LADDER_COEFFICIENT,
) -> OperatorMatrix:
    """Transformed Hamiltonian ``F H F^-1``, by conjugation or assembled in closed form."""
    _require(basis, "kondo")
    if mode == "conjugation":
        H = build_H(basis, g, params).matrix
        F = build_F(basis, params).matrix
        m = F @ H @ F.conj().T
        m = 0.5 * (m + m.conj().T)
        return OperatorMatrix(m, basis, "H_tilde[conjugation]", True)
    if mode != "closed_form":
        raise ValueError(f"unknown mode {mode!r}")
    n = basis.n_sites
    t = g.hopping
    car = spin_carriers(basis)
    m = sp.csr_matrix((basis.dim, basis.dim), dtype=complex)
    for x in range(n):
        for y in range(n):
            if t[x, y] == 0:
                continue
            terms = [term for k in range(2) for term in hop_term(car["c"][x][k], car["c"][y][k], -t[x, y])]
            e = electron_matrix(terms, basis)
            m = m + sp.kron(e, sp.csr_matrix(phase_operator(basis, params, x, y)), format="csr")
    J = params.J
    ladder = []
    rest = []
    for x in range(n):
        c, f = car["c"][x], car["f"][x]
        ladder += times(raising(*c), lowering(*f)) + times(lowering(*c), raising(*f))
        rest += scaled(times(sz(*c), sz(*f)), J)
    rest += scaled(total_sz_terms(basis), -2.0 * params.h)
    G = effective_G(params, n)
    for x in range(n):
        for y in range(n):
            if G[x, y] != 0:
                rest += scaled(times(site_number_terms(basis, x), site_number_terms(basis, y)), -G[x, y])
    el = electron_matrix(scaled(ladder, ladder_coefficient * J) + rest, basis)
    m = m + with_phonons(el, basis)
    m = m + params.omega * with_phonons(sp.identity(basis.n_electron), basis, basis.phonons.number())
    return OperatorMatrix(m, basis, "H_tilde[closed_form]", True)


def conjugated_ladder_coefficient(J: float = 1.0) -> float:
    """Coefficient ``k`` of ``k J (s+S- + s-S+)`` in ``e^{i pi N_down} H e^{-i pi N_down}``.

    Read off from the conjugated single-site exchange, not assumed.
    """
    from .basis import enumerate_sector
    from .lattice import LatticeGraph

    basis = enumerate_sector(1, None)
    one = LatticeGraph(np.zeros((1, 1)))
    Ht = build_H_tilde(basis, one, ModelParams(J=J), "conjugation").toarray()
    car = spin_carriers(basis)
    ladder = electron_matrix(times(raising(*car["c"][0]), lowering(*car["f"][0])), basis).toarray()
    i, j = np.argwhere(np.abs(ladder) > 0)[0]
    return float((Ht[i, j] / ladder[i, j]).real / J)


# -- Nagaoka-Thouless ----------------------------------------------------------


def build_NT_hamiltonian(
    nt_basis: SectorBasis, g: LatticeGraph, params: ModelParams, b_matrix: np.ndarray,
    density: str = "electron",
) -> OperatorMatrix:
    """``K_h + sum g_xy n^d_x (b_y + b*_y) Q + omega N_ph`` on the single-hole space.

    ``K_h = sum b_xy Q d*_{x,s} d_{y,s} Q - 2h S3_d Q``; the projection is the
    basis itself (hops into a doubly occupied site have no target).

    ``density="hole"`` couples the phonons to ``1 - n^d_x`` instead. The
    singlet at ``x`` carries its conduction electron where the NT state has
    its hole, so only this variant matches the J -> infinity limit for g != 0.
    """
    if density not in ("electron", "hole"):
        raise ValueError(f"unknown density {density!r}")
    _require(nt_basis, "nt")
    b_matrix = np.asarray(b_matrix, dtype=float)
    if not np.allclose(b_matrix, b_matrix.T):
        raise ValueError("b_matrix must be symmetric")
    terms = hopping_terms(nt_basis, -b_matrix, species="d")
    kh = _electron_op(terms, nt_basis, "K_h").matrix + build_zeeman(nt_basis, params.h).matrix
    dens = site_densities(nt_basis)
    if density == "hole":
        dens = 1.0 - dens
    coupling, energy = build_phonon_terms(nt_basis, params, dens)
    return OperatorMatrix(kh + coupling.matrix + energy.matrix, nt_basis, f"H_NT[{density}]", True)


# -- export ------------------------------------------------------------------


def export_triplets(op: OperatorMatrix, path) -> None:
    """Write ``row col re im`` lines after a ``# dim rows cols tag`` header."""
    coo = op.matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# dim {coo.shape[0]} {coo.shape[1]} {op.tag}\n")
        for r, c, v in sorted(zip(coo.row, coo.col, coo.data)):
            fh.write(f"{r} {c} {v.real:.17g} {v.imag:.17g}\n")


def read_triplets(path) -> tuple[sp.csr_matrix, str]:
    with open(path) as fh:
        header = fh.readline().split()
        rows, cols, tag = int(header[2]), int(header[3]), " ".join(header[4:])
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix((rows, cols), dtype=complex), tag
    vals = data[:, 2] + 1j * data[:, 3]
    m = sp.csr_matrix((vals, (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(rows, cols))
    return m, tag

"""Electron and phonon bases with S^3_tot sector decomposition.

Kondo basis vectors are ``|x, s; sigma> = c*_{x,s} prod_y f*_{y,sigma_y} |vac>``
with the f-product taken in increasing site order. Nagaoka-Thouless vectors
are ``d_{x,sigma_x} prod_y d*_{y,sigma_y} |vac>`` (one hole at ``x``). Each
vector is stored as its occupation word together with the sign that the
ordered product acquires against the canonical mode order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .fermions import DOWN, UP, KondoModes, NTModes, apply_op, create_state
from .lattice import LatticeGraph


class ElectronState(NamedTuple):
    """One conduction electron at ``x`` with spin ``spin`` over f-spins ``fconfig``."""

    x: int
    spin: int
    fconfig: int  # bit y set = f-spin up at y

    def twice_m(self, n: int) -> int:
        ups = bin(self.fconfig).count("1")
        return self.spin + 2 * ups - n

    def f_spin(self, y: int) -> int:
        return UP if (self.fconfig >> y) & 1 else DOWN

    def packed(self, n: int) -> int:
        return (self.x << (n + 1)) | ((self.spin == UP) << n) | self.fconfig


class NTBasisState(NamedTuple):
    """One hole at ``hole``; ``fconfig`` holds the spins elsewhere (hole bit is 0)."""

    hole: int
    fconfig: int

    def twice_m(self, n: int) -> int:
        ups = bin(self.fconfig).count("1")
        return 2 * ups - (n - 1)

    def f_spin(self, y: int) -> int:
        return UP if (self.fconfig >> y) & 1 else DOWN


def _as_twice_m(M) -> int:
    tm = round(2 * float(M))
    if abs(2 * float(M) - tm) > 1e-9:
        raise ValueError(f"M={M} is not a half-integer")
    return tm


def kondo_word(state: ElectronState, modes: KondoModes) -> tuple[int, int]:
    n = modes.n
    creators = [modes.c(state.x, state.spin)]
    creators += [modes.f(y, state.f_spin(y)) for y in range(n)]
    return create_state(creators)


def nt_word(state: NTBasisState, modes: NTModes) -> tuple[int, int]:
    n = modes.n
    # the hole site may carry either spin in the product; use up
    spins = [state.f_spin(y) if y != state.hole else UP for y in range(n)]
    word, sign = create_state([modes.d(y, spins[y]) for y in range(n)])
    res = apply_op(word, modes.d(state.hole, UP), dagger=False)
    assert res is not None
    word, s = res
    return word, sign * s


# -- phonons -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PhononBasis:
    """Truncated occupation basis for ``mode_count`` dispersionless modes.

    ``policy`` is ``"total"`` (sum of quanta <= ``cutoff``) or ``"per_mode"``
    (each ``n_x <= cutoff[x]``). States are listed in lexicographic order.
    """

    mode_count: int
    policy: str
    cutoff: Union[int, tuple]
    states: tuple = field(init=False, repr=False)
    index: dict = field(init=False, repr=False)

    def __post_init__(self):
        if self.policy == "total":
            if int(self.cutoff) < 0:
                raise ValueError("cutoff must be nonnegative")
            limits = [int(self.cutoff)] * self.mode_count
        elif self.policy == "per_mode":
            c = self.cutoff
            limits = [int(c)] * self.mode_count if np.isscalar(c) else [int(v) for v in c]
            if len(limits) != self.mode_count or min(limits, default=0) < 0:
                raise ValueError("per-mode cutoff must list one nonnegative value per mode")
            object.__setattr__(self, "cutoff", tuple(limits))
        else:
            raise ValueError(f"unknown cutoff policy {self.policy!r}")
        states = [
            occ
            for occ in itertools.product(*(range(m + 1) for m in limits))
            if self.policy == "per_mode" or sum(occ) <= int(self.cutoff)
        ]
        object.__setattr__(self, "states", tuple(states))
        object.__setattr__(self, "index", {s: i for i, s in enumerate(states)})

    @classmethod
    def total(cls, modes: int, n_max: int) -> "PhononBasis":
        return cls(modes, "total", int(n_max))

    @classmethod
    def per_mode(cls, modes: int, n_max) -> "PhononBasis":
        return cls(modes, "per_mode", n_max)

    @classmethod
    def vacuum(cls, modes: int) -> "PhononBasis":
        return cls(modes, "total", 0)

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def label(self) -> str:
        return f"{self.policy}:{self.cutoff}"

    def annihilator(self, mode: int) -> sp.csr_matrix:
        """``b_mode``; sqrt(n) ladder rule inside the truncated space."""
        rows, cols, vals = [], [], []
        for j, occ in enumerate(self.states):
            k = occ[mode]
            if k == 0:
                continue
            target = occ[:mode] + (k - 1,) + occ[mode + 1 :]
            i = self.index.get(target)
            if i is not None:
                rows.append(i)
                cols.append(j)
                vals.append(np.sqrt(k))
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.dim, self.dim))

    def creator(self, mode: int) -> sp.csr_matrix:
        """``b*_mode``; states on the top rung are mapped to zero."""
        return self.annihilator(mode).T.tocsr()

    def number(self) -> sp.csr_matrix:
        return sp.diags([float(sum(s)) for s in self.states], format="csr")

    def momentum(self, mode: int) -> sp.csr_matrix:
        """``p = (i/sqrt 2)(b* - b)``."""
        b = self.annihilator(mode)
        return (1j / np.sqrt(2)) * (b.T - b)

    def position(self, mode: int) -> sp.csr_matrix:
        b = self.annihilator(mode)
        return (b.T + b) / np.sqrt(2)

    def embed_into(self, larger: "PhononBasis") -> sp.csr_matrix:
        """Isometry mapping this basis into ``larger`` (state by state)."""
        rows = [larger.index[s] for s in self.states]
        return sp.csr_matrix(
            (np.ones(self.dim), (rows, range(self.dim))), shape=(larger.dim, self.dim)
        )


def phonon_truncation_series(cutoffs: Sequence, modes: int, policy: str = "total") -> list[PhononBasis]:
    """Nested phonon bases for a strictly increasing cutoff ladder."""
    cutoffs = list(cutoffs)
    if not cutoffs:
        raise ValueError("empty cutoff ladder")
    if any(b <= a for a, b in zip(cutoffs, cutoffs[1:])):
        raise ValueError(f"cutoff ladder must be strictly increasing, got {cutoffs}")
    return [PhononBasis(modes, policy, c) for c in cutoffs]


def phonon_dim_total(modes: int, n_max: int) -> int:
    return comb(n_max + modes, modes)


# -- electron sectors --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Electron states of one S^3_tot sector (or all of them) tensored with phonons.

    Global index of ``(electron i, phonon p)`` is ``i * phonons.dim + p``.
    """

    kind: str  # "kondo" or "nt"
    n_sites: int
    twice_m: Optional[int]  # None: the full electron space
    electron_states: tuple
    phonons: PhononBasis
    words: np.ndarray = field(repr=False)
    signs: np.ndarray = field(repr=False)
    word_index: dict = field(repr=False)
    state_index: dict = field(repr=False)

    @property
    def M(self) -> Optional[float]:
        return None if self.twice_m is None else self.twice_m / 2

    @property
    def n_electron(self) -> int:
        return len(self.electron_states)

    @property
    def dim(self) -> int:
        return self.n_electron * self.phonons.dim

    def index(self, state, phonon: Sequence[int] = None) -> int:
        i = self.state_index[state]
        p = 0 if phonon is None else self.phonons.index[tuple(phonon)]
        return i * self.phonons.dim + p

    def split(self, k: int) -> tuple:
        i, p = divmod(k, self.phonons.dim)
        return self.electron_states[i], self.phonons.states[p]

    def with_phonons(self, phonons: PhononBasis) -> "SectorBasis":
        return SectorBasis(
            self.kind, self.n_sites, self.twice_m, self.electron_states, phonons,
            self.words, self.signs, self.word_index, self.state_index,
        )

    def twice_m_of(self, state) -> int:
        return state.twice_m(self.n_sites)


def _build_sector(kind, n, twice_m, states, phonons) -> SectorBasis:
    if kind == "kondo":
        modes = KondoModes(n)
        ws = [kondo_word(s, modes) for s in states]
    else:
        modes = NTModes(n)
        ws = [nt_word(s, modes) for s in states]
    words = np.array([w for w, _ in ws], dtype=np.int64)
    signs = np.array([s for _, s in ws], dtype=np.int8)
    word_index = {int(w): i for i, w in enumerate(words)}
    if len(word_index) != len(states):
        raise RuntimeError("basis words are not distinct")
    state_index = {s: i for i, s in enumerate(states)}
    return SectorBasis(kind, n, twice_m, tuple(states), phonons, words, signs, word_index, state_index)


def sector_range(n: int, kind: str = "kondo") -> list[float]:
    """Admissible M values, ascending."""
    top = (n + 1) if kind == "kondo" else (n - 1)
    return [tm / 2 for tm in range(-top, top + 1, 2)]


def enumerate_sector(
    g: Union[LatticeGraph, int], M=None, phonons: Optional[PhononBasis] = None
) -> SectorBasis:
    """All ``(x, s, sigma)`` with ``s + sum(sigma) = 2M``; ``M=None`` gives the full space.

    Ordering: site, then conduction spin (up first), then f-config ascending.
    """
    n = g if isinstance(g, int) else g.site_count
    phonons = phonons or PhononBasis.vacuum(n)
    tm = None if M is None else _as_twice_m(M)
    if tm is not None and (abs(tm) > n + 1 or (tm + n + 1) % 2):
        raise ValueError(f"M={M} is outside the spectrum of S3_tot for {n} sites")
    states = [
        ElectronState(x, s, f)
        for x in range(n)
        for s in (UP, DOWN)
        for f in range(1 << n)
        if tm is None or ElectronState(x, s, f).twice_m(n) == tm
    ]
    return _build_sector("kondo", n, tm, states, phonons)


def enumerate_nt_sector(
    g: Union[LatticeGraph, int], M=None, phonons: Optional[PhononBasis] = None
) -> SectorBasis:
    """Single-hole states ``(x, sigma_x)`` with ``sum_{y != x} sigma_y = 2M``."""
    n = g if isinstance(g, int) else g.site_count
    phonons = phonons or PhononBasis.vacuum(n)
    tm = None if M is None else _as_twice_m(M)
    if tm is not None and (abs(tm) > n - 1 or (tm + n - 1) % 2):
        raise ValueError(f"M={M} is outside the spectrum of S3_tot for the NT model on {n} sites")
    states = [
        NTBasisState(x, f)
        for x in range(n)
        for f in range(1 << n)
        if not (f >> x) & 1 and (tm is None or NTBasisState(x, f).twice_m(n) == tm)
    ]
    return _build_sector("nt", n, tm, states, phonons)


def all_sectors(g: Union[LatticeGraph, int], phonons: Optional[PhononBasis] = None, kind: str = "kondo") -> list[SectorBasis]:
    n = g if isinstance(g, int) else g.site_count
    make = enumerate_sector if kind == "kondo" else enumerate_nt_sector
    return [make(n, M, phonons) for M in sector_range(n, kind)]

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kondo_phonon.basis import (
    ElectronState,
    NTBasisState,
    PhononBasis,
    all_sectors,
    enumerate_nt_sector,
    enumerate_sector,
    phonon_dim_total,
    phonon_truncation_series,
    sector_range,
)
from kondo_phonon.fermions import DOWN, UP
from kondo_phonon.lattice import ModelParams, chain, cycle
from kondo_phonon.operators import build_H
from kondo_phonon.spectral import ground_states

DECOUPLED_TOL = 1e-12


def test_top_sector_two_sites():
    b = enumerate_sector(chain(2), 1.5)
    assert set(b.electron_states) == {ElectronState(0, UP, 0b11), ElectronState(1, UP, 0b11)}


def test_sector_out_of_range():
    with pytest.raises(ValueError):
        enumerate_sector(chain(2), 2.5)
    with pytest.raises(ValueError):
        enumerate_sector(chain(2), 1.0)  # wrong parity


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_sector_sizes_sum_and_symmetry(n):
    sizes = {M: enumerate_sector(n, M).n_electron for M in sector_range(n)}
    assert sum(sizes.values()) == 2 * n * 2**n
    assert all(sizes[M] == sizes[-M] for M in sizes)
    assert sector_range(n)[-1] == (n + 1) / 2


def test_nt_sectors():
    b = enumerate_nt_sector(chain(2), 0.5)
    assert set(b.electron_states) == {NTBasisState(0, 0b10), NTBasisState(1, 0b01)}
    assert sum(s.n_electron for s in all_sectors(3, kind="nt")) == 12
    with pytest.raises(ValueError):
        enumerate_nt_sector(chain(2), 1.5)


@pytest.mark.parametrize("kind", ["kondo", "nt"])
def test_index_maps_are_inverse(kind):
    ph = PhononBasis.total(3, 2)
    for b in all_sectors(3, ph, kind):
        for k in range(b.dim):
            state, occ = b.split(k)
            assert b.index(state, occ) == k
        assert len(set(b.words.tolist())) == b.n_electron


def test_phonon_counts():
    series = phonon_truncation_series([0, 1, 2], 2)
    assert [p.dim for p in series] == [1, 3, 6]
    assert PhononBasis.per_mode(2, 1).dim == 4
    assert phonon_dim_total(3, 4) == PhononBasis.total(3, 4).dim
    with pytest.raises(ValueError):
        phonon_truncation_series([], 2)
    with pytest.raises(ValueError):
        phonon_truncation_series([2, 1], 2)


def test_phonon_order_is_lexicographic():
    states = PhononBasis.total(2, 2).states
    assert list(states) == sorted(states)


def test_nested_embedding_is_isometry():
    small, large = phonon_truncation_series([1, 3], 2)
    E = small.embed_into(large).toarray()
    assert np.allclose(E.T @ E, np.eye(small.dim))


def test_ladder_elements():
    ph = PhononBasis.total(2, 3)
    bd = ph.creator(1).toarray()
    assert bd[ph.index[(0, 1)], ph.index[(0, 0)]] == 1.0
    assert ph.number().diagonal()[ph.index[(2, 1)]] == 3.0
    # top rung is annihilated by the creator
    assert not bd[:, ph.index[(1, 2)]].any()


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(0, 3))
def test_ccr_defect_only_on_top_rung(modes, cutoff):
    ph = PhononBasis.total(modes, cutoff)
    for x in range(modes):
        for y in range(modes):
            b, bd = ph.annihilator(x), ph.creator(y)
            comm = (b @ bd - bd @ b).toarray()
            want = np.eye(ph.dim) if x == y else np.zeros((ph.dim, ph.dim))
            bad = np.argwhere(np.abs(comm - want) > 1e-12)
            for i, j in bad:
                assert sum(ph.states[j]) == cutoff


def test_phonons_decouple_at_zero_coupling():
    g = cycle(3)
    p = ModelParams(J=1.0, h=0.2)
    e = [ground_states(build_H(enumerate_sector(g, 0, PhononBasis.total(3, c)), g, p)).ground_energy for c in (0, 2)]
    assert abs(e[0] - e[1]) < DECOUPLED_TOL


def test_basis_state_spin_bookkeeping():
    s = ElectronState(1, DOWN, 0b101)
    assert s.twice_m(3) == -1 + 2 * 2 - 3
    assert s.f_spin(1) == DOWN and s.f_spin(2) == UP
    assert NTBasisState(0, 0b110).twice_m(3) == 2

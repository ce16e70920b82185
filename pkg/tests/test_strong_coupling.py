import numpy as np
import pytest

import _oracle as oracle
from kondo_phonon.basis import NTBasisState, PhononBasis, enumerate_sector
from kondo_phonon.lattice import LatticeGraph, ModelParams, chain, cycle, uniform_onsite
from kondo_phonon.operators import build_exchange, build_H, build_spin_operator
from kondo_phonon.strong_coupling import (
    ResolventError,
    build_projector,
    decompose,
    effective_hamiltonian,
    j_sweep,
    nt_label_basis,
    nt_unitary_check,
    onsite_exchange_levels,
    pair_vectors,
    renormalization_constant,
    resolvent_gap,
    separation_coefficient,
    separation_energy,
)

PROJ_TOL = 1e-13
EXACT_TOL = 1e-12
NT_TOL = 1e-10
FIT_TOL = 1e-8

G2 = np.array([[0.2, 0.1], [0.1, -0.3]])


def dense(op):
    return op.toarray()


def test_singlet_vectors_match_oracle():
    b = enumerate_sector(2, None)
    o = oracle.KondoOracle(2)
    B = o.basis_matrix(b.electron_states)
    V, labels = pair_vectors(b, "singlet")
    for k, lab in enumerate(labels):
        assert np.max(np.abs(B @ V[:, k] - o.singlet(lab.hole, lab.fconfig))) < PROJ_TOL


def test_projector_rank_and_algebra():
    b = enumerate_sector(2, None, PhononBasis.total(2, 1))
    pr = build_projector(b)
    P = dense(pr.P)
    assert pr.rank == 4 * b.phonons.dim
    assert np.max(np.abs(P @ P - P)) < PROJ_TOL
    assert np.max(np.abs(P - P.conj().T)) < PROJ_TOL
    assert np.trace(P).real == pytest.approx(pr.rank)
    assert np.linalg.matrix_rank(P) == pr.rank
    assert np.max(np.abs(P + dense(pr.P_perp) - np.eye(b.dim))) < PROJ_TOL
    for op in (build_spin_operator(b, "S3"),):
        A = dense(op)
        assert np.max(np.abs(A @ P - P @ A)) < PROJ_TOL
    N = np.kron(np.eye(b.n_electron), b.phonons.number().toarray())
    assert np.max(np.abs(N @ P - P @ N)) < PROJ_TOL


@pytest.mark.parametrize("n", [2, 3])
def test_projector_rank_per_sector(n):
    total = 0
    for M in np.arange(-(n + 1) / 2, (n + 1) / 2 + 1):
        b = enumerate_sector(n, M)
        expected = sum(1 for lab in nt_label_basis(enumerate_sector(n, None)).electron_states if lab.twice_m(n) == b.twice_m)
        assert build_projector(b).rank == expected
        total += expected
    assert total == n * 2 ** (n - 1)


def test_projector_kills_triplets():
    b = enumerate_sector(2, None)
    P = dense(build_projector(b).P)
    for kind in ("triplet+", "triplet0", "triplet-"):
        T, _ = pair_vectors(b, kind)
        assert np.max(np.abs(P @ T)) < PROJ_TOL


def test_exchange_eigen_action():
    b = enumerate_sector(3, None)
    pr = build_projector(b)
    X = build_exchange(b, 2.0).toarray()
    P, Q = dense(pr.P), dense(pr.P_perp)
    singlet, triplet = onsite_exchange_levels()
    assert np.max(np.abs(X @ P - 2.0 * singlet * P)) < EXACT_TOL
    assert np.max(np.abs(X @ Q - 2.0 * triplet * Q)) < EXACT_TOL


def test_renormalization_constant_is_computed():
    assert renormalization_constant(4.0) == pytest.approx(3.0, abs=1e-14)
    assert separation_coefficient() == pytest.approx(1.0, abs=1e-14)


@pytest.fixture(scope="module")
def decomposition():
    g = chain(2)
    b = enumerate_sector(g, 0.5, PhononBasis.total(2, 2))
    p = ModelParams(J=7.0, h=0.3, coupling=G2)
    return g, b, p, decompose(b, g, p)


def test_decomposition_sums_and_coupling(decomposition):
    g, b, p, d = decomposition
    total = dense(d.H_inf) + dense(d.H_1) + dense(d.H_01)
    assert np.max(np.abs(total - dense(d.H_ren))) < EXACT_TOL
    P, Q, T = dense(d.projector.P), dense(d.projector.P_perp), dense(d.T)
    assert np.max(np.abs(dense(d.H_01) - (P @ T @ Q + Q @ T @ P))) < EXACT_TOL
    assert np.max(np.abs(dense(d.H_inf) - P @ dense(d.R) @ P)) < EXACT_TOL


def test_effective_hamiltonian_is_J_independent(decomposition):
    g, b, p, _ = decomposition
    a = effective_hamiltonian(decompose(b, g, p.replace(J=1.0))).toarray()
    c = effective_hamiltonian(decompose(b, g, p.replace(J=100.0))).toarray()
    assert np.array_equal(a, c)


def test_effective_hamiltonian_matrix_elements():
    g = chain(3)
    p = ModelParams(J=1.0, h=0.4)
    b = enumerate_sector(g, None)
    Heff = effective_hamiltonian(decompose(b, g, p)).toarray()
    labels = build_projector(b).labels
    for i, a in enumerate(labels):
        for j, c in enumerate(labels):
            want = 0.0
            if a.hole == c.hole and a.fconfig == c.fconfig:
                want -= p.h * sum(a.f_spin(z) for z in range(3) if z != a.hole)
            elif a.hole != c.hole:
                # the spin sitting on the new hole moves to the old hole site
                same = all(a.f_spin(z) == c.f_spin(z) for z in range(3) if z not in (a.hole, c.hole))
                if same and c.f_spin(a.hole) == a.f_spin(c.hole):
                    want -= 0.5 * g.hopping[a.hole, c.hole]
            assert Heff[i, j] == pytest.approx(want, abs=EXACT_TOL)


def test_effective_hamiltonian_field_only_is_diagonal():
    g = LatticeGraph(np.zeros((3, 3)))
    b = enumerate_sector(g, None)
    Heff = effective_hamiltonian(decompose(b, g, ModelParams(J=1.0, h=0.5))).toarray()
    labels = build_projector(b).labels
    assert np.allclose(Heff, np.diag([-2 * 0.5 * lab.twice_m(3) / 2 for lab in labels]))


def test_effective_spectrum_matches_oracle():
    g = chain(2)
    b = enumerate_sector(g, None)
    p = ModelParams(J=1.0, h=0.2)
    o = oracle.KondoOracle(2)
    B = o.basis_matrix(b.electron_states)
    R = oracle.project(B, o.hopping(g.hopping) - 0.4 * o.s3_total())
    S = np.column_stack([B.T @ o.singlet(lab.hole, lab.fconfig) for lab in build_projector(b).labels])
    want = np.linalg.eigvalsh(S.T @ R @ S)
    got = np.linalg.eigvalsh(effective_hamiltonian(decompose(b, g, p)).toarray())
    assert np.max(np.abs(got - want)) < EXACT_TOL


def test_resolvent_gap_positive_and_decaying():
    g = chain(2)
    b = enumerate_sector(g, None)
    rows = j_sweep(b, g, ModelParams(J=10.0, h=0.1), [10, 20, 40, 80])
    gaps = [r.gap for r in rows]
    assert all(x > 0 for x in gaps)
    assert all(b_ <= a for a, b_ in zip(gaps, gaps[1:]))


def test_resolvent_gap_without_hopping_decays():
    g = LatticeGraph(np.zeros((2, 2)))
    b = enumerate_sector(g, None)
    p = ModelParams(J=10.0, h=0.2)
    rows = j_sweep(b, g, p, [10.0, 1000.0], z=2.0j)
    assert rows[1].gap < rows[0].gap / 50


def test_resolvent_gap_rejects_real_spectrum_point():
    g = chain(2)
    b = enumerate_sector(g, None)
    d = decompose(b, g, ModelParams(J=5.0))
    Heff = effective_hamiltonian(d)
    z = np.linalg.eigvalsh(d.H_ren.toarray())[0]
    with pytest.raises(ResolventError):
        resolvent_gap(d.H_ren, Heff, d.projector, complex(z))


def test_separation_energy_linear_with_computed_slope():
    g = chain(2)
    b = enumerate_sector(g, 0.5, PhononBasis.total(2, 2))
    fit = separation_energy(b, g, ModelParams(J=1.0, h=0.1, coupling=uniform_onsite(2, 0.3)), [10, 20, 40])
    assert fit.max_residual < FIT_TOL
    assert fit.slope == pytest.approx(fit.expected_slope, abs=FIT_TOL)
    assert fit.intercept == pytest.approx(fit.reference_intercept, abs=FIT_TOL)


def test_separation_energy_trivial_case():
    g = LatticeGraph(np.zeros((2, 2)))
    b = enumerate_sector(g, None)
    fit = separation_energy(b, g, ModelParams(J=1.0), [10, 20, 40])
    assert fit.reference_intercept == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(fit.energies, [separation_coefficient() * J for J in (10, 20, 40)])
    with pytest.raises(ValueError):
        separation_energy(b, g, ModelParams(J=1.0), [])


@pytest.mark.parametrize("g", [chain(2), cycle(3)])
def test_nt_equivalence_without_coupling(g):
    b = enumerate_sector(g, None, PhononBasis.total(g.site_count, 2))
    p = ModelParams(J=2.0, h=0.37)
    Heff = effective_hamiltonian(decompose(b, g, p))
    nb = nt_label_basis(b)
    assert nt_unitary_check(Heff, nb, g, p) < NT_TOL
    assert nt_unitary_check(Heff, nb, g, p, g.hopping / 3) > 1e-3


def test_nt_equivalence_with_coupling_needs_hole_density():
    g = chain(2)
    b = enumerate_sector(g, None, PhononBasis.total(2, 3))
    p = ModelParams(J=2.0, h=0.37, coupling=G2)
    Heff = effective_hamiltonian(decompose(b, g, p))
    nb = nt_label_basis(b)
    assert nt_unitary_check(Heff, nb, g, p, density="hole") < NT_TOL
    # coupling to n^d puts the phonon force on the wrong sites
    assert nt_unitary_check(Heff, nb, g, p, density="electron") > 0.1


def test_nt_check_size_mismatch():
    g = chain(2)
    b = enumerate_sector(g, None, PhononBasis.total(2, 1))
    Heff = effective_hamiltonian(decompose(b, g, ModelParams(J=1.0)))
    with pytest.raises(ValueError):
        nt_unitary_check(Heff, nt_label_basis(enumerate_sector(g, None)), g, ModelParams(J=1.0))


def test_singlet_labels_follow_nt_order():
    b = enumerate_sector(3, 0)
    labels = build_projector(b).labels
    assert labels == list(nt_label_basis(b).electron_states)
    assert all(isinstance(lab, NTBasisState) for lab in labels)

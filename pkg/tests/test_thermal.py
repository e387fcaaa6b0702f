import math

import numpy as np
import pytest

from conftest import random_density, random_hermitian_op

from vcool.fock import BOSON, FERMION, Operator, enumerate_basis, \
    total_number_op
from vcool.model import ModelParams, bose_hubbard
from vcool.thermal import (DensityMatrix, FitConvergenceError,
                           FitInfeasibleError, fit_effective_ensemble,
                           grand_canonical_diagonal, grand_canonical_state,
                           matrix_power_state, partial_trace,
                           partial_trace_vector, purity, renyi_entropy,
                           thermal_state, trace_distance)


def _two_level(delta=1.5):
    b = enumerate_basis(BOSON, 2, n_total=1)
    return Operator(b, b, np.diag([0.0, delta]), hermitian=True,
                    diagonal=True)


def test_infinite_temperature_is_maximally_mixed():
    h = _two_level()
    rho = thermal_state(h, 0.0)
    assert np.allclose(rho.matrix, np.eye(2) / 2)


def test_two_level_closed_form():
    h = _two_level(1.5)
    rho = thermal_state(h, 0.8)
    w = np.array([1.0, math.exp(-0.8 * 1.5)])
    assert np.allclose(np.diagonal(rho.matrix), w / w.sum())


def test_large_beta_is_ground_projector(rng):
    basis = enumerate_basis(BOSON, 4, n_total=2)
    h = bose_hubbard(basis, ModelParams(L=4, U=1.3))
    rho = thermal_state(h, 200.0)
    energies, vecs = np.linalg.eigh(h.dense())
    gs = vecs[:, 0]
    fidelity = float(np.real(gs @ rho.matrix @ gs))
    assert fidelity > 1 - 1e-8
    rho.validate()


def test_thermal_rejects_bad_input():
    h = _two_level()
    with pytest.raises(ValueError):
        thermal_state(h, -0.1)
    b = h.basis
    skew = Operator(b, b, np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError, match="Hermitian"):
        thermal_state(skew, 1.0)


def test_grand_canonical_limits():
    ub = enumerate_basis(BOSON, 2, n_total=range(0, 5))
    h = bose_hubbard(ub, ModelParams(L=2, U=1.0))
    n = total_number_op(ub)
    flat = grand_canonical_state(h, n, 0.0, 0.3)
    assert np.allclose(np.diagonal(flat.matrix), 1.0 / ub.dim)
    cold = grand_canonical_state(h, n, 2.0, -30.0)
    vac = ub.index_of((0, 0))
    assert np.real(cold.matrix[vac, vac]) > 1 - 1e-12


def test_grand_canonical_commutation_guard(rng):
    ub = enumerate_basis(BOSON, 2, n_total=range(0, 3))
    h = random_hermitian_op(ub, rng)  # mixes number sectors
    n = total_number_op(ub)
    with pytest.raises(ValueError, match="commute"):
        grand_canonical_state(h, n, 1.0, 0.0)


def test_single_mode_bose_occupation():
    # geometric-series partial-sum oracle at finite cutoff, H = 0
    cutoff = 30
    b = enumerate_basis(BOSON, 1, n_max=cutoff)
    h = Operator(b, b, np.zeros((b.dim, b.dim)), hermitian=True)
    n = total_number_op(b)
    beta, mu = 1.3, -0.7
    rho = grand_canonical_state(h, n, beta, mu)
    x = math.exp(beta * mu)
    ns = np.arange(cutoff + 1)
    weights = x ** ns
    oracle = float((ns * weights).sum() / weights.sum())
    assert rho.expectation(n) == pytest.approx(oracle, abs=1e-12)
    # large-cutoff limit approaches 1/(exp(-beta mu) - 1)
    assert rho.expectation(n) == pytest.approx(1 / (math.exp(-beta * mu) - 1),
                                               rel=1e-6)


def test_matrix_power_identity_and_arithmetic():
    b = enumerate_basis(BOSON, 2, n_total=1)
    rho = DensityMatrix(b, np.diag([0.6, 0.4]))
    assert matrix_power_state(rho, 1) is rho
    sq = matrix_power_state(rho, 2)
    assert np.allclose(np.diagonal(sq.matrix), [0.36 / 0.52, 0.16 / 0.52])


def test_matrix_power_halves_temperature(rng):
    for _ in range(10):
        dim = int(rng.integers(5, 51))
        basis = enumerate_basis(BOSON, dim, n_total=1)
        h = random_hermitian_op(basis, rng)
        beta = float(rng.uniform(0.2, 3.0))
        halved = matrix_power_state(thermal_state(h, beta), 2)
        assert trace_distance(halved, thermal_state(h, 2 * beta)) < 1e-9
        assert halved.provenance.beta == pytest.approx(2 * beta)


def test_matrix_power_vanishing_purity():
    b = enumerate_basis(BOSON, 2, n_total=1)
    rho = DensityMatrix(b, np.diag([0.5, 0.5]))
    with pytest.raises(ValueError, match="vanish"):
        matrix_power_state(rho, 1200)  # 2 * 0.5**1200 underflows


def test_purity_examples(rng):
    b = enumerate_basis(BOSON, 2, n_total=1)
    pure = DensityMatrix(b, np.diag([1.0, 0.0]))
    for n in (2, 3, 5):
        assert purity(pure, n) == pytest.approx(1.0)
    d = 8
    basis = enumerate_basis(BOSON, d, n_total=1)
    mixed = DensityMatrix(basis, np.eye(d) / d)
    assert purity(mixed, 2) == pytest.approx(1 / d)
    qubit = DensityMatrix(b, np.diag([0.6, 0.4]))
    assert purity(qubit, 2) == pytest.approx(0.52)
    assert renyi_entropy(qubit, 2) == pytest.approx(-math.log(0.52))


def test_renyi_entropy_bounds(rng):
    basis = enumerate_basis(BOSON, 3, n_total=2)
    for _ in range(20):
        rho = random_density(basis, rng)
        s = renyi_entropy(rho, 2)
        assert -1e-12 <= s <= math.log(basis.dim) + 1e-12


def test_maximally_mixed_cutoff_purity():
    # d modes per site: Z2 = d**(-|R|) for the flat state on a cutoff basis
    cap = 2
    b = enumerate_basis(BOSON, 3, n_max=cap)
    mixed = DensityMatrix(b, np.eye(b.dim) / b.dim)
    assert purity(mixed, 2) == pytest.approx((cap + 1.0) ** -3)


def test_fit_roundtrip():
    ub = enumerate_basis(BOSON, 4, n_total=range(0, 7))
    h = bose_hubbard(ub, ModelParams(L=4, U=1.56))
    n = total_number_op(ub)
    for (beta, mu) in [(0.29, -1.0), (1.2, 0.4), (3.0, -2.5)]:
        gc = grand_canonical_state(h, n, beta, mu)
        fit = fit_effective_ensemble(h, n, gc.expectation(h),
                                     gc.expectation(n))
        assert fit.beta == pytest.approx(beta, abs=1e-6)
        assert fit.mu == pytest.approx(mu, abs=1e-6)
        assert abs(fit.e_residual) < 1e-8 and abs(fit.n_residual) < 1e-8


def test_fit_infinite_temperature_targets():
    ub = enumerate_basis(BOSON, 3, n_total=range(0, 5))
    h = bose_hubbard(ub, ModelParams(L=3, U=1.0))
    n = total_number_op(ub)
    e_flat = float(np.trace(h.dense()) / ub.dim)
    n_flat = float(np.trace(n.dense()) / ub.dim)
    fit = fit_effective_ensemble(h, n, e_flat, n_flat)
    assert fit.beta < 1e-4


def test_fit_monotone_in_energy():
    ub = enumerate_basis(BOSON, 3, n_total=range(0, 6))
    h = bose_hubbard(ub, ModelParams(L=3, U=1.2))
    n = total_number_op(ub)
    betas = []
    for e in (-1.5, -1.0, -0.5, 0.0, 0.5):
        betas.append(fit_effective_ensemble(h, n, e, 2.0).beta)
    assert all(b1 >= b2 - 1e-9 for b1, b2 in zip(betas, betas[1:]))


def test_fit_infeasible_targets():
    ub = enumerate_basis(BOSON, 3, n_total=range(0, 4))
    h = bose_hubbard(ub, ModelParams(L=3, U=1.0))
    n = total_number_op(ub)
    with pytest.raises(FitInfeasibleError):
        fit_effective_ensemble(h, n, 0.0, 9.0)  # density out of range
    with pytest.raises(FitInfeasibleError):
        fit_effective_ensemble(h, n, -50.0, 2.0)  # below the ground energy


def test_grand_canonical_diagonal_matches_dense():
    ub = enumerate_basis(BOSON, 3, n_total=range(0, 5))
    h = bose_hubbard(ub, ModelParams(L=3, U=1.4))
    n = total_number_op(ub)
    diag = grand_canonical_diagonal(h, n, 0.9, -0.4)
    dense = grand_canonical_state(h, n, 0.9, -0.4)
    assert np.abs(diag - np.real(np.diagonal(dense.matrix))).max() < 1e-12


def test_partial_trace_keep_all_is_identity(rng):
    basis = enumerate_basis(BOSON, 3, n_total=2)
    rho = random_density(basis, rng)
    red = partial_trace(rho, keep=range(3))
    # reduced basis is the union 0..2; the N=2 block carries the state
    blk = red.basis.block_slice(2)
    assert np.abs(red.matrix[blk, blk] - rho.matrix).max() < 1e-12


def test_partial_trace_product_state_is_pure():
    basis = enumerate_basis(BOSON, 4, n_total=3)
    v = np.zeros(basis.dim)
    v[basis.index_of((1, 0, 2, 0))] = 1.0
    red = partial_trace_vector(v, basis, keep=[1, 2])
    assert purity(red, 2) == pytest.approx(1.0)


def test_partial_trace_bell_state():
    basis = enumerate_basis(BOSON, 2, n_total=1)
    psi = np.array([1.0, 1.0]) / math.sqrt(2)
    red = partial_trace_vector(psi, basis, keep=[0])
    assert np.allclose(np.diagonal(red.matrix), [0.5, 0.5])
    assert renyi_entropy(red, 2) == pytest.approx(math.log(2))


def test_partial_trace_dm_matches_vector(rng):
    basis = enumerate_basis(FERMION, 5, n_total=2)
    g = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    psi = g / np.linalg.norm(g)
    rv = partial_trace_vector(psi, basis, keep=[0, 2, 4])
    rd = partial_trace(DensityMatrix(basis, np.outer(psi, psi.conj())),
                       keep=[0, 2, 4])
    assert np.abs(rv.matrix - rd.matrix).max() < 1e-12


def test_fermionic_partial_trace_entropy_symmetry(rng):
    # pure-state bipartition entropies agree, a sign-sensitive check
    basis = enumerate_basis(FERMION, 6, n_total=3)
    g = rng.normal(size=basis.dim) + 1j * rng.normal(size=basis.dim)
    psi = g / np.linalg.norm(g)
    keep = [0, 2, 5]
    rest = [1, 3, 4]
    s_keep = renyi_entropy(partial_trace_vector(psi, basis, keep), 2)
    s_rest = renyi_entropy(partial_trace_vector(psi, basis, rest), 2)
    assert s_keep == pytest.approx(s_rest, abs=1e-10)


def test_density_matrix_validation():
    b = enumerate_basis(BOSON, 2, n_total=1)
    with pytest.raises(ValueError, match="trace"):
        DensityMatrix(b, np.diag([0.9, 0.4])).validate()
    with pytest.raises(ValueError, match="Hermitian"):
        DensityMatrix(b, np.array([[0.5, 0.2], [0.1, 0.5]])).validate()
    with pytest.raises(ValueError, match="negative"):
        DensityMatrix(b, np.diag([1.2, -0.2])).validate()

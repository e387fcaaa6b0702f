import math

import numpy as np
import pytest

from vcool.fock import (BOSON, FERMION, enumerate_basis, ladder, number_op,
                        total_number_op, hop_op)


def test_boson_two_mode_sector():
    b = enumerate_basis(BOSON, 2, n_total=2)
    assert b.dim == 3
    assert [tuple(s) for s in b.states] == [(2, 0), (1, 1), (0, 2)]


def test_fermion_sector_size():
    assert enumerate_basis(FERMION, 4, n_total=2).dim == 6


def test_large_boson_sector_size():
    # four particles on sixteen sites
    b = enumerate_basis(BOSON, 16, n_total=4)
    assert b.dim == math.comb(19, 4) == 3876


def test_enumeration_deterministic():
    a = enumerate_basis(BOSON, 5, n_total=3)
    b = enumerate_basis(BOSON, 5, n_total=3)
    assert np.array_equal(a.states, b.states)


def test_index_roundtrip_all_sector_kinds():
    for basis in (enumerate_basis(BOSON, 4, n_total=3),
                  enumerate_basis(BOSON, 3, n_total=range(0, 4)),
                  enumerate_basis(BOSON, 3, n_max=2),
                  enumerate_basis(FERMION, 5, n_total=2),
                  enumerate_basis(FERMION, 3, n_max=1)):
        idx = basis.index_array(basis.states)
        assert np.array_equal(idx, np.arange(basis.dim))
        assert basis.index_of(tuple(basis.states[basis.dim // 2])) \
            == basis.dim // 2


def test_infeasible_sector_rejected():
    with pytest.raises(ValueError, match="infeasible"):
        enumerate_basis(FERMION, 3, n_total=4)
    with pytest.raises(ValueError):
        enumerate_basis(BOSON, 0, n_total=1)


def test_block_slice_union():
    u = enumerate_basis(BOSON, 3, n_total=range(0, 4))
    for t in (0, 1, 2, 3):
        blk = u.states[u.block_slice(t)]
        assert np.all(blk.sum(axis=1) == t)


def test_boson_raise_element():
    b = enumerate_basis(BOSON, 1, n_max=4)
    ad = ladder(b, 0, "raise").dense()
    v = np.zeros(b.dim)
    v[b.index_of((1,))] = 1.0
    out = ad @ v
    assert out[b.index_of((2,))] == pytest.approx(math.sqrt(2))


def test_fermion_raise_on_occupied_vanishes():
    b = enumerate_basis(FERMION, 2, n_max=1)
    ad = ladder(b, 0, "raise").dense()
    v = np.zeros(b.dim)
    v[b.index_of((1, 0))] = 1.0
    assert np.all(ad @ v == 0)


def _first_quantized_lower(basis, target, mode):
    """Independent sign oracle: a fermionic state is an ordered product of
    creation operators; removing mode m costs (-1)**(position of m among
    the occupied modes)."""
    m = np.zeros((target.dim, basis.dim))
    for col, occ in enumerate(basis.states):
        occupied = [i for i, o in enumerate(occ) if o]
        if mode not in occupied:
            continue
        sign = (-1) ** occupied.index(mode)
        new = list(occ)
        new[mode] = 0
        m[target.index_of(tuple(new)), col] = sign
    return m


@pytest.mark.parametrize("L,N", [(3, 2), (4, 2), (4, 3), (4, 4)])
def test_fermion_lowering_signs_against_oracle(L, N):
    basis = enumerate_basis(FERMION, L, n_total=N)
    target = enumerate_basis(FERMION, L, n_total=N - 1)
    for mode in range(L):
        ours = ladder(basis, mode, "lower").dense()
        oracle = _first_quantized_lower(basis, target, mode)
        assert np.abs(ours - oracle).max() < 1e-14


def test_fermion_lower_specific_sign():
    # lowering the last of three filled modes crosses two particles: sign +1
    basis = enumerate_basis(FERMION, 3, n_total=3)
    target = enumerate_basis(FERMION, 3, n_total=2)
    low = ladder(basis, 2, "lower").dense()
    assert low[target.index_of((1, 1, 0)), basis.index_of((1, 1, 1))] == 1.0


def test_number_op_diagonal():
    b = enumerate_basis(BOSON, 2, n_total=2)
    assert np.allclose(np.diagonal(number_op(b, 0).dense()), [2, 1, 0])


def test_number_sums_to_total():
    b = enumerate_basis(BOSON, 4, n_total=3)
    total = sum(number_op(b, m).dense() for m in range(4))
    assert np.allclose(total, 3 * np.eye(b.dim))


def test_number_trace_homogeneous():
    # direct summation oracle: sum of one site's occupation over the sector
    b = enumerate_basis(BOSON, 4, n_total=3)
    for j in range(4):
        oracle = float(b.states[:, j].sum())
        assert np.trace(number_op(b, j).dense()) == pytest.approx(oracle)
        assert oracle == pytest.approx(3 * b.dim / 4)


def test_boson_commutation_between_sectors():
    b = enumerate_basis(BOSON, 3, n_total=2)
    eye = np.eye(b.dim)
    for i in range(3):
        for j in range(3):
            up = ladder(b, j, "raise")
            t1 = ladder(up.row_basis, i, "lower").dense() @ up.dense()
            down = ladder(b, i, "lower")
            t2 = ladder(down.row_basis, j, "raise").dense() @ down.dense()
            assert np.abs(t1 - t2 - (i == j) * eye).max() < 1e-12


def test_fermion_anticommutation_exact():
    b = enumerate_basis(FERMION, 4, n_total=2)
    eye = np.eye(b.dim)
    for i in range(4):
        for j in range(4):
            up = ladder(b, j, "raise")
            t1 = ladder(up.row_basis, i, "lower").dense() @ up.dense()
            down = ladder(b, i, "lower")
            t2 = ladder(down.row_basis, j, "raise").dense() @ down.dense()
            assert np.abs(t1 + t2 - (i == j) * eye).max() == 0.0


@pytest.mark.parametrize("stats,L,N", [(BOSON, 4, 3), (FERMION, 4, 2)])
def test_number_equals_raise_lower(stats, L, N):
    b = enumerate_basis(stats, L, n_total=N)
    for m in range(L):
        low = ladder(b, m, "lower")
        composed = ladder(low.row_basis, m, "raise").dense() @ low.dense()
        assert np.abs(composed - number_op(b, m).dense()).max() < 1e-12


def test_ladder_errors():
    b = enumerate_basis(BOSON, 2, n_total=1)
    with pytest.raises(ValueError, match="out of range"):
        ladder(b, 5, "raise")
    with pytest.raises(ValueError):
        ladder(b, 0, "sideways")
    vac = enumerate_basis(BOSON, 2, n_total=0)
    with pytest.raises(ValueError, match="vacuum"):
        ladder(vac, 0, "lower")


def test_operator_flags_checked():
    b = enumerate_basis(BOSON, 3, n_total=2)
    number_op(b, 1).check_flags()
    total_number_op(b).check_flags()


def test_hop_preserves_sector():
    b = enumerate_basis(BOSON, 3, n_total=2)
    t = hop_op(b, 0, 2)
    assert t.row_basis == b and t.col_basis == b
    # moving a particle out of an empty mode annihilates
    v = np.zeros(b.dim)
    v[b.index_of((2, 0, 0))] = 1.0
    assert np.all(t.dense() @ v == 0)

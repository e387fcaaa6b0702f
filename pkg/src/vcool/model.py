"""Lattice Hamiltonians: 1D Bose-Hubbard chain, inter-copy tunnel coupling,
and a spinless-fermion hopping chain used to exercise the fermionic protocol.

Energy units: the tunneling J is 1 internally; interaction, temperature,
chemical potential and time are all expressed in units of J (hbar = 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fock import (BOSON, FERMION, DENSE_LIMIT, FockBasis, Operator,
                   hop_op)
from .replica import ReplicaBasis


@dataclass(frozen=True)
class ModelParams:
    """Couplings of the lattice models.

    L: sites per copy.  J: tunneling energy (energy unit).  U: interaction
    energy, on-site n(n-1)/2 for bosons, nearest-neighbor density-density
    for fermions.  J_BS: inter-copy tunneling of the beamsplitter.
    """

    L: int
    J: float = 1.0
    U: float = 0.0
    boundary: str = "open"
    J_BS: float = 1.0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("L must be >= 1")
        if self.boundary not in ("open", "periodic"):
            raise ValueError("boundary must be 'open' or 'periodic'")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(L=int(d["L"]), J=float(d.get("J", 1.0)),
                   U=float(d.get("U", 0.0)),
                   boundary=str(d.get("boundary", "open")),
                   J_BS=float(d.get("J_BS", 1.0)))


def bonds(L: int, boundary: str) -> list[tuple[int, int]]:
    """Nearest-neighbor bonds of the chain. The periodic wrap bond is added
    for L >= 3 (for L <= 2 it would duplicate an existing bond)."""
    out = [(j, j + 1) for j in range(L - 1)]
    if boundary == "periodic" and L >= 3:
        out.append((L - 1, 0))
    return out


def _zeros_like_basis(basis: FockBasis):
    if basis.dim > DENSE_LIMIT:
        return sp.csr_matrix((basis.dim, basis.dim))
    return np.zeros((basis.dim, basis.dim))


def _hopping(basis: FockBasis, pairs, amplitude: float):
    h = _zeros_like_basis(basis)
    for (i, j) in pairs:
        t = hop_op(basis, i, j).matrix
        h = h + amplitude * (t + t.conj().T)
    return h


def _diagonal(basis: FockBasis, values: np.ndarray):
    if basis.dim > DENSE_LIMIT:
        return sp.diags(values).tocsr()
    return np.diag(values)


def bose_hubbard(basis: FockBasis, params: ModelParams) -> Operator:
    """H = -J sum_<jk> (ad_j a_k + h.c.) + (U/2) sum_j n_j (n_j - 1)."""
    if basis.statistics != BOSON:
        raise ValueError("Bose-Hubbard needs a bosonic basis")
    if basis.num_modes != params.L:
        raise ValueError(f"basis has {basis.num_modes} modes, params.L={params.L}")
    occ = basis.states.astype(np.int64)
    inter = 0.5 * params.U * (occ * (occ - 1)).sum(axis=1).astype(float)
    h = _hopping(basis, bonds(params.L, params.boundary), -params.J)
    h = h + _diagonal(basis, inter)
    return Operator(basis, basis, h, hermitian=True)


def beamsplitter_hamiltonian(replica: ReplicaBasis,
                             params: ModelParams) -> Operator:
    """Inter-copy tunneling -J_BS sum_j (ad_{1,j} a_{2,j} + h.c.).

    Couples the two copies site by site; no intra-copy terms.
    """
    if replica.n != 2:
        raise ValueError("beamsplitter coupling is defined between two copies")
    jb = replica.joint_basis
    pairs = [(replica.joint_mode(0, j), replica.joint_mode(1, j))
             for j in range(replica.sites)]
    h = _hopping(jb, pairs, -params.J_BS)
    return Operator(jb, jb, h, hermitian=True)


def fermi_hopping(basis: FockBasis, params: ModelParams) -> Operator:
    """Spinless fermions: -J sum_<jk> (fd_j f_k + h.c.) + U sum_<jk> n_j n_k."""
    if basis.statistics != FERMION:
        raise ValueError("fermionic chain needs a fermionic basis")
    if basis.num_modes != params.L:
        raise ValueError(f"basis has {basis.num_modes} modes, params.L={params.L}")
    pairs = bonds(params.L, params.boundary)
    occ = basis.states.astype(np.int64)
    inter = params.U * sum(occ[:, i] * occ[:, j] for i, j in pairs).astype(float) \
        if pairs else np.zeros(basis.dim)
    h = _hopping(basis, pairs, -params.J)
    h = h + _diagonal(basis, inter)
    return Operator(basis, basis, h, hermitian=True)

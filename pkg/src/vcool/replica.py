"""Replica (multi-copy) spaces and the operators that exchange copies.

The joint space of n copies of an L-site system lives on n*L flat modes,
copy-major.  This module builds:

  * the cyclic permutation that shifts copy contents,
  * the inter-copy Fourier transform (generalized beamsplitter), defined by
    its action on creation operators,
        F ad(p, j) F^dag = (1/sqrt(n)) sum_k exp(+i 2 pi k p / n) ad(k, j)
    with copies labeled 1..n in the phase and vacuum mapped to vacuum with
    coefficient +1,
  * the number-diagonal phase operator whose eigenvalue on an occupation
    pattern is exp(-i 2 pi / n * sum_{p,j} p * n_{p,j}); for two copies this
    is the particle-number parity of the first copy,
  * the fermionic two-copy Fourier transform and the diagonal +-1 operator
    that replaces the parity in the fermionic purity identity, defined by a
    verbatim eight-row outcome table.

With these conventions the identity  permutation = F^dag . phase . F  holds
exactly on every boson sector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache, cached_property
from itertools import product as _iter_product

import numpy as np
import scipy.sparse as sp

from .fock import (BOSON, FERMION, DENSE_LIMIT, FockBasis, Operator,
                   enumerate_basis, ladder)

# Mutation hook for suite-sensitivity testing: the acceptance runner can set
# this to -1 to deliberately break the phase operator sign.
_PHASE_SIGN_MUTATION = 1.0


class ReplicaBasis:
    """Joint Fock basis of n copies of a single-copy basis.

    The joint sector is the closure of the n-fold product under total-number
    conserving mode mixing: fixed N per copy gives the fixed n*N joint
    sector; a union of copy totals gives the union of all achievable sums.
    Cutoff copy bases produce a cutoff joint basis on which only the
    permutation operator is defined (mode mixing violates per-mode caps).
    """

    def __init__(self, copy_basis: FockBasis, n: int):
        if n < 2:
            raise ValueError("a replica basis needs n >= 2 copies")
        self.n = int(n)
        self.copy_basis = copy_basis
        L = copy_basis.num_modes
        if copy_basis.sector_kind == "cutoff":
            joint = enumerate_basis(copy_basis.statistics, n * L,
                                    n_max=copy_basis.cap)
        else:
            sums = {sum(c) for c in
                    _iter_product(copy_basis.totals, repeat=n)}
            totals = sorted(sums)
            joint = enumerate_basis(copy_basis.statistics, n * L,
                                    n_total=totals[0] if len(totals) == 1
                                    else totals)
        self.joint_basis = joint

    @property
    def sites(self) -> int:
        return self.copy_basis.num_modes

    @property
    def statistics(self) -> str:
        return self.copy_basis.statistics

    def joint_mode(self, copy: int, site: int) -> int:
        if not (0 <= copy < self.n and 0 <= site < self.sites):
            raise ValueError("copy or site out of range")
        return copy * self.sites + site

    def copy_totals(self, occs: np.ndarray | None = None) -> np.ndarray:
        """Per-copy particle totals, shape (rows, n)."""
        if occs is None:
            occs = self.joint_basis.states
        return occs.reshape(len(occs), self.n, self.sites).sum(axis=2)

    @cached_property
    def product_index_map(self) -> np.ndarray:
        """Joint index of every n-tuple of copy-basis states.

        Shape (dim_copy,) * n.  Total for product sectors; on the copy-major
        flattening tuple (i_1, .., i_n) maps to the concatenated occupation.
        """
        c = self.copy_basis
        if c.dim ** self.n > 40_000_000:
            raise MemoryError("product index map too large; embed states "
                              "incrementally instead")
        grids = np.meshgrid(*[np.arange(c.dim)] * self.n, indexing="ij")
        occ = np.concatenate(
            [c.states[g.ravel()] for g in grids], axis=1)
        return self.joint_basis.index_array(occ).reshape((c.dim,) * self.n)

    def product_state(self, *vectors: np.ndarray) -> np.ndarray:
        """Embed a tensor product of copy vectors into the joint basis."""
        if len(vectors) != self.n:
            raise ValueError(f"need {self.n} copy vectors")
        amp = vectors[0]
        for v in vectors[1:]:
            amp = np.multiply.outer(amp, v)
        out = np.zeros(self.joint_basis.dim, dtype=amp.dtype)
        out[self.product_index_map.ravel()] = amp.ravel()
        return out

    @cached_property
    def fourier_factors(self) -> list:
        """Per-site sparse factors of the inter-copy Fourier transform."""
        return [_fourier_site_factor(self, j) for j in range(self.sites)]

    def __repr__(self):
        return f"ReplicaBasis(n={self.n}, copy={self.copy_basis!r})"


def replica_basis(copy_basis: FockBasis, n: int) -> ReplicaBasis:
    return ReplicaBasis(copy_basis, n)


# ---------------------------------------------------------------------------
# Cyclic permutation


def permutation_op(replica: ReplicaBasis) -> Operator:
    """Unitary cycling copy contents: state of copy p+1 moves to copy p.

    For fermions (two copies) the exchange carries the reordering sign
    (-1)**(N_1 * N_2) of moving one copy's creation operators past the
    other's.
    """
    jb = replica.joint_basis
    n, L = replica.n, replica.sites
    occ = jb.states.reshape(jb.dim, n, L)
    # output copy slot c receives the contents of slot c+1 (cyclically)
    rolled = np.roll(occ, -1, axis=1).reshape(jb.dim, n * L)
    rows = jb.index_array(rolled)
    if replica.statistics == FERMION:
        if n != 2:
            raise NotImplementedError("fermionic permutation beyond two "
                                      "copies is out of scope")
        n1 = occ[:, 0].sum(axis=1).astype(np.int64)
        n2 = occ[:, 1].sum(axis=1).astype(np.int64)
        vals = np.where((n1 * n2) % 2 == 0, 1.0, -1.0)
    else:
        vals = np.ones(jb.dim)
    if jb.dim > DENSE_LIMIT:
        m = sp.coo_matrix((vals, (rows, np.arange(jb.dim))),
                          shape=(jb.dim, jb.dim)).tocsr()
    else:
        m = np.zeros((jb.dim, jb.dim))
        m[rows, np.arange(jb.dim)] = vals
    return Operator(jb, jb, m, unitary=True, hermitian=(n == 2))


def symmetrize(x_single: Operator, replica: ReplicaBasis) -> Operator:
    """Copy-averaged embedding (1/n) sum_m X acting on copy m.

    The single-copy operator is zero-extended outside its own sector, which
    is the only part ever probed by traces against permuted product states.
    """
    if x_single.row_basis != replica.copy_basis:
        raise ValueError("observable is not expressed in the copy basis")
    jb = replica.joint_basis
    n, L = replica.n, replica.sites
    occ = jb.states
    x = x_single.dense()
    cb = replica.copy_basis
    rows, cols, vals = [], [], []
    for m in range(n):
        block = occ[:, m * L:(m + 1) * L]
        in_sector = np.isin(block.sum(axis=1), cb._totals_arr)
        if cb.cap is not None:
            in_sector &= (block.max(axis=1) <= cb._cap_value)
        idx = np.flatnonzero(in_sector)
        copy_idx = cb.index_array(block[idx])
        # joint states grouped by the configuration of the other copies
        rest = np.delete(occ[idx], np.s_[m * L:(m + 1) * L], axis=1)
        order = np.lexsort(rest.T[::-1])
        rest_sorted = rest[order]
        starts = np.flatnonzero(
            np.concatenate([[True], np.any(rest_sorted[1:] != rest_sorted[:-1],
                                           axis=1)]))
        bounds = np.concatenate([starts, [len(order)]])
        for g in range(len(starts)):
            members = idx[order[bounds[g]:bounds[g + 1]]]
            cidx = copy_idx[order[bounds[g]:bounds[g + 1]]]
            sub = x[np.ix_(cidx, cidx)] / n
            nz = np.nonzero(sub)
            rows.extend(members[nz[0]])
            cols.extend(members[nz[1]])
            vals.extend(sub[nz])
    shape = (jb.dim, jb.dim)
    if jb.dim > DENSE_LIMIT:
        m_out = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    else:
        m_out = np.zeros(shape, dtype=x.dtype)
        np.add.at(m_out, (np.asarray(rows, dtype=np.int64),
                          np.asarray(cols, dtype=np.int64)), vals)
    return Operator(jb, jb, m_out, hermitian=x_single.hermitian)


# ---------------------------------------------------------------------------
# Inter-copy Fourier transform (bosons)


def _mixing_matrix(n: int) -> np.ndarray:
    """u[k, p]: coefficient of ad_k in the transform of ad_p (0-based)."""
    k = np.arange(1, n + 1)
    u = np.exp(2j * np.pi * np.outer(k, k) / n) / math.sqrt(n)
    if n == 2:
        u = u.real.copy()
    return u


@lru_cache(maxsize=256)
def _block_unitary(statistics: str, n: int, total: int) -> np.ndarray:
    """Mode-mixing unitary on the total-``total`` block of n modes.

    Columns are built by expanding the transformed creation-operator product
    of each block basis state.
    """
    u = _mixing_matrix(n)
    basis = enumerate_basis(statistics, n, n_total=total)
    dim = basis.dim
    mat = np.zeros((dim, dim), dtype=u.dtype)
    for col in range(dim):
        occ = basis.states[col]
        terms = {(0,) * n: 1.0 + 0j if np.iscomplexobj(u) else 1.0}
        for p in range(n):
            for _ in range(int(occ[p])):
                new = {}
                for t, amp in terms.items():
                    for k in range(n):
                        if u[k, p] == 0:
                            continue
                        if statistics == FERMION:
                            if t[k]:
                                continue
                            sign = -1.0 if sum(t[:k]) % 2 else 1.0
                            coeff = amp * u[k, p] * sign
                        else:
                            coeff = amp * u[k, p] * math.sqrt(t[k] + 1)
                        t2 = t[:k] + (t[k] + 1,) + t[k + 1:]
                        new[t2] = new.get(t2, 0.0) + coeff
                terms = new
        norm = math.sqrt(math.prod(math.factorial(int(o)) for o in occ))
        for t, amp in terms.items():
            if abs(amp) > 1e-15:
                mat[basis.index_of(t), col] = amp / norm
    return mat


def _fourier_site_factor(replica: ReplicaBasis, site: int):
    """Sparse matrix of the Fourier transform restricted to one site."""
    if replica.statistics != BOSON:
        raise ValueError("site-factorized Fourier transform is bosonic; "
                         "use fermionic_fourier_op for fermions")
    jb = replica.joint_basis
    if jb.cap is not None:
        raise ValueError("Fourier transform not defined on per-mode cutoff "
                         "sectors (mode mixing violates the cap)")
    n, L = replica.n, replica.sites
    block_cols = [c * L + site for c in range(n)]
    blocks = jb.states[:, block_cols]
    uniq, inverse = np.unique(blocks, axis=0, return_inverse=True)
    rows, cols, vals = [], [], []
    dtype = complex if n > 2 else float
    for g, occ_t in enumerate(uniq):
        members = np.flatnonzero(inverse == g)
        total = int(occ_t.sum())
        w = _block_unitary(BOSON, n, total)
        bb = enumerate_basis(BOSON, n, n_total=total)
        col_amp = w[:, bb.index_of(tuple(int(o) for o in occ_t))]
        base = jb.states[members].astype(np.int64)
        for t_idx in np.flatnonzero(np.abs(col_amp) > 1e-15):
            t_occ = bb.states[t_idx]
            tgt = base.copy()
            tgt[:, block_cols] = t_occ
            rows.append(jb.index_array(tgt))
            cols.append(members)
            vals.append(np.full(len(members), col_amp[t_idx], dtype=dtype))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.coo_matrix((vals, (rows, cols)),
                         shape=(jb.dim, jb.dim)).tocsr()


def apply_fourier(replica: ReplicaBasis, vec: np.ndarray) -> np.ndarray:
    """Apply the inter-copy Fourier transform to a joint state vector."""
    out = vec
    for f in replica.fourier_factors:
        out = f @ out
    return out


def fourier_op(replica: ReplicaBasis) -> Operator:
    """Full matrix of the inter-copy Fourier transform (small sectors only)."""
    jb = replica.joint_basis
    if jb.dim > 50_000:
        raise ValueError(
            f"joint dimension {jb.dim} too large to materialize the Fourier "
            "matrix; use apply_fourier / fourier_factors")
    m = None
    for f in replica.fourier_factors:
        m = f if m is None else f @ m
    if jb.dim <= DENSE_LIMIT:
        m = m.toarray()
    return Operator(jb, jb, m, unitary=True)


# ---------------------------------------------------------------------------
# Number-diagonal phase operator


def phase_values(replica: ReplicaBasis, occs: np.ndarray | None = None,
                 region=None) -> np.ndarray:
    """Eigenvalue exp(-i 2 pi / n * sum_p p N_p) per occupation pattern.

    ``region`` restricts the per-copy totals N_p to a subset of sites (used
    for subsystem-restricted measurements).  Two copies give the real parity
    (-1)**N_1 of the first copy.
    """
    n, L = replica.n, replica.sites
    if occs is None:
        occs = replica.joint_basis.states
    occs = occs.reshape(len(occs), n, L)
    if region is not None:
        occs = occs[:, :, np.asarray(region, dtype=np.int64)]
    totals = occs.sum(axis=2).astype(np.int64)
    weights = np.arange(1, n + 1)
    expo = (totals * weights).sum(axis=1)
    if n == 2:
        return _PHASE_SIGN_MUTATION * np.where(totals[:, 0] % 2 == 0, 1.0, -1.0)
    return _PHASE_SIGN_MUTATION * np.exp(-2j * np.pi * expo / n)


def phase_op(replica: ReplicaBasis) -> Operator:
    """Diagonal unitary with the phase eigenvalues above."""
    jb = replica.joint_basis
    d = phase_values(replica)
    m = sp.diags(d).tocsr() if jb.dim > DENSE_LIMIT else np.diag(d)
    return Operator(jb, jb, m, unitary=True, diagonal=True,
                    hermitian=(replica.n == 2))


@dataclass
class SwapIdentityReport:
    deviation: float
    tolerance: float
    dim: int

    @property
    def passed(self) -> bool:
        return self.deviation < self.tolerance


def verify_swap_identity(replica: ReplicaBasis,
                         tolerance: float = 1e-9) -> SwapIdentityReport:
    """Max-norm deviation between the permutation and its Fourier-phase form."""
    jb = replica.joint_basis
    if jb.dim > 10_000:
        raise ValueError("identity check restricted to dimensions <= 1e4")
    s = permutation_op(replica).dense()
    f = fourier_op(replica).dense()
    r = phase_values(replica)
    recon = f.conj().T @ (r[:, None] * f)
    dev = float(np.abs(s - recon).max())
    return SwapIdentityReport(dev, tolerance, jb.dim)


# ---------------------------------------------------------------------------
# Fermions: two-copy Fourier transform and the diagonal V operator


def fermionic_fourier_op(replica: ReplicaBasis) -> Operator:
    """Two-copy fermionic mode rotation, vacuum mapped to vacuum.

    Each column is expanded as a product of transformed creation operators
    applied in canonical (increasing-mode) order, with Jordan-Wigner signs
    in the copy-major flat ordering.
    """
    if replica.statistics != FERMION:
        raise ValueError("fermionic Fourier transform needs a fermionic basis")
    if replica.n != 2:
        raise ValueError("fermionic interferometry is specified for two copies")
    jb = replica.joint_basis
    L = replica.sites
    u = _mixing_matrix(2)
    nm = jb.num_modes
    mat = np.zeros((jb.dim, jb.dim)) if jb.dim <= DENSE_LIMIT else None
    entries = ([], [], []) if mat is None else None
    for col in range(jb.dim):
        occ = jb.states[col]
        modes = np.flatnonzero(occ)
        terms = {(0,) * nm: 1.0}
        # canonical order: increasing modes left to right, so the largest
        # mode's transformed creation operator hits the vacuum first
        for m in modes[::-1]:
            copy, site = divmod(int(m), L)
            partners = (site, L + site)  # (copy 1, copy 2) modes of the site
            new = {}
            for t, amp in terms.items():
                for k in range(2):
                    tm = partners[k]
                    if t[tm]:
                        continue
                    sign = -1.0 if sum(t[:tm]) % 2 else 1.0
                    coeff = amp * u[k, copy] * sign
                    t2 = t[:tm] + (1,) + t[tm + 1:]
                    new[t2] = new.get(t2, 0.0) + coeff
            terms = new
        for t, amp in terms.items():
            if abs(amp) > 1e-15:
                r = jb.index_of(t)
                if mat is not None:
                    mat[r, col] = amp
                else:
                    entries[0].append(r)
                    entries[1].append(col)
                    entries[2].append(amp)
    if mat is None:
        mat = sp.coo_matrix((entries[2], (entries[0], entries[1])),
                            shape=(jb.dim, jb.dim)).tocsr()
    return Operator(jb, jb, mat, unitary=True)


# Verbatim measurement-outcome table for the fermionic diagonal operator:
# keys are the parities (total fermion number, floor(total/2), fermions in
# the second copy); values are the +-1 outcome.
V_OUTCOME_TABLE = {
    (0, 0, 0): +1,
    (0, 0, 1): -1,
    (0, 1, 0): -1,
    (0, 1, 1): +1,
    (1, 0, 0): +1,
    (1, 0, 1): -1,
    (1, 1, 0): -1,
    (1, 1, 1): +1,
}

_V_LOOKUP = np.zeros((2, 2, 2))
for _k, _v in V_OUTCOME_TABLE.items():
    _V_LOOKUP[_k] = _v


def v_values(replica: ReplicaBasis, occs: np.ndarray | None = None,
             region=None) -> np.ndarray:
    """+-1 eigenvalue per occupation pattern, from the verbatim outcome table."""
    n, L = replica.n, replica.sites
    if n != 2 or replica.statistics != FERMION:
        raise ValueError("the diagonal V operator is the two-copy fermionic "
                         "measurement")
    if occs is None:
        occs = replica.joint_basis.states
    occs = occs.reshape(len(occs), 2, L)
    if region is not None:
        occs = occs[:, :, np.asarray(region, dtype=np.int64)]
    n2 = occs[:, 1].sum(axis=1).astype(np.int64)
    ntot = occs.sum(axis=(1, 2)).astype(np.int64)
    half = ntot // 2
    return _V_LOOKUP[ntot % 2, half % 2, n2 % 2]


def fermion_v_op(replica: ReplicaBasis) -> Operator:
    jb = replica.joint_basis
    d = v_values(replica)
    m = sp.diags(d).tocsr() if jb.dim > DENSE_LIMIT else np.diag(d)
    return Operator(jb, jb, m, hermitian=True, unitary=True, diagonal=True)


# Verbatim conjugation table: how a normal-ordered fermion monomial scales
# under conjugation by V.  With m = |#creators - #annihilators| on copy 1
# and n = the same count on copy 2, the keys are
# (m+n mod 2, m+n mod 4, n mod 2).
V_CONJUGATION_TABLE = {
    (0, 2, 0): -1,
    (0, 2, 1): +1,
    (0, 0, 0): +1,
    (0, 0, 1): -1,
    (1, 1, 0): -1,
    (1, 1, 1): +1,
    (1, 3, 0): +1,
    (1, 3, 1): -1,
}


@dataclass(frozen=True)
class FermionMonomial:
    """Normal-ordered product of fermion operators on the two-copy system.

    Site tuples must have non-repeating entries.  The operator reads, left
    to right: creators on copy 1, annihilators on copy 1, creators on
    copy 2, annihilators on copy 2.
    """

    create_copy1: tuple = ()
    annihilate_copy1: tuple = ()
    create_copy2: tuple = ()
    annihilate_copy2: tuple = ()
    coeff: complex = 1.0

    def copy_imbalances(self) -> tuple[int, int]:
        m = abs(len(self.create_copy1) - len(self.annihilate_copy1))
        n = abs(len(self.create_copy2) - len(self.annihilate_copy2))
        return m, n

    def signed_imbalances(self) -> tuple[int, int]:
        return (len(self.create_copy1) - len(self.annihilate_copy1),
                len(self.create_copy2) - len(self.annihilate_copy2))

    @property
    def aligned(self) -> bool:
        """Both copies change particle number in the same direction (or not
        at all).  Conjugation by the diagonal measurement operator is
        multiplicative by a state-independent sign exactly on aligned
        monomials with even total change; the verbatim sign table is the
        ground truth on that domain."""
        d1, d2 = self.signed_imbalances()
        return d1 * d2 >= 0

    def table_sign(self) -> int:
        m, n = self.copy_imbalances()
        return V_CONJUGATION_TABLE[((m + n) % 2, (m + n) % 4, n % 2)]

    def matrix(self, basis: FockBasis, sites: int) -> np.ndarray:
        """Dense matrix on a (cutoff) fermionic joint basis."""
        ops = []
        for s in self.create_copy1:
            ops.append(("raise", s))
        for s in self.annihilate_copy1:
            ops.append(("lower", s))
        for s in self.create_copy2:
            ops.append(("raise", sites + s))
        for s in self.annihilate_copy2:
            ops.append(("lower", sites + s))
        m = np.eye(basis.dim)
        for kind, mode in reversed(ops):
            m = ladder(basis, mode, kind).dense() @ m
        return self.coeff * m


@dataclass
class CommutantReport:
    invariant_by_table: bool
    invariant_by_conjugation: bool
    monomial_signs: list
    max_deviation: float

    @property
    def commutes(self) -> bool:
        return self.invariant_by_conjugation


class TableConsistencyError(AssertionError):
    """Verbatim-table lookup and direct conjugation disagree."""


def v_commutant_check(monomials, replica: ReplicaBasis,
                      tol: float = 1e-10) -> CommutantReport:
    """Decide whether an operator (a sum of fermion monomials) commutes
    with the diagonal V operator, both by verbatim-table lookup and by
    direct conjugation on the unrestricted joint basis.

    On the table's domain of validity (aligned monomials with even total
    particle-number change) the two verdicts must agree; a disagreement
    there raises, flagging a broken table transcription or a test bug.
    Off that domain the direct conjugation is the ground truth.
    """
    if replica.statistics != FERMION or replica.n != 2:
        raise ValueError("commutant check applies to the two-copy fermionic "
                         "measurement")
    monomials = list(monomials)
    L = replica.sites
    full = enumerate_basis(FERMION, 2 * L, n_max=1)
    helper = ReplicaBasis(enumerate_basis(FERMION, L, n_max=1), 2)
    v = v_values(helper)
    signs = [m.table_sign() for m in monomials]
    x = sum(m.matrix(full, L) for m in monomials)
    conj = v[:, None] * x * v[None, :]
    dev = float(np.abs(conj - x).max())
    by_table = all(s == +1 for s in signs)
    by_conj = dev < tol * max(1.0, float(np.abs(x).max()))
    table_valid = all(m.aligned and sum(m.signed_imbalances()) % 2 == 0
                      for m in monomials)
    if table_valid and by_table != by_conj:
        raise TableConsistencyError(
            f"conjugation table disagrees with direct conjugation "
            f"(table says {by_table}, conjugation deviation {dev:.3e})")
    return CommutantReport(by_table, by_conj, signs, dev)

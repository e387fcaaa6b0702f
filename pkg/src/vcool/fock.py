"""Occupation-number bases and ladder operators for lattice bosons and fermions.

A basis is restricted to a fixed total particle number, a union of totals,
or left unrestricted with a per-mode occupancy cutoff.  States are ordered
by ascending total occupation and descending lexicographically within each
total, so two enumerations with the same arguments are identical.

Mode indices are flat integers.  Multi-copy systems flatten copy-major:
mode(copy c, site j) = c * L + j.  Fermionic signs follow the Jordan-Wigner
convention in this flat order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

BOSON = "boson"
FERMION = "fermion"

# Operators on spaces larger than this are stored as scipy CSR matrices;
# smaller ones are dense ndarrays.
DENSE_LIMIT = 2000

_OCC_DTYPE = np.int16


class FockBasis:
    """Enumerated occupation-number basis for one statistics on flat modes.

    Immutable after construction.  ``states`` is a read-only integer array
    of shape (dim, num_modes); ``index_of`` / ``index_array`` invert it.
    """

    def __init__(self, statistics: str, num_modes: int,
                 totals: tuple[int, ...], cap: int | None,
                 sector_kind: str):
        if statistics not in (BOSON, FERMION):
            raise ValueError(f"unknown statistics {statistics!r}")
        if num_modes < 1:
            raise ValueError("num_modes must be >= 1")
        self.statistics = statistics
        self.num_modes = int(num_modes)
        self.totals = tuple(sorted(int(t) for t in totals))
        self.sector_kind = sector_kind
        if statistics == FERMION:
            if cap is not None and cap != 1:
                raise ValueError("fermionic modes hold at most one particle")
            cap = 1
        self.cap = cap
        if not self.totals:
            raise ValueError("empty sector: no allowed particle totals")
        if any(t < 0 for t in self.totals):
            raise ValueError("particle totals must be non-negative")
        tmax = self.totals[-1]
        capv = self._cap_value = tmax if cap is None else int(cap)
        if capv * num_modes < tmax:
            raise ValueError(
                f"infeasible sector: {tmax} particles do not fit on "
                f"{num_modes} modes with per-mode occupancy <= {capv}")

        self._counts, self._prefix = _count_tables(num_modes, tmax, capv)
        block_dims = [int(self._counts[num_modes, t]) for t in self.totals]
        offsets = np.concatenate([[0], np.cumsum(block_dims)])
        self._block_offset = {t: int(offsets[i]) for i, t in enumerate(self.totals)}
        self._block_offsets_arr = offsets[:-1].astype(np.int64)
        self.dim = int(offsets[-1])

        states = np.empty((self.dim, num_modes), dtype=_OCC_DTYPE)
        row = 0
        for t in self.totals:
            for occ in _iter_block(num_modes, t, capv):
                states[row] = occ
                row += 1
        assert row == self.dim
        states.setflags(write=False)
        self.states = states
        self._totals_arr = np.asarray(self.totals, dtype=np.int64)

    # -- identity -----------------------------------------------------------

    @property
    def _key(self):
        return (self.statistics, self.num_modes, self.totals, self.cap)

    def __eq__(self, other):
        return isinstance(other, FockBasis) and self._key == other._key

    def __hash__(self):
        return hash(self._key)

    def __repr__(self):
        sector = {"fixed": f"N={self.totals[0]}",
                  "union": f"N in {list(self.totals)}",
                  "cutoff": f"n_max={self.cap}"}[self.sector_kind]
        return (f"FockBasis({self.statistics}, modes={self.num_modes}, "
                f"{sector}, dim={self.dim})")

    # -- lookups ------------------------------------------------------------

    def contains(self, occ: Sequence[int]) -> bool:
        occ = np.asarray(occ)
        if occ.shape != (self.num_modes,):
            return False
        if occ.min() < 0 or occ.max() > self._cap_value:
            return False
        return int(occ.sum()) in self._block_offset

    def index_of(self, occ: Sequence[int]) -> int:
        """Ordinal of one occupation vector; raises if outside the sector."""
        if not self.contains(occ):
            raise KeyError(f"occupation {tuple(occ)} not in {self!r}")
        return int(self.index_array(np.asarray(occ, dtype=np.int64)[None, :])[0])

    def index_array(self, occs: np.ndarray) -> np.ndarray:
        """Vectorized rank of occupation rows that are known to be in-sector."""
        occs = np.asarray(occs, dtype=np.int64)
        total = occs.sum(axis=1)
        if len(self._totals_arr) > 1:
            pos = np.searchsorted(self._totals_arr, total)
            offs = self._block_offsets_arr[pos]
        else:
            offs = np.zeros(len(occs), dtype=np.int64)
        rank = np.zeros(len(occs), dtype=np.int64)
        rem = total.copy()
        L, capv = self.num_modes, self._cap_value
        for i in range(L - 1):
            m = L - 1 - i
            pref = self._prefix[m]
            hi = rem - occs[:, i] - 1
            rank += np.where(hi >= 0, pref[np.clip(hi, 0, None)], 0)
            lo = rem - capv - 1
            rank -= np.where(lo >= 0, pref[np.clip(lo, 0, None)], 0)
            rem -= occs[:, i]
        return offs + rank

    def block_slice(self, total: int) -> slice:
        """Index range of the fixed-``total`` block inside this basis."""
        if total not in self._block_offset:
            raise KeyError(f"total {total} not in sector")
        start = self._block_offset[total]
        return slice(start, start + int(self._counts[self.num_modes, total]))

    def total_occupations(self) -> np.ndarray:
        return self.states.sum(axis=1)


def _count_tables(num_modes: int, tmax: int, cap: int):
    """counts[m, t] = number of occupation tails on m modes with total t."""
    counts = np.zeros((num_modes + 1, tmax + 1), dtype=np.int64)
    counts[0, 0] = 1
    for m in range(1, num_modes + 1):
        pref = np.cumsum(counts[m - 1])
        for t in range(tmax + 1):
            lo = t - cap - 1
            counts[m, t] = pref[t] - (pref[lo] if lo >= 0 else 0)
    prefix = np.cumsum(counts, axis=1)
    return counts, prefix


def _iter_block(num_modes: int, total: int, cap: int):
    """Yield occupation tuples of one total, descending lexicographically."""
    if num_modes == 1:
        if total <= cap:
            yield (total,)
        return
    for k in range(min(total, cap), -1, -1):
        for tail in _iter_block(num_modes - 1, total - k, cap):
            yield (k,) + tail


def _normalize_sector(statistics, num_modes, n_total, n_max):
    if n_total is None:
        if n_max is None:
            raise ValueError("specify a particle-number sector (n_total) or "
                             "an occupancy cutoff (n_max)")
        cap = 1 if statistics == FERMION else int(n_max)
        totals = tuple(range(num_modes * cap + 1))
        return totals, (None if statistics == FERMION else int(n_max)), "cutoff"
    if isinstance(n_total, (int, np.integer)):
        totals = (int(n_total),)
        kind = "fixed"
    else:
        totals = tuple(sorted({int(t) for t in n_total}))
        kind = "fixed" if len(totals) == 1 else "union"
    if n_max is not None and statistics == BOSON:
        raise ValueError("per-mode cutoff applies to unrestricted sectors only")
    return totals, None, kind


@lru_cache(maxsize=128)
def _build_basis(statistics, num_modes, totals, cap, kind):
    return FockBasis(statistics, num_modes, totals, cap, kind)


def enumerate_basis(statistics: str, num_modes: int,
                    n_total: int | Iterable[int] | None = None,
                    n_max: int | None = None) -> FockBasis:
    """Enumerate the occupation-number basis of one sector.

    ``n_total`` may be a fixed total, an iterable of allowed totals, or
    None for an unrestricted space with per-mode cutoff ``n_max``.
    Enumeration order is deterministic: ascending total, then descending
    lexicographic on occupation vectors.
    """
    if statistics == FERMION and n_total is not None:
        tt = [n_total] if isinstance(n_total, (int, np.integer)) else list(n_total)
        for t in tt:
            if t > num_modes:
                raise ValueError(
                    f"infeasible sector: {t} fermions on {num_modes} modes")
    totals, cap, kind = _normalize_sector(statistics, num_modes, n_total, n_max)
    return _build_basis(statistics, num_modes, totals, cap, kind)


# ---------------------------------------------------------------------------
# Operators


@dataclass(eq=False)
class Operator:
    """A matrix expressed between two enumerated bases (usually the same one).

    ``matrix`` is a dense ndarray or scipy sparse matrix.  Flags record
    properties the constructor guarantees; ``check_flags`` verifies them
    numerically to 1e-10.
    """

    row_basis: FockBasis
    col_basis: FockBasis
    matrix: object
    hermitian: bool = False
    unitary: bool = False
    diagonal: bool = False

    @property
    def basis(self) -> FockBasis:
        if self.row_basis != self.col_basis:
            raise ValueError("operator maps between different sectors")
        return self.row_basis

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.matrix)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray() if self.is_sparse else np.asarray(self.matrix)

    def diag(self) -> np.ndarray:
        return self.matrix.diagonal() if self.is_sparse else np.diagonal(self.matrix)

    def dag(self) -> "Operator":
        m = self.matrix.conj().T
        if self.is_sparse:
            m = m.tocsr()
        return Operator(self.col_basis, self.row_basis, m,
                        hermitian=self.hermitian, unitary=self.unitary,
                        diagonal=self.diagonal)

    def check_flags(self, tol: float = 1e-10) -> dict:
        """Numeric verification of the declared flags; returns the deviations."""
        a = self.dense()
        out = {}
        if self.hermitian:
            out["hermitian"] = float(np.abs(a - a.conj().T).max())
        if self.unitary:
            eye = np.eye(a.shape[0])
            out["unitary"] = float(np.abs(a.conj().T @ a - eye).max())
        if self.diagonal:
            out["diagonal"] = float(np.abs(a - np.diag(np.diagonal(a))).max())
        bad = {k: v for k, v in out.items() if v > tol}
        if bad:
            raise AssertionError(f"operator flags violated: {bad}")
        return out


def _assemble(row_basis, col_basis, rows, cols, vals, **flags) -> Operator:
    shape = (row_basis.dim, col_basis.dim)
    if max(shape) > DENSE_LIMIT:
        m = sp.coo_matrix((vals, (rows, cols)), shape=shape).tocsr()
    else:
        m = np.zeros(shape, dtype=np.asarray(vals).dtype if len(vals) else float)
        np.add.at(m, (np.asarray(rows, dtype=np.int64),
                      np.asarray(cols, dtype=np.int64)), vals)
    return Operator(row_basis, col_basis, m, **flags)


def _ladder_target_basis(basis: FockBasis, delta: int) -> FockBasis:
    if basis.sector_kind == "fixed":
        n_new = basis.totals[0] + delta
        if n_new < 0:
            raise ValueError("cannot lower the vacuum sector")
        return enumerate_basis(basis.statistics, basis.num_modes, n_total=n_new)
    return basis


def ladder(basis: FockBasis, mode: int, kind: str) -> Operator:
    """Creation (kind="raise") or annihilation (kind="lower") operator.

    On a fixed-N basis the result is a rectangular map into the adjacent
    sector.  On union or cutoff bases it is square on the same basis, with
    transitions leaving the sector dropped.  Fermionic elements carry the
    Jordan-Wigner sign (-1)**(number of particles on lower modes).
    """
    if not 0 <= mode < basis.num_modes:
        raise ValueError(f"mode {mode} out of range for {basis.num_modes} modes")
    if kind not in ("raise", "lower"):
        raise ValueError("kind must be 'raise' or 'lower'")
    delta = +1 if kind == "raise" else -1
    target = _ladder_target_basis(basis, delta)

    occ = basis.states
    if kind == "lower":
        src = np.flatnonzero(occ[:, mode] > 0)
        amp = np.sqrt(occ[src, mode].astype(float))
    else:
        # the occupancy bound comes from the sector being raised into
        src = np.flatnonzero(occ[:, mode] < target._cap_value)
        amp = np.sqrt(occ[src, mode].astype(float) + 1.0)
    if basis.statistics == FERMION:
        below = occ[src, :mode].sum(axis=1)
        amp = np.where(below % 2 == 0, 1.0, -1.0)

    new_occ = occ[src].astype(np.int64)
    new_occ[:, mode] += delta
    if target is basis and basis.sector_kind in ("union", "cutoff"):
        keep = np.isin(new_occ.sum(axis=1), basis._totals_arr)
        src, amp, new_occ = src[keep], amp[keep], new_occ[keep]
    rows = target.index_array(new_occ) if len(new_occ) else np.empty(0, np.int64)
    return _assemble(target, basis, rows, src, amp)


def number_op(basis: FockBasis, mode: int) -> Operator:
    """Diagonal occupation operator for one mode."""
    if not 0 <= mode < basis.num_modes:
        raise ValueError(f"mode {mode} out of range for {basis.num_modes} modes")
    diag = basis.states[:, mode].astype(float)
    if basis.dim > DENSE_LIMIT:
        m = sp.diags(diag).tocsr()
    else:
        m = np.diag(diag)
    return Operator(basis, basis, m, hermitian=True, diagonal=True)


def total_number_op(basis: FockBasis) -> Operator:
    """Diagonal total particle number operator."""
    diag = basis.total_occupations().astype(float)
    if basis.dim > DENSE_LIMIT:
        m = sp.diags(diag).tocsr()
    else:
        m = np.diag(diag)
    return Operator(basis, basis, m, hermitian=True, diagonal=True)


def hop_op(basis: FockBasis, to_mode: int, from_mode: int) -> Operator:
    """Particle transfer a†(to) a(from) within one basis (sector preserving)."""
    low = ladder(basis, from_mode, "lower")
    rai = ladder(low.row_basis, to_mode, "raise")
    m = rai.matrix @ low.matrix
    if sp.issparse(m):
        m = m.tocsr()
    return Operator(rai.row_basis, basis, m)

"""Thermal and grand-canonical density matrices, purities, Renyi entropies,
partial traces, and effective (beta, mu) fitting.

All thermal states are computed by dense eigendecomposition with a spectral
shift, so they are exact up to rounding; this module is the oracle the
sampled protocols are checked against.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fock import BOSON, FERMION, FockBasis, Operator, enumerate_basis

_DENSIFY_LIMIT = 6500


@dataclass(frozen=True)
class ThermalProvenance:
    """Where a density matrix came from, when it is (grand-)canonical."""

    beta: float
    mu: float | None = None
    hamiltonian: Operator | None = None


@dataclass
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix on a Fock basis."""

    basis: FockBasis
    matrix: np.ndarray
    provenance: ThermalProvenance | None = None

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix)
        if self.matrix.shape != (self.basis.dim, self.basis.dim):
            raise ValueError("matrix shape does not match basis dimension")

    def validate(self, tol: float = 1e-10, psd: bool = True) -> None:
        m = self.matrix
        if abs(np.trace(m).real - 1.0) > tol or abs(np.trace(m).imag) > tol:
            raise ValueError(f"trace {np.trace(m)} != 1")
        if np.abs(m - m.conj().T).max() > tol:
            raise ValueError("matrix is not Hermitian")
        if psd:
            w = np.linalg.eigvalsh(m)
            if w.min() < -tol:
                raise ValueError(f"negative eigenvalue {w.min():.3e}")

    @property
    def dim(self) -> int:
        return self.basis.dim

    def expectation(self, op) -> float:
        a = op.matrix if isinstance(op, Operator) else op
        if sp.issparse(a):
            val = (a @ self.matrix).diagonal().sum()
        else:
            val = np.einsum("ij,ji->", a, self.matrix)
        return complex(val).real

    def eigensystem(self):
        return np.linalg.eigh(self.matrix)


def _dense_hermitian(h: Operator) -> np.ndarray:
    m = h.matrix
    if sp.issparse(m):
        if h.row_basis.dim > _DENSIFY_LIMIT:
            raise ValueError(
                f"dimension {h.row_basis.dim} too large for dense "
                "eigendecomposition")
        m = m.toarray()
    m = np.asarray(m)
    if np.abs(m - m.conj().T).max() > 1e-10:
        raise ValueError("Hamiltonian is not Hermitian")
    return m


def thermal_state(h: Operator, beta: float) -> DensityMatrix:
    """exp(-beta H)/Z via eigendecomposition with max-weight shift."""
    if beta < 0 or not np.isfinite(beta):
        raise ValueError("beta must be finite and >= 0")
    m = _dense_hermitian(h)
    energies, vecs = np.linalg.eigh(m)
    w = np.exp(-beta * (energies - energies.min()))
    w /= w.sum()
    rho = (vecs * w) @ vecs.conj().T
    return DensityMatrix(h.basis, rho,
                         ThermalProvenance(beta=beta, hamiltonian=h))


def grand_canonical_state(h: Operator, n_op: Operator, beta: float,
                          mu: float) -> DensityMatrix:
    """exp(-beta (H - mu N))/Z on a multi-sector basis."""
    if beta < 0 or not np.isfinite(beta):
        raise ValueError("beta must be finite and >= 0")
    hm = _dense_hermitian(h)
    nm = n_op.dense()
    comm = hm @ nm - nm @ hm
    if np.abs(comm).max() > 1e-10:
        raise ValueError("H and the number operator do not commute")
    k = hm - mu * nm
    energies, vecs = np.linalg.eigh(k)
    w = np.exp(-beta * (energies - energies.min()))
    w /= w.sum()
    rho = (vecs * w) @ vecs.conj().T
    return DensityMatrix(h.basis, rho,
                         ThermalProvenance(beta=beta, mu=mu, hamiltonian=h))


def grand_canonical_diagonal(h: Operator, n_op: Operator, beta: float,
                             mu: float) -> np.ndarray:
    """Number-basis diagonal of exp(-beta (H - mu N))/Z, sector by sector.

    Handles union bases whose total dimension exceeds the dense limit, as
    long as each number-sector block is diagonalizable.
    """
    m = h.matrix
    ndiag = np.real(n_op.diag())
    out = np.zeros(h.row_basis.dim)
    shifts = []
    blocks = []
    for nval in np.unique(np.round(ndiag, 9)):
        idx = np.flatnonzero(np.abs(ndiag - nval) < 1e-9)
        if len(idx) > _DENSIFY_LIMIT:
            raise ValueError(f"number sector N={nval} too large "
                             f"({len(idx)}) for dense eigendecomposition")
        block = (m[idx][:, idx].toarray() if sp.issparse(m)
                 else np.asarray(m)[np.ix_(idx, idx)])
        energies, vecs = np.linalg.eigh(block)
        a = beta * (energies - mu * nval)
        shifts.append(a.min())
        blocks.append((idx, a, np.abs(vecs) ** 2))
    a0 = min(shifts)
    z = 0.0
    for idx, a, vv in blocks:
        w = np.exp(-(a - a0))
        z += w.sum()
        out[idx] = vv @ w
    return out / z


def matrix_power_state(rho: DensityMatrix, n: int) -> DensityMatrix:
    """rho**n / tr(rho**n); thermal provenance beta maps to n*beta."""
    if int(n) != n or n < 1:
        raise ValueError("power must be a positive integer")
    n = int(n)
    if n == 1:
        return rho
    w, v = np.linalg.eigh(rho.matrix)
    w = np.clip(w, 0.0, None) ** n
    z = w.sum()
    if z < 1e-300:
        raise ValueError("purity numerically vanishes; cannot normalize")
    out = (v * (w / z)) @ v.conj().T
    prov = rho.provenance
    if prov is not None:
        prov = ThermalProvenance(beta=n * prov.beta, mu=prov.mu,
                                 hamiltonian=prov.hamiltonian)
    return DensityMatrix(rho.basis, out, prov)


def purity(rho: DensityMatrix, n: int = 2) -> float:
    """tr(rho**n) in (0, 1]."""
    if int(n) != n or n < 2:
        raise ValueError("purity order must be an integer >= 2")
    if n == 2:
        return float(np.real(np.vdot(rho.matrix, rho.matrix)))
    w = np.clip(np.linalg.eigvalsh(rho.matrix), 0.0, None)
    return float((w ** n).sum())


def renyi_entropy(rho: DensityMatrix, n: int = 2) -> float:
    """S_n = log tr(rho**n) / (1 - n)."""
    return math.log(purity(rho, n)) / (1 - n)


def trace_distance(a: DensityMatrix | np.ndarray,
                   b: DensityMatrix | np.ndarray) -> float:
    ma = a.matrix if isinstance(a, DensityMatrix) else a
    mb = b.matrix if isinstance(b, DensityMatrix) else b
    w = np.linalg.eigvalsh(ma - mb)
    return 0.5 * float(np.abs(w).sum())


# ---------------------------------------------------------------------------
# Partial trace


def _keep_rest_split(basis: FockBasis, keep):
    keep = np.asarray(sorted(keep), dtype=np.int64)
    if keep.min() < 0 or keep.max() >= basis.num_modes:
        raise ValueError("kept modes out of range")
    rest = np.asarray([m for m in range(basis.num_modes) if m not in set(keep.tolist())],
                      dtype=np.int64)
    return keep, rest


def _fermion_reorder_signs(occ: np.ndarray, keep: np.ndarray,
                           rest: np.ndarray) -> np.ndarray:
    """Parity of permuting occupied modes into (keep, rest) block order."""
    signs = np.ones(len(occ))
    for k in keep:
        earlier = rest[rest < k]
        if len(earlier):
            crossings = occ[:, k].astype(np.int64) * \
                occ[:, earlier].sum(axis=1).astype(np.int64)
            signs *= np.where(crossings % 2 == 0, 1.0, -1.0)
    return signs


def reduced_basis(basis: FockBasis, num_keep: int) -> FockBasis:
    """Union-sector basis the reduced state lives on."""
    max_total = basis.totals[-1]
    cap = basis.cap
    max_keep = min(max_total, num_keep * (cap if cap is not None else max_total))
    return enumerate_basis(basis.statistics, num_keep,
                           n_total=range(0, max_keep + 1))


def partial_trace_vector(psi: np.ndarray, basis: FockBasis,
                         keep) -> DensityMatrix:
    """Reduced density matrix of a pure state over the kept modes."""
    keep, rest = _keep_rest_split(basis, keep)
    rb = reduced_basis(basis, len(keep))
    occ = basis.states
    kidx = rb.index_array(occ[:, keep])
    rest_occ = occ[:, rest]
    _, rest_codes = np.unique(rest_occ, axis=0, return_inverse=True)
    rest_codes = np.asarray(rest_codes).ravel()
    amp = np.asarray(psi)
    if basis.statistics == FERMION:
        amp = amp * _fermion_reorder_signs(occ, keep, rest)
    m = np.zeros((rb.dim, rest_codes.max() + 1), dtype=amp.dtype)
    m[kidx, rest_codes] = amp
    rho = m @ m.conj().T
    tr = np.trace(rho).real
    return DensityMatrix(rb, rho / tr)


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Reduced density matrix over the kept modes."""
    basis = rho.basis
    keep, rest = _keep_rest_split(basis, keep)
    rb = reduced_basis(basis, len(keep))
    occ = basis.states
    kidx = rb.index_array(occ[:, keep])
    _, rest_codes = np.unique(occ[:, rest], axis=0, return_inverse=True)
    rest_codes = np.asarray(rest_codes).ravel()
    signs = (_fermion_reorder_signs(occ, keep, rest)
             if basis.statistics == FERMION else np.ones(basis.dim))
    out = np.zeros((rb.dim, rb.dim), dtype=rho.matrix.dtype)
    order = np.argsort(rest_codes, kind="stable")
    bounds = np.flatnonzero(np.concatenate(
        [[True], np.diff(rest_codes[order]) > 0, [True]]))
    for g in range(len(bounds) - 1):
        members = order[bounds[g]:bounds[g + 1]]
        sub = (signs[members, None] * rho.matrix[np.ix_(members, members)]
               * signs[None, members])
        np.add.at(out, np.ix_(kidx[members], kidx[members]), sub)
    tr = np.trace(out).real
    return DensityMatrix(rb, out / tr)


# ---------------------------------------------------------------------------
# Effective-(beta, mu) fit


class FitError(RuntimeError):
    def __init__(self, message, beta=None, mu=None, e_residual=None,
                 n_residual=None):
        super().__init__(message)
        self.beta, self.mu = beta, mu
        self.e_residual, self.n_residual = e_residual, n_residual


class FitInfeasibleError(FitError):
    pass


class FitConvergenceError(FitError):
    pass


@dataclass
class FitResult:
    beta: float
    mu: float
    e_value: float
    n_value: float
    e_residual: float
    n_residual: float
    iterations: int

    def __iter__(self):
        yield self.beta
        yield self.mu


def joint_spectrum(h: Operator, n_op: Operator):
    """(E_i, N_i) pairs from the number-sector block diagonalization of H.

    Works block by block, so unions whose total dimension exceeds the dense
    limit are fine as long as each sector block is diagonalizable.
    """
    m = h.matrix
    if not sp.issparse(m):
        m = np.asarray(m)
    ndiag = np.real(n_op.diag())
    if not n_op.diagonal:
        if np.abs(n_op.dense() - np.diag(ndiag)).max() > 1e-10:
            raise ValueError("number operator must be diagonal in the "
                             "Fock basis")
    energies, numbers = [], []
    for nval in np.unique(np.round(ndiag, 9)):
        sector = np.abs(ndiag - nval) < 1e-9
        idx = np.flatnonzero(sector)
        if len(idx) > _DENSIFY_LIMIT:
            raise ValueError(f"number sector N={nval} has dimension "
                             f"{len(idx)}, too large to diagonalize densely")
        if sp.issparse(m):
            rows = m[idx]
            block = rows[:, idx].toarray()
            off = rows[:, np.flatnonzero(~sector)]
            off_mass = np.abs(off).max() if off.nnz else 0.0
        else:
            block = m[np.ix_(idx, idx)]
            off = m[np.ix_(idx, np.flatnonzero(~sector))]
            off_mass = np.abs(off).max() if off.size else 0.0
        if off_mass > 1e-10:
            raise ValueError("H mixes number sectors; cannot fit an ensemble")
        block = np.asarray(block)
        if np.abs(block - block.conj().T).max() > 1e-10:
            raise ValueError("Hamiltonian is not Hermitian")
        energies.append(np.linalg.eigvalsh(block))
        numbers.append(np.full(len(idx), nval))
    return np.concatenate(energies), np.concatenate(numbers)


def _ensemble_moments(energies, numbers, beta, c):
    a = beta * energies - c * numbers
    w = np.exp(-(a - a.min()))
    w /= w.sum()
    e = float(w @ energies)
    n = float(w @ numbers)
    de = energies - e
    dn = numbers - n
    return e, n, float(w @ (de * de)), float(w @ (dn * dn)), float(w @ (de * dn))


def fit_effective_ensemble(h: Operator, n_op: Operator, e_target: float,
                           n_target: float, *, beta0: float = 1.0,
                           mu0: float = 0.0, beta_max: float = 1e3,
                           tol: float = 1e-8,
                           max_iter: int = 200) -> FitResult:
    """Solve <H> = e_target, <N> = n_target for the grand-canonical (beta, mu).

    The moment-matching conditions are the stationarity of a convex dual,
    which a bounded quasi-Newton pass solves globally; a damped 2D Newton
    iteration with the analytic covariance Jacobian then polishes the
    residuals below 1e-8 in both equations.
    """
    energies, numbers = joint_spectrum(h, n_op)
    nmin, nmax = numbers.min(), numbers.max()
    if not (nmin <= n_target <= nmax):
        raise FitInfeasibleError(
            f"target density {n_target} outside the reachable range "
            f"[{nmin}, {nmax}]")
    # lower envelope of reachable energy at the target density
    floor = np.interp(n_target,
                      *zip(*sorted((nv, energies[numbers == nv].min())
                                   for nv in np.unique(numbers))))
    if e_target < floor - 1e-12:
        raise FitInfeasibleError(
            f"target energy {e_target} below the minimum {floor:.6g} "
            f"reachable at density {n_target}")

    beta_min = 1e-12

    def dual(theta):
        b, cc = theta
        a = -b * energies + cc * numbers
        a0 = a.max()
        logz = a0 + math.log(np.exp(a - a0).sum())
        g = logz + b * e_target - cc * n_target
        w = np.exp(a - a0)
        w /= w.sum()
        grad = np.array([e_target - float(w @ energies),
                         float(w @ numbers) - n_target])
        return g, grad

    from scipy.optimize import minimize
    pre = minimize(dual, x0=np.array([float(beta0), float(beta0 * mu0)]),
                   jac=True, method="L-BFGS-B",
                   bounds=[(beta_min, beta_max), (None, None)])
    beta, c = float(np.clip(pre.x[0], beta_min, beta_max)), float(pre.x[1])
    e, n, vee, vnn, ven = _ensemble_moments(energies, numbers, beta, c)
    res = np.array([e - e_target, n - n_target])
    it = 0
    for it in range(1, max_iter + 1):
        if np.abs(res).max() < tol:
            break
        jac = np.array([[-vee, ven], [-ven, vnn]])
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            raise FitConvergenceError(
                "singular Jacobian (state numerically pure)",
                beta=beta, mu=c / max(beta, beta_min),
                e_residual=res[0], n_residual=res[1])
        scale = 1.0
        for _ in range(50):
            nb = float(np.clip(beta + scale * step[0], beta_min, beta_max))
            nc = c + scale * step[1]
            e2, n2, v1, v2, v3 = _ensemble_moments(energies, numbers, nb, nc)
            r2 = np.array([e2 - e_target, n2 - n_target])
            if np.linalg.norm(r2) <= np.linalg.norm(res) or scale < 1e-8:
                break
            scale *= 0.5
        beta, c, res = nb, nc, r2
        vee, vnn, ven = v1, v2, v3
    else:
        raise FitConvergenceError(
            f"no convergence after {max_iter} iterations "
            f"(residuals {res[0]:.3e}, {res[1]:.3e})",
            beta=beta, mu=c / max(beta, beta_min),
            e_residual=res[0], n_residual=res[1])
    mu = c / max(beta, beta_min)
    e_fin, n_fin, *_ = _ensemble_moments(energies, numbers, beta, c)
    return FitResult(beta=beta, mu=mu, e_value=e_fin, n_value=n_fin,
                     e_residual=e_fin - e_target, n_residual=n_fin - n_target,
                     iterations=it)


def random_density_matrix(basis: FockBasis, rng,
                          rank: int | None = None) -> DensityMatrix:
    """Wishart-distributed random state, for tests and identity sweeps."""
    d = basis.dim
    r = d if rank is None else rank
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    m = g @ g.conj().T
    return DensityMatrix(basis, m / np.trace(m).real)

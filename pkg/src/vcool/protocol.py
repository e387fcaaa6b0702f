"""Virtual cooling estimators: exact oracles, shot-sampled interferometric
measurement, the ancilla purification channel, ground-state distillation,
buffered subregion estimation, and the shot-cost scaling study.

Sampling draws occupation patterns from the exact diagonal of the
Fourier-transformed multi-copy state (projective number-basis measurement);
per shot the estimator records the phase eigenvalue and the number-diagonal
part of the transformed symmetrized observable, and combines them into a
ratio with delta-method error propagation.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .fock import (BOSON, FERMION, DENSE_LIMIT, FockBasis, Operator,
                   enumerate_basis)
from .replica import (ReplicaBasis, FermionMonomial, _block_unitary,
                      apply_fourier, phase_values, v_values,
                      v_commutant_check)
from .thermal import DensityMatrix, matrix_power_state, partial_trace, purity


# ---------------------------------------------------------------------------
# Number-diagonal observables


@dataclass(frozen=True)
class NumberObservable:
    """Polynomial in site occupation numbers, sum of c * prod_j n_j**k_j.

    ``terms`` is a tuple of (coefficient, ((site, power), ...)) with distinct
    sites inside each monomial.  This is the class of observables the
    sampled protocols accept: their transformed symmetrized conjugates have
    number-diagonal parts computable outcome by outcome.
    """

    name: str
    terms: tuple

    @classmethod
    def density(cls, site: int) -> "NumberObservable":
        return cls(f"n_{site}", ((1.0, ((site, 1),)),))

    @classmethod
    def density_product(cls, site_a: int, site_b: int) -> "NumberObservable":
        if site_a == site_b:
            return cls(f"n_{site_a}^2", ((1.0, ((site_a, 2),)),))
        return cls(f"n_{site_a}n_{site_b}",
                   ((1.0, ((site_a, 1), (site_b, 1))),))

    @classmethod
    def identity(cls) -> "NumberObservable":
        return cls("identity", ((1.0, ()),))

    @property
    def sites(self) -> tuple:
        return tuple(sorted({s for _, m in self.terms for s, _ in m}))

    @property
    def max_power(self) -> int:
        return max((k for _, m in self.terms for _, k in m), default=0)

    def values_single(self, occs: np.ndarray) -> np.ndarray:
        """Eigenvalues on single-copy occupation rows."""
        occs = np.asarray(occs, dtype=np.int64)
        out = np.zeros(len(occs))
        for coeff, mono in self.terms:
            term = np.full(len(occs), float(coeff))
            for site, power in mono:
                term = term * occs[:, site].astype(float) ** power
            out += term
        return out

    def matrix(self, basis: FockBasis) -> Operator:
        """Diagonal single-copy matrix of the observable."""
        vals = self.values_single(basis.states)
        m = np.diag(vals)
        return Operator(basis, basis, m, hermitian=True, diagonal=True)


def _site_diag_tables(replica: ReplicaBasis, powers, max_block_total: int):
    """tables[(copy, k)][a, b] = diagonal value of the transformed
    single-copy occupation power n_copy**k on a two-mode site block."""
    if replica.n != 2:
        raise ValueError("site tables implemented for two copies")
    stats = replica.statistics
    tables = {}
    mmax = max_block_total
    for k in powers:
        for copy in (0, 1):
            t = np.zeros((mmax + 1, mmax + 1))
            for m in range(mmax + 1):
                if stats == FERMION and m > 2:
                    break
                w = _block_unitary(stats, 2, m)
                bb = enumerate_basis(stats, 2, n_total=m)
                occ_first = bb.states[:, copy].astype(float)
                # <s| F n^k F^dag |s> = sum_t |F[s, t]|^2 * value(t)
                vals = (np.abs(w) ** 2) @ (occ_first ** k)
                for row, s in enumerate(bb.states):
                    t[s[0], s[1]] = vals[row]
            tables[(copy, k)] = t
    return tables


def _transformed_diag_values(replica: ReplicaBasis, x: NumberObservable,
                             occs: np.ndarray) -> np.ndarray:
    """Per-outcome value of the number-diagonal part of F X_s F^dag."""
    n, L = replica.n, replica.sites
    occs = np.asarray(occs, dtype=np.int64)
    if n > 2:
        if x.max_power > 1:
            raise ValueError(
                "sampled estimation beyond two copies supports only "
                "degree-1 occupation observables; use the exact estimator "
                "for higher powers")
        # copy-symmetric densities are invariant under the mode mixing
        out = np.zeros(len(occs))
        for coeff, mono in x.terms:
            term = np.full(len(occs), float(coeff))
            for site, power in mono:
                tot = sum(occs[:, c * L + site] for c in range(n)).astype(float)
                term = term * (tot / n)
            out += term
        return out
    powers = sorted({k for _, mono in x.terms for _, k in mono})
    if not powers:
        return np.full(len(occs), float(sum(c for c, _ in x.terms)))
    mmax = 0
    for site in x.sites:
        mmax = max(mmax, int((occs[:, site] + occs[:, L + site]).max(initial=0)))
    tables = _site_diag_tables(replica, powers, mmax)
    out = np.zeros(len(occs))
    for coeff, mono in x.terms:
        acc = np.zeros(len(occs))
        for copy in (0, 1):
            term = np.full(len(occs), 0.5 * float(coeff))
            for site, power in mono:
                t = tables[(copy, power)]
                term = term * t[occs[:, site], occs[:, L + site]]
            acc += term
        out += acc
    return out


# ---------------------------------------------------------------------------
# Transformed joint states


@dataclass
class JointState:
    """Diagonal (in the joint number basis) of the Fourier-transformed
    n-copy state: everything a number-resolved measurement can see."""

    replica: ReplicaBasis
    probs: np.ndarray
    source: str = "unspecified"

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.min() < -1e-12:
            raise ValueError("negative probability in joint distribution")
        self.probs = np.clip(p, 0.0, None)
        s = self.probs.sum()
        if abs(s - 1.0) > 1e-9:
            raise ValueError(f"joint distribution sums to {s}, not 1")
        self.probs /= s


def _fourier_map(replica: ReplicaBasis):
    if replica.statistics == BOSON:
        return lambda v: apply_fourier(replica, v)
    from .replica import fermionic_fourier_op
    f = fermionic_fourier_op(replica).matrix
    return lambda v: f @ v


def fourier_transformed_joint(replica: ReplicaBasis, state,
                              weight_cut: float = 1e-15) -> JointState:
    """Diagonal of F (state^{tensor n}) F^dag.

    ``state`` is a single-copy DensityMatrix or pure-state vector.  Mixed
    states are expanded over n-tuples of eigenvectors; tuples with weight
    below ``weight_cut`` are dropped (bias far below sampling noise).
    """
    apply_f = _fourier_map(replica)
    if isinstance(state, DensityMatrix):
        if state.basis != replica.copy_basis:
            raise ValueError("state basis does not match the replica copies")
        w, v = state.eigensystem()
        keep = np.flatnonzero(w > weight_cut)
        w, v = w[keep], v[:, keep]
        if replica.n == 2:
            pim = replica.product_index_map
            dj = replica.joint_basis.dim
            probs = np.zeros(dj)
            flat = pim.ravel()
            for a in range(len(w)):
                block = np.zeros((dj, len(w)), dtype=complex)
                block[flat] = np.einsum("i,jl->ijl", v[:, a],
                                        v).reshape(-1, len(w))
                out = apply_f(block)
                probs += (np.abs(out) ** 2) @ (w[a] * w)
        else:
            from itertools import product as iproduct
            probs = np.zeros(replica.joint_basis.dim)
            for combo in iproduct(range(len(w)), repeat=replica.n):
                wt = math.prod(float(w[c]) for c in combo)
                if wt < weight_cut:
                    continue
                vec = replica.product_state(*[v[:, c] for c in combo])
                probs += wt * np.abs(apply_f(vec)) ** 2
        return JointState(replica, probs, source="mixed")
    psi = np.asarray(state)
    if psi.ndim != 1 or len(psi) != replica.copy_basis.dim:
        raise ValueError("expected a single-copy state vector")
    vec = replica.product_state(*([psi] * replica.n))
    out = apply_f(vec)
    return JointState(replica, np.abs(out) ** 2, source="pure")


def joint_from_transformed(replica: ReplicaBasis, transformed) -> JointState:
    """Wrap an already-transformed joint state (matrix or vector)."""
    if isinstance(transformed, np.ndarray) and transformed.ndim == 1:
        return JointState(replica, np.abs(transformed) ** 2)
    m = transformed.matrix if isinstance(transformed, DensityMatrix) else transformed
    return JointState(replica, np.real(np.diagonal(m)).copy())


# ---------------------------------------------------------------------------
# Exact oracle


def virtual_expectation_exact(rho: DensityMatrix, x, n: int) -> float:
    """tr(X rho**n) / tr(rho**n) by direct matrix powers (the master oracle)."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if isinstance(x, NumberObservable):
        x = x.matrix(rho.basis)
    if x.row_basis != rho.basis:
        raise ValueError("observable and state bases differ")
    p = np.linalg.matrix_power(rho.matrix, int(n))
    z = np.trace(p).real
    if z < 1e-300:
        raise ValueError("tr(rho**n) numerically vanishes")
    return float(np.real(np.trace(x.dense() @ p)) / z)


# ---------------------------------------------------------------------------
# Shot records and reports


@dataclass
class ShotRecord:
    """One simulated number-resolved measurement of the joint system."""

    occupations: tuple
    r_value: complex
    x_value: float
    weight: int = 1


@dataclass
class EstimateReport:
    """Ratio estimate of a virtually cooled expectation value."""

    observable: str
    n: int
    shots: int
    seed: int
    numerator: float
    numerator_se: float
    denominator: float
    denominator_se: float
    ratio: float
    ratio_se: float
    beta: float | None = None
    workers: int = 1
    numerator_imag: float = 0.0
    ratio_imag: float = 0.0
    ratio_imag_se: float = 0.0

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("report needs at least one shot")
        if abs(self.denominator) > 1.0 + 1e-9:
            raise ValueError("denominator mean outside [-1, 1]")
        for f in (self.numerator_se, self.denominator_se, self.ratio_se):
            if f < 0:
                raise ValueError("standard errors must be non-negative")

    CSV_HEADER = ("observable,n,beta,shots,seed,numerator,numerator_se,"
                  "denominator,denominator_se,ratio,ratio_se")

    def to_csv_row(self) -> str:
        beta = "" if self.beta is None else f"{self.beta:.16e}"
        nums = ",".join(f"{v:.16e}" for v in
                        (self.numerator, self.numerator_se, self.denominator,
                         self.denominator_se, self.ratio, self.ratio_se))
        return f"{self.observable},{self.n},{beta},{self.shots},{self.seed},{nums}"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def _split_shots(shots: int, workers: int):
    base, extra = divmod(shots, workers)
    return [base + (1 if i < extra else 0) for i in range(workers)]


def _sample_counts(probs: np.ndarray, shots: int, seed: int,
                   workers: int) -> np.ndarray:
    """Multinomial outcome counts, merged over per-worker RNG streams.

    Worker streams are spawned from the master seed, so results are bitwise
    reproducible for a fixed (seed, workers) pair.
    """
    seqs = np.random.SeedSequence(seed).spawn(workers)
    counts = np.zeros(len(probs), dtype=np.int64)
    for chunk, seq in zip(_split_shots(shots, workers), seqs):
        if chunk == 0:
            continue
        rng = np.random.default_rng(seq)
        counts += rng.multinomial(chunk, probs)
    return counts


def _ratio_statistics(u, v, counts, shots):
    """Means, standard errors and delta-method ratio error from weighted
    per-outcome numerator/denominator samples."""
    m = float(shots)
    u_mean = (counts @ u) / m
    v_mean = (counts @ v) / m
    ddof = m - 1 if shots > 1 else 1.0

    def _se(vals, mean):
        var = (counts @ np.abs(vals - mean) ** 2) / ddof
        return math.sqrt(max(var.real, 0.0) / m)

    ratio = u_mean / v_mean
    w = (u - ratio * v) / v_mean
    se_re = math.sqrt(max((counts @ np.real(w) ** 2) / ddof, 0.0) / m)
    se_im = math.sqrt(max((counts @ np.imag(w) ** 2) / ddof, 0.0) / m)
    return (u_mean, _se(u, u_mean), v_mean, _se(v, v_mean),
            ratio, se_re, se_im)


def _prepare_values(joint: JointState, x: NumberObservable, region,
                    fermionic: bool, idx: np.ndarray):
    replica = joint.replica
    occs = replica.joint_basis.states[idx]
    if region is not None:
        region = tuple(sorted(region))
        outside = set(x.sites) - set(region)
        if outside:
            raise ValueError(f"observable touches sites {sorted(outside)} "
                             "outside the measured region")
    if fermionic:
        r = v_values(replica, occs, region=region)
    else:
        r = phase_values(replica, occs, region=region)
    xv = _transformed_diag_values(replica, x, occs)
    return xv, r


def _estimate(joint: JointState, x: NumberObservable, shots: int, seed: int,
              *, workers: int = 1, region=None, fermionic: bool = False,
              beta: float | None = None) -> EstimateReport:
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if not isinstance(x, NumberObservable):
        raise TypeError(
            "sampled estimation needs a NumberObservable (diagonal in the "
            "number basis); for general operators use "
            "virtual_expectation_exact")
    counts = _sample_counts(joint.probs, shots, seed, max(1, workers))
    idx = np.flatnonzero(counts)
    xv, r = _prepare_values(joint, x, region, fermionic, idx)
    u = xv * r
    stats = _ratio_statistics(u, r, counts[idx], shots)
    u_mean, u_se, v_mean, v_se, ratio, se_re, se_im = stats
    return EstimateReport(
        observable=x.name, n=joint.replica.n, shots=shots, seed=seed,
        numerator=float(np.real(u_mean)), numerator_se=u_se,
        denominator=float(np.real(v_mean)), denominator_se=v_se,
        ratio=float(np.real(ratio)), ratio_se=se_re,
        beta=beta, workers=max(1, workers),
        numerator_imag=float(np.imag(u_mean)),
        ratio_imag=float(np.imag(ratio)), ratio_imag_se=se_im)


def interferometric_estimate(joint: JointState, x: NumberObservable,
                             shots: int, seed: int, *, workers: int = 1,
                             region=None,
                             beta: float | None = None) -> EstimateReport:
    """Sampled bosonic ratio estimate of tr(X rho**n)/tr(rho**n).

    ``region`` restricts both the parity and the observable to a site
    subset, which estimates the same ratio for the reduced state on that
    region.  Deterministic for fixed (seed, workers).
    """
    if joint.replica.statistics != BOSON:
        raise ValueError("use fermionic_estimate for fermionic replicas")
    return _estimate(joint, x, shots, seed, workers=workers, region=region,
                     fermionic=False, beta=beta)


def fermionic_estimate(joint: JointState, x: NumberObservable, shots: int,
                       seed: int, *, workers: int = 1,
                       beta: float | None = None) -> EstimateReport:
    """Sampled two-copy fermionic ratio estimate (V replaces the parity)."""
    replica = joint.replica
    if replica.statistics != FERMION:
        raise ValueError("fermionic_estimate needs a fermionic replica basis")
    monomials = []
    for _, mono in x.terms:
        for copy_attr in (("create_copy1", "annihilate_copy1"),
                          ("create_copy2", "annihilate_copy2")):
            sites = tuple(s for s, _ in mono)
            monomials.append(FermionMonomial(**{copy_attr[0]: sites,
                                                copy_attr[1]: sites}))
    if monomials:
        report = v_commutant_check(monomials, replica)
        if not report.commutes:
            raise ValueError("observable does not commute with the fermionic "
                             "measurement operator")
    return _estimate(joint, x, shots, seed, workers=workers,
                     fermionic=True, beta=beta)


def interferometric_expectation(joint: JointState, x: NumberObservable,
                                region=None, fermionic: bool = False):
    """Exact (infinite-shot) numerator, denominator and ratio of the sampled
    estimator, from the full outcome distribution."""
    idx = np.flatnonzero(joint.probs > 0)
    xv, r = _prepare_values(joint, x, region, fermionic, idx)
    p = joint.probs[idx]
    num = p @ (xv * r)
    den = p @ r
    return num, den, num / den


def sample_shot_records(joint: JointState, x: NumberObservable, shots: int,
                        seed: int, *, region=None,
                        fermionic: bool = False) -> list[ShotRecord]:
    """Expanded per-shot records (for small runs and file output)."""
    counts = _sample_counts(joint.probs, shots, seed, 1)
    idx = np.flatnonzero(counts)
    xv, r = _prepare_values(joint, x, region, fermionic, idx)
    occs = joint.replica.joint_basis.states[idx]
    records = []
    for row, c in enumerate(counts[idx]):
        rec = ShotRecord(tuple(int(o) for o in occs[row]),
                         complex(r[row]) if np.iscomplexobj(r) else float(r[row]),
                         float(xv[row]), weight=int(c))
        records.extend([rec] * int(c))
    return records


# ---------------------------------------------------------------------------
# Ancilla channel, recombination, distillation


def ancilla_step(rho: DensityMatrix) -> tuple[DensityMatrix, float]:
    """Post-selected purification: rho -> (rho + rho^2) / (1 + tr rho^2),
    with success probability p+ = (1 + tr rho^2)/2."""
    z2 = purity(rho, 2)
    m = (rho.matrix + rho.matrix @ rho.matrix) / (1.0 + z2)
    return DensityMatrix(rho.basis, m), (1.0 + z2) / 2.0


def ancilla_combine(x_rho1: float, x_rho: float, p_plus: float) -> float:
    """Recombine <X> on the purified and original states into the
    half-temperature expectation value."""
    if not p_plus > 0.5 + 1e-12:
        raise ValueError("success probability at the symmetric-subspace "
                         "floor; purity numerically zero")
    return (2 * p_plus * x_rho1 - x_rho) / (2 * p_plus - 1)


@dataclass
class DistillStep:
    iteration: int
    state: DensityMatrix
    p_plus: float
    top_weight: float
    ground_fidelity: float


def distill(rho: DensityMatrix, iterations: int) -> list[DistillStep]:
    """Iterate the purification step; track overlap with the dominant
    eigenvector of the input state (the ground state, for thermal input)."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    w, v = rho.eigensystem()
    if len(w) > 1 and (w[-1] - w[-2]) < 1e-12:
        warnings.warn("dominant eigenvalue nearly degenerate; distillation "
                      "target is ambiguous", RuntimeWarning)
    ground = v[:, -1]
    steps = []
    state = rho
    for it in range(1, iterations + 1):
        state, p_plus = ancilla_step(state)
        weights = np.linalg.eigvalsh(state.matrix)
        fid = float(np.real(ground.conj() @ state.matrix @ ground))
        steps.append(DistillStep(it, state, p_plus, float(weights[-1]), fid))
    return steps


def ancilla_sampled_estimate(rho: DensityMatrix, x: NumberObservable,
                             shots: int, seed: int,
                             design: str = "shared") -> dict:
    """Shot-sampled version of the ancilla protocol.

    ``shared`` estimates the success probability from the same run stream
    that supplies the purified-state measurements; ``independent`` spends a
    separate stream of swap measurements on it.  Both error bars are
    reported because the two designs propagate shot noise differently.
    """
    if design not in ("shared", "independent"):
        raise ValueError("design must be 'shared' or 'independent'")
    rng = np.random.default_rng(seed)
    vals = x.values_single(rho.basis.states)
    rho1, p_plus = ancilla_step(rho)

    p0 = np.clip(np.real(np.diagonal(rho.matrix)), 0, None)
    p1 = np.clip(np.real(np.diagonal(rho1.matrix)), 0, None)
    x0_samples = vals[rng.choice(len(p0), size=shots, p=p0 / p0.sum())]
    plus_flags = rng.random(shots) < p_plus
    n_plus = int(plus_flags.sum())
    if n_plus == 0:
        raise RuntimeError("no successful post-selections; increase shots")
    x1_samples = vals[rng.choice(len(p1), size=n_plus, p=p1 / p1.sum())]
    if design == "shared":
        p_hat = n_plus / shots
        var_p = p_hat * (1 - p_hat) / shots
    else:
        extra = rng.random(shots) < p_plus
        p_hat = float(extra.mean())
        var_p = p_hat * (1 - p_hat) / shots
    x0_hat, x1_hat = float(x0_samples.mean()), float(x1_samples.mean())
    var_x0 = float(x0_samples.var(ddof=1)) / shots if shots > 1 else 0.0
    var_x1 = float(x1_samples.var(ddof=1)) / n_plus if n_plus > 1 else 0.0
    est = ancilla_combine(x1_hat, x0_hat, p_hat)
    d = 2 * p_hat - 1
    grad_p = 2 * (x0_hat - x1_hat) / d ** 2
    var = (grad_p ** 2 * var_p + (2 * p_hat / d) ** 2 * var_x1
           + (1 / d) ** 2 * var_x0)
    return {"design": design, "estimate": est, "stderr": math.sqrt(var),
            "p_plus_hat": p_hat, "x_rho_hat": x0_hat, "x_rho1_hat": x1_hat,
            "shots": shots, "seed": seed}


# ---------------------------------------------------------------------------
# Buffered subregion estimation


@dataclass
class BufferedResult:
    region: tuple
    buffer_width: int
    buffered_sites: tuple
    approx: float
    exact: float
    error: float


def buffered_estimate(rho_full: DensityMatrix, region, buffer_w: int,
                      x_on_region: NumberObservable) -> BufferedResult:
    """Compare the buffered-subregion power state against the true
    half-temperature expectation of an observable supported on the region."""
    region = tuple(sorted(region))
    L = rho_full.basis.num_modes
    if buffer_w < 0:
        raise ValueError("buffer width must be >= 0")
    lo = max(0, region[0] - buffer_w)
    hi = min(L - 1, region[-1] + buffer_w)
    buffered = tuple(range(lo, hi + 1))
    if set(x_on_region.sites) - set(region):
        raise ValueError("observable must be supported on the region")

    exact = virtual_expectation_exact(rho_full, x_on_region, 2)

    rho_b = (rho_full if len(buffered) == L
             else partial_trace(rho_full, buffered))
    sigma = matrix_power_state(rho_b, 2)
    remap = {s: buffered.index(s) for s in x_on_region.sites}
    terms = tuple((c, tuple((remap[s], k) for s, k in mono))
                  for c, mono in x_on_region.terms)
    x_b = NumberObservable(x_on_region.name, terms)
    approx = float(x_b.values_single(sigma.basis.states) @
                   np.real(np.diagonal(sigma.matrix)))
    return BufferedResult(region, buffer_w, buffered, approx, exact,
                          abs(approx - exact))


# ---------------------------------------------------------------------------
# Shot-cost scaling study


@dataclass
class ScalingRow:
    beta: float
    region_size: int
    joint_dim: int
    z2: float
    shots_used: int
    reached_target: bool


@dataclass
class ScalingStudy:
    rows: list
    target_precision: float
    slope: float
    intercept: float
    cost_factor_spread: float

    def csv_rows(self):
        for r in self.rows:
            yield (f"{r.beta:.16e},{r.region_size},{r.joint_dim},"
                   f"{r.z2:.16e},{r.shots_used}")

    CSV_HEADER = "beta,region_size,joint_dim,z2,shots"


def shots_scaling_study(h_full: Operator, beta_list, region_sizes,
                        target_precision: float, seed: int, *,
                        batch: int = 1024,
                        max_shots: int = 4_000_000) -> ScalingStudy:
    """Empirical shot count for the purity (denominator) estimator to reach
    a relative precision, across a (beta, region size) grid; the count is
    expected to scale like 1/Z2**2."""
    from .thermal import thermal_state
    basis = h_full.basis
    L = basis.num_modes
    rows = []
    seeds = np.random.SeedSequence(seed).spawn(len(beta_list) * len(region_sizes))
    k = 0
    for beta in beta_list:
        rho = thermal_state(h_full, beta)
        for size in region_sizes:
            start = (L - size) // 2
            region = tuple(range(start, start + size))
            rho_r = partial_trace(rho, region)
            z2 = purity(rho_r, 2)
            rep = ReplicaBasis(rho_r.basis, 2)
            joint = fourier_transformed_joint(rep, rho_r)
            rng = np.random.default_rng(seeds[k])
            k += 1
            r_all = np.real(phase_values(rep))
            shots = 0
            s1 = s2 = 0.0
            reached = False
            while shots < max_shots:
                counts = rng.multinomial(batch, joint.probs)
                shots += batch
                s1 += counts @ r_all
                s2 += counts @ r_all ** 2
                var = max(s2 / shots - (s1 / shots) ** 2, 1e-30)
                se = math.sqrt(var / shots)
                if se <= target_precision * z2:
                    reached = True
                    break
            rows.append(ScalingRow(beta, size, rep.joint_basis.dim, z2,
                                   shots, reached))
    xs = np.array([math.log(1.0 / r.z2 ** 2) for r in rows])
    ys = np.array([math.log(r.shots_used) for r in rows])
    if len(rows) > 1:
        slope, intercept = np.polyfit(xs, ys, 1)
    else:
        slope, intercept = float("nan"), float(ys[0])
    cost = np.array([r.shots_used * r.z2 ** 2 for r in rows])
    spread = float(cost.max() / cost.min())
    return ScalingStudy(rows, target_precision, float(slope),
                        float(intercept), spread)

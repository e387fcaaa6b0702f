"""Declarative experiment runner.

``vcool run config.yaml`` executes one experiment described by a YAML file
and writes CSV data plus a JSON manifest; ``vcool verify`` runs the
acceptance suite.  Outputs are deterministic: the same config and seed
produce byte-identical CSV files, and every CSV embeds the hash of the
effective configuration.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .fock import BOSON, FERMION, enumerate_basis, total_number_op
from .model import ModelParams, bose_hubbard, fermi_hopping
from .correlator import (correlator_temperature_study,
                         reference_correlator_study)
from .protocol import (NumberObservable, ancilla_combine, ancilla_sampled_estimate,
                       ancilla_step, buffered_estimate, distill,
                       fourier_transformed_joint, interferometric_estimate,
                       fermionic_estimate, shots_scaling_study,
                       virtual_expectation_exact)
from .quench import QuenchConfig, quench_cooling_experiment
from .replica import ReplicaBasis, verify_swap_identity, fourier_op, \
    fermionic_fourier_op, phase_values, v_values
from .thermal import thermal_state, random_density_matrix

_FLOAT = "{:.16e}".format


class ConfigError(ValueError):
    pass


def _require(cfg: dict, keys, kind: str):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"experiment '{kind}' needs config keys {missing}")


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def write_csv(path: Path, header: str, rows, cfg_hash: str) -> None:
    lines = [f"# config_sha256={cfg_hash}", header]
    lines.extend(rows)
    path.write_text("\n".join(lines) + "\n")


def _model_from(cfg: dict) -> ModelParams:
    return ModelParams.from_dict(cfg.get("model", {}))


def _seeded(cfg: dict) -> int:
    if "seed" not in cfg:
        raise ConfigError("a seed is mandatory for sampled experiments")
    return int(cfg["seed"])


# ---------------------------------------------------------------------------
# Experiment runners: each returns (files dict name -> (header, rows),
# summary dict for the manifest).


def _run_identity_checks(cfg: dict, workers: int):
    sectors = cfg.get("sectors") or [
        {"statistics": BOSON, "n": 2, "L": 2, "N": 1},
        {"statistics": BOSON, "n": 2, "L": 2, "N": 2},
        {"statistics": BOSON, "n": 3, "L": 2, "N": 1},
        {"statistics": FERMION, "n": 2, "L": 3, "N": 1},
    ]
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    rows, worst = [], 0.0
    for s in sectors:
        stats, n, L, N = s["statistics"], int(s["n"]), int(s["L"]), int(s["N"])
        cb = enumerate_basis(stats, L, n_total=N)
        rep = ReplicaBasis(cb, n)
        if stats == BOSON:
            check = verify_swap_identity(rep)
            rows.append(f"swap_identity,{stats},{n},{L},{N},"
                        f"{rep.joint_basis.dim},{_FLOAT(check.deviation)},"
                        f"{_FLOAT(check.tolerance)},{check.passed}")
            worst = max(worst, check.deviation)
        rho = random_density_matrix(cb, rng)
        f = (fourier_op(rep) if stats == BOSON
             else fermionic_fourier_op(rep)).dense()
        pim = rep.product_index_map
        kron_n = rho.matrix
        for _ in range(n - 1):
            kron_n = np.kron(kron_n, rho.matrix)
        joint = np.zeros((rep.joint_basis.dim,) * 2, dtype=complex)
        joint[np.ix_(pim.ravel(), pim.ravel())] = kron_n
        r = (phase_values(rep) if stats == BOSON else v_values(rep))
        lhs = complex(np.sum(r * np.diagonal(f @ joint @ f.conj().T)))
        zn = float(np.real(np.trace(
            np.linalg.matrix_power(rho.matrix, n))))
        dev = abs(lhs - zn)
        rows.append(f"power_trace_identity,{stats},{n},{L},{N},"
                    f"{rep.joint_basis.dim},{_FLOAT(dev)},"
                    f"{_FLOAT(1e-10)},{dev < 1e-10}")
        worst = max(worst, dev)
    header = "check,statistics,n,L,N,joint_dim,deviation,tolerance,passed"
    ok = all(row.rsplit(",", 1)[1] == "True" for row in rows)
    return {"identity_checks.csv": (header, rows)}, \
        {"max_deviation": worst, "all_passed": ok}


def _run_virtual_density(cfg: dict, workers: int):
    _require(cfg, ("model", "beta", "shots"), "virtual_density")
    params = _model_from(cfg)
    n_total = int(cfg.get("N", params.L))
    n_copies = int(cfg.get("n", 2))
    beta = float(cfg["beta"])
    shots = int(cfg["shots"])
    seed = _seeded(cfg)
    statistics = cfg.get("statistics", BOSON)
    basis = enumerate_basis(statistics, params.L, n_total=n_total)
    h = (bose_hubbard if statistics == BOSON else fermi_hopping)(basis, params)
    rho = thermal_state(h, beta)
    rep = ReplicaBasis(basis, n_copies)
    joint = fourier_transformed_joint(rep, rho)
    sites = cfg.get("sites") or list(range(params.L))
    rows = []
    max_z = 0.0
    for j in sites:
        x = NumberObservable.density(int(j))
        exact = virtual_expectation_exact(rho, x, n_copies)
        if statistics == BOSON:
            est = interferometric_estimate(joint, x, shots, seed,
                                           workers=workers, beta=beta)
        else:
            est = fermionic_estimate(joint, x, shots, seed, workers=workers,
                                     beta=beta)
        z = (est.ratio - exact) / est.ratio_se if est.ratio_se else 0.0
        max_z = max(max_z, abs(z))
        rows.append(f"{j},{_FLOAT(exact)},{_FLOAT(est.ratio)},"
                    f"{_FLOAT(est.ratio_se)},{_FLOAT(z)}")
    return {"virtual_density.csv": ("site,exact,estimate,stderr,z", rows)}, \
        {"max_abs_z": max_z, "shots": shots}


def _run_correlator(cfg: dict, workers: int, reference: bool):
    if reference:
        table = reference_correlator_study(
            **{k: cfg[k] for k in ("L", "n_total", "u_over_j", "temperatures",
                                   "distances") if k in cfg},
            translation_check=bool(cfg.get("translation_check", False)))
    else:
        _require(cfg, ("model", "N", "temperatures", "distances"),
                 "correlator_study")
        table = correlator_temperature_study(
            _model_from(cfg), int(cfg["N"]), tuple(cfg["temperatures"]),
            tuple(cfg["distances"]),
            translation_check=bool(cfg.get("translation_check", False)))
    ratios = {t: table.range_ratio(t) for t in table.temperatures()}
    summary = {"basis_dim": table.basis_dim,
               "runtime_s": table.runtime_s,
               "second_to_first_range_ratio": {str(k): v
                                               for k, v in ratios.items()}}
    if table.translation_deviation is not None:
        summary["translation_deviation"] = table.translation_deviation
    return {"correlators.csv": (table.CSV_HEADER, list(table.csv_rows()))}, \
        summary


def _run_ancilla(cfg: dict, workers: int):
    _require(cfg, ("model", "beta"), "ancilla")
    params = _model_from(cfg)
    n_total = int(cfg.get("N", params.L))
    beta = float(cfg["beta"])
    basis = enumerate_basis(BOSON, params.L, n_total=n_total)
    rho = thermal_state(bose_hubbard(basis, params), beta)
    site = int(cfg.get("site", params.L // 2))
    x = NumberObservable.density(site)
    rho1, p_plus = ancilla_step(rho)
    x1 = rho1.expectation(x.matrix(rho.basis))
    x0 = rho.expectation(x.matrix(rho.basis))
    combined = ancilla_combine(x1, x0, p_plus)
    exact = virtual_expectation_exact(rho, x, 2)
    rows = [f"exact,,{_FLOAT(combined)},0.0000000000000000e+00,"
            f"{_FLOAT(p_plus)},{_FLOAT(combined - exact)}"]
    shots = int(cfg.get("shots", 0))
    summary = {"p_plus": p_plus, "exact": exact,
               "combine_deviation": abs(combined - exact)}
    if shots:
        seed = _seeded(cfg)
        for design in ("shared", "independent"):
            r = ancilla_sampled_estimate(rho, x, shots, seed, design=design)
            rows.append(f"sampled,{design},{_FLOAT(r['estimate'])},"
                        f"{_FLOAT(r['stderr'])},{_FLOAT(r['p_plus_hat'])},"
                        f"{_FLOAT(r['estimate'] - exact)}")
            summary[f"sampled_{design}"] = r
    header = "mode,design,estimate,stderr,p_plus,deviation_from_oracle"
    return {"ancilla.csv": (header, rows)}, summary


def _run_distill(cfg: dict, workers: int):
    _require(cfg, ("model", "beta"), "distill")
    params = _model_from(cfg)
    n_total = int(cfg.get("N", params.L))
    basis = enumerate_basis(BOSON, params.L, n_total=n_total)
    rho = thermal_state(bose_hubbard(basis, params), float(cfg["beta"]))
    steps = distill(rho, int(cfg.get("iterations", 10)))
    rows = [f"{s.iteration},{_FLOAT(s.p_plus)},{_FLOAT(s.top_weight)},"
            f"{_FLOAT(s.ground_fidelity)}" for s in steps]
    return {"distill.csv": ("iteration,p_plus,top_weight,ground_fidelity",
                            rows)}, \
        {"final_fidelity": steps[-1].ground_fidelity,
         "final_p_plus": steps[-1].p_plus}


def _run_buffered(cfg: dict, workers: int):
    _require(cfg, ("model", "N", "beta", "region"), "buffered")
    params = _model_from(cfg)
    basis = enumerate_basis(BOSON, params.L, n_total=int(cfg["N"]))
    rho = thermal_state(bose_hubbard(basis, params), float(cfg["beta"]))
    region = tuple(int(s) for s in cfg["region"])
    site = int(cfg.get("site", region[len(region) // 2]))
    x = NumberObservable.density(site)
    rows = []
    errors = {}
    for w in cfg.get("widths", (0, 1, 2)):
        res = buffered_estimate(rho, region, int(w), x)
        errors[int(w)] = res.error
        rows.append(f"{w},{_FLOAT(res.approx)},{_FLOAT(res.exact)},"
                    f"{_FLOAT(res.error)}")
    return {"buffered.csv": ("width,approx,exact,abs_error", rows)}, \
        {"errors_by_width": errors}


def _run_scaling(cfg: dict, workers: int):
    _require(cfg, ("model", "N", "betas", "region_sizes"), "scaling")
    params = _model_from(cfg)
    basis = enumerate_basis(BOSON, params.L, n_total=int(cfg["N"]))
    h = bose_hubbard(basis, params)
    study = shots_scaling_study(
        h, tuple(float(b) for b in cfg["betas"]),
        tuple(int(r) for r in cfg["region_sizes"]),
        float(cfg.get("target_precision", 0.05)), _seeded(cfg))
    return {"scaling.csv": (study.CSV_HEADER, list(study.csv_rows()))}, \
        {"slope": study.slope, "cost_factor_spread": study.cost_factor_spread}


def _run_quench_cooling(cfg: dict, workers: int):
    if "preset" in cfg:
        qc = QuenchConfig.preset(str(cfg["preset"]),
                                 shots=int(cfg.get("shots", 100_000)),
                                 seed=_seeded(cfg))
    else:
        _require(cfg, ("pattern", "u_over_j", "times", "shots"),
                 "quench_cooling")
        qc = QuenchConfig(pattern=tuple(cfg["pattern"]),
                          u_over_j=float(cfg["u_over_j"]),
                          times=tuple(cfg["times"]),
                          subsystem=(tuple(cfg["subsystem"])
                                     if "subsystem" in cfg else None),
                          shots=int(cfg["shots"]), seed=_seeded(cfg),
                          exact_only=bool(cfg.get("exact_only", False)))
    res = quench_cooling_experiment(qc, workers=workers)
    summary = {
        "subsystem_fit_T_over_J": res.mean_temperature,
        "subsystem_fit_mu_over_J": res.mean_mu,
        "buffered_sites": list(res.buffered_sites),
        "mean_abs_dev_vc": res.mean_abs_dev_vc,
        "mean_abs_dev_raw": res.mean_abs_dev_raw,
        "max_abs_z": max(abs(s.z_score) for s in res.sites),
    }
    if res.thermalization is not None:
        summary["entropy_per_time"] = list(res.thermalization.entropies)
    if res.global_fit is not None:
        summary["ensemble_T_over_J"] = 1.0 / res.global_fit.beta
        summary["ensemble_mu_over_J"] = res.global_fit.mu
    return {"quench_cooling.csv": (res.CSV_HEADER, list(res.csv_rows()))}, \
        summary


RUNNERS = {
    "identity_checks": _run_identity_checks,
    "virtual_density": _run_virtual_density,
    "correlator_study": lambda c, w: _run_correlator(c, w, reference=False),
    "correlator_reference": lambda c, w: _run_correlator(c, w, reference=True),
    "ancilla": _run_ancilla,
    "distill": _run_distill,
    "buffered": _run_buffered,
    "scaling": _run_scaling,
    "quench_cooling": _run_quench_cooling,
}

_SAMPLED_KINDS = {"virtual_density", "scaling", "quench_cooling"}


def load_config(path: Path) -> dict:
    try:
        cfg = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"config does not parse: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping")
    if "experiment" not in cfg:
        raise ConfigError("config needs an 'experiment' key")
    kind = cfg["experiment"]
    if kind not in RUNNERS:
        raise ConfigError(f"unknown experiment {kind!r}; choose from "
                          f"{sorted(RUNNERS)}")
    return cfg


def run(config_path: str, output: str | None = None,
        seed: int | None = None, workers: int = 1) -> int:
    """Execute one experiment; returns the process exit status."""
    t0 = time.time()
    try:
        cfg = load_config(Path(config_path))
        if seed is not None:
            cfg["seed"] = int(seed)
        kind = cfg["experiment"]
        if kind in _SAMPLED_KINDS and "seed" not in cfg:
            raise ConfigError(f"experiment '{kind}' samples shots; "
                              "a seed is mandatory")
        out_dir = Path(output or cfg.get("output", "out"))
        h = config_hash(cfg)
        files, summary = RUNNERS[kind](cfg, max(1, workers))
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, (header, rows) in files.items():
        path = out_dir / name
        write_csv(path, header, rows, h)
        written.append(str(path))
    manifest = {
        "experiment": kind,
        "config": cfg,
        "config_sha256": h,
        "outputs": written,
        "version": __version__,
        "wall_time_s": time.time() - t0,
        "summary": summary,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    print(f"wrote {', '.join(written)}")
    return 0


def verify(criteria=None, mutate: str | None = None,
           output: str | None = None) -> int:
    from . import acceptance
    results = acceptance.run_all(criteria=criteria, mutate=mutate)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name:<{width}}  ({r.seconds:6.1f}s)  {r.detail}")
    if output:
        out = Path(output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "acceptance.json").write_text(json.dumps(
            [{"name": r.name, "passed": r.passed, "seconds": r.seconds,
              "detail": r.detail} for r in results], indent=2) + "\n")
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vcool",
        description="replica-based virtual cooling simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment from a config")
    p_run.add_argument("config", help="YAML experiment description")
    p_run.add_argument("--output", help="output directory (overrides config)")
    p_run.add_argument("--seed", type=int, help="seed override")
    p_run.add_argument("--workers", type=int, default=1,
                       help="sampling worker streams")

    p_ver = sub.add_parser("verify", help="run the acceptance suite")
    p_ver.add_argument("--criteria", nargs="*",
                       help="subset of criterion ids to run")
    p_ver.add_argument("--mutate", help=argparse.SUPPRESS)
    p_ver.add_argument("--output", help="write acceptance.json here")

    args = parser.parse_args(argv)
    if args.command == "run":
        return run(args.config, output=args.output, seed=args.seed,
                   workers=args.workers)
    return verify(criteria=args.criteria, mutate=args.mutate,
                  output=args.output)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``qtraj {validate,discrete,sde,master,gencheck,converge}``.

Exit codes: 0 when every check passes, 2 when a check fails, 1 for a
configuration error (unreadable or inconsistent config, invalid model).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import (
    ExperimentConfig,
    Setup,
    build_coefficients,
    build_hamiltonian_model,
    build_observable,
    build_setup,
    coefficients_to_json,
    load_config,
    with_overrides,
)
from .discrete import sample_ensemble
from .errors import ConfigError, QtrajError, ValidationError
from .generators import convergence_test, generator_gap, master_solution, statistics_by_name
from .interaction import UnitaryFamily, build_from_coefficients, extract_limit_coefficients
from .limits import LimitMaps
from .linalg import DensityMatrix, check_state, state_residuals, unitarity_residual
from .sde import SdeConfig, integrate_ensemble, min_eigenvalues

log = logging.getLogger("qtraj")

EXIT_OK, EXIT_CONFIG, EXIT_CHECK = 0, 1, 2
UNITARITY_PROBES = (1, 10, 100, 1000, 10000)


class Context:
    def __init__(self, cfg: ExperimentConfig, out_dir: Path, quiet: bool):
        self.cfg = cfg
        self.out = out_dir
        self.quiet = quiet

    def say(self, msg: str) -> None:
        if not self.quiet:
            print(msg)


def _check(name: str, passed: bool, residual=None, threshold=None, message: str = "") -> dict:
    return {"name": name, "passed": bool(passed), "residual": residual, "threshold": threshold,
            "message": message}


def _run_validator(checks: list, name: str, fn) -> object:
    try:
        return fn()
    except ValidationError as exc:
        checks.append(_check(name, False, exc.residual, None, str(exc)))
    except (QtrajError, ValueError) as exc:
        checks.append(_check(name, False, None, None, str(exc)))
    return None


def validate_config(cfg: ExperimentConfig) -> list[dict]:
    """Run every structural validator independently and collect the results."""
    tol = cfg.tolerance_profile
    checks: list[dict] = []

    def observable():
        obs = build_observable(cfg, tol)
        checks.append(_check("projector_axioms", True, None, tol.projector,
                             f"I = {list(obs.jump_set)}, J = {list(obs.diffusive_set)}"))
        return obs

    _run_validator(checks, "projector_axioms", observable)

    def state():
        res = state_residuals(cfg.initial_state)
        check_state(cfg.initial_state, tol)
        defect = max(res["hermitian"], res["trace"], max(0.0, -res["min_eigenvalue"]))
        checks.append(_check("initial_state", True, defect, tol.psd))

    _run_validator(checks, "initial_state", state)

    family = None
    if cfg.model["type"] == "coefficients":
        def coefficients():
            c = build_coefficients(cfg)
            rep = c.claim2_report(tol)
            herm = rep["hamiltonian_hermitian_residual"]
            checks.append(_check("hamiltonian_hermitian", herm <= tol.hermitian, herm, tol.hermitian))
            checks.append(_check("claim2", rep["passes"], rep["adopted_residual"], tol.claim2,
                                 f"displayed LL* ordering residual {rep['displayed_ordering_residual']:.3e}"))
            return c

        coeffs = _run_validator(checks, "claim2", coefficients)
        if coeffs is not None and all(c["passed"] for c in checks if c["name"] in ("hamiltonian_hermitian", "claim2")):
            family = _run_validator(checks, "claim2", lambda: build_from_coefficients(coeffs, tol))
    else:
        def hamiltonian():
            m = build_hamiltonian_model(cfg, tol)
            checks.append(_check("hamiltonian_hermitian", True, None, tol.hermitian))
            return UnitaryFamily.from_hamiltonian(m)

        family = _run_validator(checks, "hamiltonian_hermitian", hamiltonian)
        coeffs = None

    if family is not None:
        def unitarity():
            worst = max(unitarity_residual(family(n).matrix) for n in UNITARITY_PROBES)
            checks.append(_check("unitarity", worst <= tol.unitary, worst, tol.unitary))

        _run_validator(checks, "unitarity", unitarity)

        def asymptotics():
            est = extract_limit_coefficients(family, tol=tol)
            worst = max(est.residuals.values())
            msg = "Richardson extrapolation over n = 1e4, 1e5, 1e6"
            if coeffs is not None:
                gap = max(float(np.max(np.abs(est.l00 - coeffs.l00))),
                          *(float(np.max(np.abs(a - b))) for a, b in zip(est.lk0, coeffs.lk0)))
                worst = max(worst, gap)
                msg += f"; distance to declared coefficients {gap:.3e}"
            checks.append(_check("asymptotic_consistency", worst <= 1e-3, worst, 1e-3, msg))
            rep = est.claim2_report(tol.replace(claim2=1e-3))
            checks.append(_check("claim2_extracted", rep["passes"], rep["adopted_residual"], 1e-3))

        _run_validator(checks, "asymptotic_consistency", asymptotics)
    return checks


def cmd_validate(ctx: Context) -> int:
    checks = validate_config(ctx.cfg)
    ok = all(c["passed"] for c in checks)
    io.write_json(ctx.out / "validate_report.json", {"passed": ok, "checks": checks})
    for c in checks:
        res = "" if c["residual"] is None else f" residual={c['residual']:.3e}"
        ctx.say(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']}{res} {c['message']}".rstrip())
    return EXIT_OK if ok else EXIT_CHECK


def _setup(ctx: Context) -> Setup:
    try:
        return build_setup(ctx.cfg)
    except ValidationError as exc:
        raise ConfigError(f"invalid model: {exc}") from exc


def cmd_discrete(ctx: Context) -> int:
    s, run = _setup(ctx), ctx.cfg.discrete
    ens = sample_ensemble(s.rho0, s.family, s.observable, run.n, run.horizon, run.paths, ctx.cfg.seed,
                          record_every=run.record_every, record_times=run.record_times,
                          beta_index=run.beta_index, keep_outcomes=run.write_paths > 0, tol=s.tol)
    bad = 0
    for rho in ens.states.reshape(-1, *ens.states.shape[-2:]):
        try:
            DensityMatrix(rho, s.tol)
        except ValidationError:
            bad += 1
    summary = io.ensemble_summary(ens)
    summary["invalid_states"] = bad
    io.write_json(ctx.out / "discrete_summary.json", summary)
    for j in range(min(run.write_paths, ens.n_paths)):
        io.write_path_csv(ctx.out / f"discrete_path_{j:04d}.csv", ens.time_grid, ens.states[j],
                          io.discrete_marks(ens, j))
    final = summary["per_time"][-1]
    ctx.say(f"discrete: {ens.n_paths} paths, n = {run.n}, t = {final['time']:g}; invalid states: {bad}")
    return EXIT_OK if bad == 0 else EXIT_CHECK


def intensity_checks(ens, sigmas: float = 4.0) -> list[dict]:
    out = []
    for q, ch in enumerate(ens.meta["jump_channels"]):
        jumps = float(ens.counts[:, q].sum())
        integral = float(ens.intensity[:, q].sum())
        if integral <= 0.0:
            out.append(_check(f"intensity_channel_{ch}", jumps == 0, jumps, 0.0, "no intensity"))
            continue
        ratio = jumps / integral
        sigma = 1.0 / np.sqrt(integral)
        out.append(_check(f"intensity_channel_{ch}", abs(ratio - 1.0) <= sigmas * sigma, ratio - 1.0,
                          sigmas * sigma, f"{int(jumps)} jumps, integrated intensity {integral:.6g}"))
    return out


def cmd_sde(ctx: Context) -> int:
    s, run = _setup(ctx), ctx.cfg.sde
    maps = LimitMaps(s.coeffs, s.observable, run.k_trunc, s.tol)
    cfg = SdeConfig(run.dt, run.horizon, run.k_trunc, ctx.cfg.seed, run.paths,
                    record_every=run.record_every, record_times=run.record_times)
    ens = integrate_ensemble(maps, s.rho0, cfg, keep_log=True)
    checks = intensity_checks(ens)
    tr = np.real(np.einsum("nrii->nr", ens.states))
    trace_err = float(np.max(np.abs(tr.mean(axis=0) - 1.0)))
    trace_budget = 3.0 * float(np.max(tr.std(axis=0, ddof=1) / np.sqrt(ens.n_paths), initial=0.0)) + 10 * run.dt \
        if ens.n_paths > 1 else 10 * run.dt
    checks.append(_check("mean_trace", trace_err <= trace_budget, trace_err, trace_budget))
    summary = io.ensemble_summary(ens)
    summary["checks"] = checks
    summary["min_eigenvalue"] = float(np.min(min_eigenvalues(ens.states)))
    io.write_json(ctx.out / "sde_summary.json", summary)
    for j in range(min(run.write_paths, ens.n_paths)):
        io.write_path_csv(ctx.out / f"sde_path_{j:04d}.csv", ens.time_grid, ens.states[j])
    io.write_jump_log(ctx.out / "sde_jumps.csv", ens.meta["jump_log"], ens.path_indices)
    ok = all(c["passed"] for c in checks)
    for c in checks:
        ctx.say(f"[{'PASS' if c['passed'] else 'FAIL'}] {c['name']} {c['message']}".rstrip())
    return EXIT_OK if ok else EXIT_CHECK


def cmd_master(ctx: Context) -> int:
    s = _setup(ctx)
    times = [float(t) for t in ctx.cfg.master.times]
    sols = [master_solution(s.coeffs, s.rho0, t) for t in times]
    io.write_path_csv(ctx.out / "master.csv", times, np.array(sols))
    io.write_json(ctx.out / "master.json", {
        "coefficients": coefficients_to_json(s.coeffs),
        "solutions": [{"time": t, "state": rho} for t, rho in zip(times, sols)],
    })
    for t, rho in zip(times, sols):
        diag = ", ".join(f"{x:.10f}" for x in np.real(np.diag(rho)))
        ctx.say(f"t = {t:g}: diag = [{diag}]")
    return EXIT_OK


def cmd_gencheck(ctx: Context) -> int:
    s, run = _setup(ctx), ctx.cfg.gencheck
    maps = LimitMaps(s.coeffs, s.observable, tol=s.tol)
    try:
        functions = statistics_by_name(s.coeffs.dim, run.statistics)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    rep = generator_gap(s.family, s.observable, maps, functions, run.n_list, run.states,
                        ctx.cfg.seed, run.threshold)
    io.write_json(ctx.out / "gencheck_report.json", rep.to_dict())
    lines = [f"sampled sup-gap over {rep.n_states} states, n = {rep.n_list}"]
    for name in rep.functions:
        gaps = ", ".join(f"{g:.3e}" for g in rep.gaps[name])
        lines.append(f"{name}: gaps [{gaps}] slope {rep.slopes[name]:.3f} (threshold {rep.threshold})")
    lines.append(f"overall: {'PASS' if rep.passed else 'FAIL'}")
    io.write_text(ctx.out / "gencheck_report.txt", "\n".join(lines))
    ctx.say("\n".join(lines))
    return EXIT_OK if rep.passed else EXIT_CHECK


def run_convergence(setup: Setup, run, seed: int):
    """Discrete ensembles for every n, the SDE ensemble and its bias companion, and the report."""
    times = tuple(float(t) for t in run.times)
    try:
        stats = statistics_by_name(setup.coeffs.dim, run.statistics)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    horizon = max(times)
    disc = {
        int(n): sample_ensemble(setup.rho0, setup.family, setup.observable, int(n), horizon, run.paths,
                                seed, record_times=times, keep_outcomes=False, tol=setup.tol)
        for n in run.n_list
    }
    maps = LimitMaps(setup.coeffs, setup.observable, run.k_trunc, setup.tol)
    sde = integrate_ensemble(maps, setup.rho0, SdeConfig(run.dt, horizon, run.k_trunc, seed, run.paths,
                                                         record_times=times))
    companion = integrate_ensemble(maps, setup.rho0, SdeConfig(run.dt * run.bias_ratio, horizon, run.k_trunc,
                                                               seed, run.paths, record_times=times))
    rep = convergence_test(disc, sde, times, stats, sde_companion=companion, seed=seed, sigmas=run.sigmas)
    return rep, disc, sde


def cmd_converge(ctx: Context) -> int:
    s, run = _setup(ctx), ctx.cfg.converge
    rep, _, _ = run_convergence(s, run, ctx.cfg.seed)
    io.write_json(ctx.out / "converge_report.json", rep.to_dict())
    text = rep.render()
    io.write_text(ctx.out / "converge_report.txt", text)
    ctx.say(text)
    return EXIT_OK if rep.passed else EXIT_CHECK


COMMANDS = {
    "validate": cmd_validate,
    "discrete": cmd_discrete,
    "sde": cmd_sde,
    "master": cmd_master,
    "gencheck": cmd_gencheck,
    "converge": cmd_converge,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qtraj", description="Quantum trajectory simulation and verification.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="experiment configuration (JSON)")
    p.add_argument("--out", help="output directory (default: the config's 'output', else runs/<name>)")
    p.add_argument("--paths", type=int, help="override every path count in the config")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--quiet", action="store_true", help="print nothing on success")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = with_overrides(load_config(args.config), seed=args.seed, paths=args.paths)
        out = Path(args.out or cfg.output or Path("runs") / cfg.name) / args.command
        ctx = Context(cfg, out, args.quiet)
        code = COMMANDS[args.command](ctx)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    io.write_metadata(out, args.command, cfg.source, {"exit_code": code, "seed": cfg.seed})
    return code


if __name__ == "__main__":
    sys.exit(main())

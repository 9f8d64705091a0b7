"""The ``manev-kit`` commands. Each takes a ``RunConfig`` and returns an exit code."""
import concurrent.futures as cf
import logging
import math
import os
import sys
import typing
from collections import OrderedDict

from manevkit import settings
from manevkit.config import RunConfig, emit_config
from manevkit.dynamics import (EvolutionConfig, dynamical_time, evolve, perturb,
                               sample_particles)
from manevkit.exc import (ConfigError, ConstraintError, ConvergenceError, DomainError, GridError,
                          ManevKitError)
from manevkit.ground_state import (GroundState, classify_regime, estimate_kjm,
                                   hamiltonian_lower_bound, solve_ground_state,
                                   structural_violations, trial_family)
from manevkit.output import ensure_directory, write_csv, write_json
from manevkit.phase_space import CutoffSpec, density_from_profile, measure
from manevkit.potentials import decay_constants, interpolation_ratios
from manevkit.self_similar import (b_ladder, blowup_pseudoconformal, blowup_selfsimilar,
                                   blowup_series, blowup_times, choose_r_chi, find_b_star,
                                   rate_fit, solve_self_similar, stationarity_residual,
                                   virial_selfsimilar)
from manevkit.verify import VerifyContext, run_checks

logger = logging.getLogger(__name__)

RATE_TOLERANCE = 0.02


def _metadata(config: RunConfig, **extra) -> dict:
    meta = {
        "command": config.command or "",
        "seed": config.seed,
        "delta": config.model.delta,
        "kappa": config.model.kappa,
        "casimir": repr(config.casimir),
    }
    meta.update(extra)
    return meta


def _output_dir(config: RunConfig) -> str:
    path = ensure_directory(config.output.directory)
    with open(os.path.join(path, "run.ini"), "w") as f:
        f.write(emit_config(config))
    return path


def _ground_state(config: RunConfig) -> GroundState:
    return solve_ground_state(config.params, config.casimir, config.targets, config.options)


def _write_state(path: str, stem: str, state: GroundState, meta: dict) -> None:
    grid = state.density.grid
    write_csv(os.path.join(path, stem + "_radial.csv"), ("r", "rho", "phi", "phi_P", "phi_M"),
              zip(grid.nodes, state.density.values, state.potential.values,
                  state.potential.poisson, state.potential.manev), meta)
    profile = state.profile
    write_csv(os.path.join(path, stem + "_profile.csv"), ("e", "F"),
              zip(profile.energies, profile.values), dict(meta, e_cut=profile.e_cut))


def cmd_ground_state(config: RunConfig) -> int:
    path = _output_dir(config)
    state = _ground_state(config)
    summary = state.summary()
    violations = structural_violations(state)
    summary["structural_violations"] = violations
    if state.coupling > 0:
        summary["H_lower_bound"] = hamiltonian_lower_bound(state.kinetic, state.coupling)
    if config.params.kappa > 0:
        estimate = estimate_kjm(state.j, config.solver.family_size, config.seed, [state])
        summary["K_jM_estimate"] = estimate.value
        targets = state.targets or (state.mass, state.casimir)
        summary["regime"] = classify_regime(targets, config.params, estimate.value,
                                            state.j.exponents[0], state.coupling)
    meta = _metadata(config)
    _write_state(path, "ground_state", state, meta)
    write_json(os.path.join(path, "ground_state.json"), summary)
    for v in violations:
        logger.warning("structural check failed: %s", v)
    if not state.converged:
        return settings.EXIT_NONCONVERGED
    return settings.EXIT_OK


def _ladder_entry(state: GroundState, b: float, chi: CutoffSpec, iterations: int,
                  tolerance: float) -> dict:
    """One rung of the b-ladder; runs in a worker process."""
    try:
        result = solve_self_similar(state, b, chi, iterations, tolerance)
    except ManevKitError as err:
        return {"b": b, "status": "%s: %s" % (type(err).__name__, err), "converged": False}
    out = result.summary()
    out["stationarity_residual"] = stationarity_residual(result)
    virial = virial_selfsimilar(result)
    out["virial_residual"] = virial.residual
    out["virial_bound"] = virial.bound
    out["status"] = "ok" if result.converged else "iteration cap"
    grid = result.density.grid
    out["radial"] = [grid.nodes.tolist(), result.density.values.tolist(),
                     result.potential.values.tolist()]
    return out


def _run_ladder(state: GroundState, ladder: typing.Sequence[float], chi: CutoffSpec,
                config: RunConfig) -> typing.List[dict]:
    workers = min(settings.thread_count(), len(ladder))
    args = (config.solver.relax_iterations, config.solver.relax_tolerance)
    if workers <= 1:
        return [_ladder_entry(state, b, chi, *args) for b in ladder]
    with cf.ProcessPoolExecutor(max_workers=workers) as ex:
        futures = [ex.submit(_ladder_entry, state, b, chi, *args) for b in ladder]
        # submission order keeps the output independent of scheduling
        return [f.result() for f in futures]


def cmd_self_similar(config: RunConfig) -> int:
    if not config.params.pure_manev:
        raise ConfigError("self-similar profiles need delta = 0")
    path = _output_dir(config)
    state = _ground_state(config)
    chi = config.cutoff or choose_r_chi(state)
    if config.solver.b is None:
        b_star, _ = find_b_star(state, chi, max_iterations=config.solver.relax_iterations,
                                tolerance=config.solver.relax_tolerance)
    else:
        b_star = config.solver.b
    ladder = b_ladder(b_star, config.solver.ladder_depth) + [0.0]
    logger.info("self-similar ladder b* = %.6g over %d rungs (r_chi = %.6g)",
                b_star, len(ladder), chi.r_chi)
    entries = _run_ladder(state, ladder, chi, config)

    meta = _metadata(config, b_star=b_star, r_chi=chi.r_chi)
    rows = []
    for k, entry in enumerate(entries):
        radial = entry.pop("radial", None)
        if radial is not None:
            write_csv(os.path.join(path, "self_similar_%02d.csv" % k), ("r", "rho", "phi"),
                      zip(*radial), dict(meta, b=entry["b"]))
        rows.append((entry["b"], entry.get("nu_b", math.nan),
                     entry.get("distance_to_ground", math.nan),
                     entry.get("stationarity_residual", math.nan),
                     entry.get("virial_residual", math.nan), entry["converged"],
                     entry["status"]))
    write_csv(os.path.join(path, "self_similar_ladder.csv"),
              ("b", "nu_b", "distance", "stationarity", "virial", "converged", "status"),
              rows, meta)
    write_json(os.path.join(path, "self_similar.json"),
               {"b_star": b_star, "r_chi": chi.r_chi, "ladder": entries})
    failed = [e["b"] for e in entries if not e["converged"]]
    if not failed:
        return settings.EXIT_OK
    logger.warning("ladder rungs without convergence: %s", ", ".join("%g" % b for b in failed))
    if len(failed) == len(entries):
        return settings.EXIT_NONCONVERGED
    return settings.EXIT_PARTIAL


def cmd_evolve(config: RunConfig) -> int:
    path = _output_dir(config)
    state = _ground_state(config)
    dyn = config.dynamics
    ensemble = sample_particles(state, dyn.particles, dyn.seed)
    t_dyn = dynamical_time(ensemble)
    if dyn.epsilon:
        size = dyn.epsilon
        if dyn.perturbation == "shear":
            # the shear is parametrized by its blow-up time
            size = config.solver.blowup_time
        ensemble = perturb(ensemble, dyn.perturbation, size)
    evolution = EvolutionConfig(dt=dyn.dt, steps=dyn.steps,
                                horizon=None if dyn.horizon is None else dyn.horizon * t_dyn,
                                deposit_size=dyn.deposit_size, bandwidth=dyn.bandwidth,
                                cadence=dyn.cadence, sample_every=dyn.sample_every,
                                params=config.params, extent=4.0 * state.support_radius)
    final, series = evolve(ensemble, evolution, state.j, state, dyn.mode)
    meta = _metadata(config, dt=series.dt, particles=dyn.particles, mode=dyn.mode,
                     distance="surrogate: |dH|/kin + |drho|_1/M1 + curve distance")
    write_csv(os.path.join(path, "evolve.csv"), series.COLUMNS, series.rows(), meta)
    summary = {
        "dt": series.dt,
        "t_dyn": t_dyn,
        "steps": len(series.times),
        "t_end": series.times[-1],
        "H_drift": abs(series.hamiltonian[-1] - series.hamiltonian[0]) / state.kinetic,
        "mass_drift": series.drift("mass"),
        "casimir_drift": series.drift("casimir"),
        "blowup": series.blowup,
        "escaped": series.escaped,
        "distance_initial": series.distance[0],
        "distance_max": max(series.distance),
    }
    write_json(os.path.join(path, "evolve.json"), summary)
    logger.info("evolved %d particles to t=%.6g: H drift %.3e, mass drift %.3e",
                final.count, series.times[-1], summary["H_drift"], summary["mass_drift"])
    return settings.EXIT_OK


def _rate_table(path: str, name: str, snapshots, meta: dict) -> float:
    remaining = [s.remaining for s in snapshots]
    kinetic = [s.kinetic for s in snapshots]
    rate = rate_fit(remaining, kinetic)
    write_csv(os.path.join(path, name), ("T_minus_t", "kinetic", "mass"),
              [(s.remaining, s.kinetic, s.mass) for s in snapshots], dict(meta, rate=rate))
    return rate


def cmd_blowup_family(config: RunConfig) -> int:
    if not config.params.pure_manev:
        raise ConfigError("blow-up families need delta = 0")
    path = _output_dir(config)
    state = _ground_state(config)
    chi = config.cutoff or choose_r_chi(state)
    kwargs = dict(max_iterations=config.solver.relax_iterations,
                  tolerance=config.solver.relax_tolerance)
    if config.solver.b is None:
        _, result = find_b_star(state, chi, **kwargs)
    else:
        result = solve_self_similar(state, config.solver.b, chi, **kwargs)
    T = config.solver.blowup_time
    times = blowup_times(T)
    meta = _metadata(config, T=T, b=result.b)
    self_similar = _rate_table(path, "blowup_selfsimilar.csv",
                               blowup_series(lambda t: blowup_selfsimilar(result, T, t), times),
                               meta)
    pseudo = _rate_table(path, "blowup_pseudoconformal.csv",
                         blowup_series(lambda t: blowup_pseudoconformal(state, T, t), times),
                         meta)
    ok = abs(self_similar + 1.0) <= RATE_TOLERANCE and abs(pseudo + 2.0) <= RATE_TOLERANCE
    write_json(os.path.join(path, "blowup_family.json"),
               {"T": T, "b": result.b, "nu_b": result.nu, "rate_selfsimilar": self_similar,
                "rate_pseudoconformal": pseudo, "within_tolerance": ok})
    logger.info("blow-up rates: self-similar %.4f, pseudo-conformal %.4f", self_similar, pseudo)
    return settings.EXIT_OK if ok else settings.EXIT_PARTIAL


def cmd_verify(config: RunConfig) -> int:
    path = _output_dir(config)
    ctx = VerifyContext(config.casimir, config.options, config.seed,
                        config.solver.relax_iterations)
    statuses = run_checks(ctx, scale=config.solver.kernel_scale)
    write_csv(os.path.join(path, "verify.csv"), ("check", "passed", "value", "threshold", "detail"),
              statuses, _metadata(config, kernel_scale=config.solver.kernel_scale))
    failed = [s.name for s in statuses if not s.passed]
    write_json(os.path.join(path, "verify.json"),
               {"checks": {s.name: s._asdict() for s in statuses}, "failed": failed})
    for name in failed:
        print("FAILED %s" % name, file=sys.stderr)
    return settings.EXIT_PARTIAL if failed else settings.EXIT_OK


def cmd_estimate_kjm(config: RunConfig) -> int:
    path = _output_dir(config)
    j = config.casimir
    p = j.exponents[0]
    family = trial_family(config.solver.family_size, config.seed)
    estimate = estimate_kjm(j, config.solver.family_size, config.seed)
    rows = []
    c_p = c_m = c_decay = c_alpha = 0.0
    for (label, profile), (_, kjm) in zip(family, estimate.candidates):
        r_p, r_m = interpolation_ratios(profile, p)
        density = density_from_profile(profile)
        decay_p, decay_m = decay_constants(density, measure(profile, j).energy_norm,
                                           settings.DECAY_ALPHA)
        c_p, c_m = max(c_p, r_p), max(c_m, r_m)
        c_decay, c_alpha = max(c_decay, decay_p), max(c_alpha, decay_m)
        rows.append((label, kjm, r_p, r_m))
    meta = _metadata(config)
    write_csv(os.path.join(path, "estimate_kjm.csv"), ("label", "K_jM", "ratio_P", "ratio_M"),
              rows, meta)
    write_json(os.path.join(path, "estimate_kjm.json"), {
        "K_jM_estimate": estimate.value,
        "argmin": estimate.label,
        "family_size": config.solver.family_size,
        "C1": c_p,
        "C2": c_m,
        "C_decay": c_decay,
        "C_alpha": c_alpha,
    })
    return settings.EXIT_OK


COMMANDS = OrderedDict([
    ("ground-state", cmd_ground_state),
    ("self-similar", cmd_self_similar),
    ("evolve", cmd_evolve),
    ("blowup-family", cmd_blowup_family),
    ("verify", cmd_verify),
    ("estimate-kjm", cmd_estimate_kjm),
])


def run_command(name: str, config: RunConfig) -> int:
    """Run a command and map library errors onto exit codes."""
    try:
        return COMMANDS[name](config)
    except (ConfigError, ConstraintError, DomainError) as err:
        logger.error("%s", err)
        return settings.EXIT_CONFIG
    except (ConvergenceError, GridError) as err:
        logger.error("%s: %s", type(err).__name__, err)
        return settings.EXIT_NONCONVERGED

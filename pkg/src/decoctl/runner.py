"""Mode dispatch: config dict in, tables and summaries out.

Each ``run_*`` function returns ``{name: (Table, summary)}``; writing to disk
is left to ``execute`` so files are produced in one place, one at a time.
"""

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import decay, dephasing
from .config import build_scenario, initial_density, resolve_seed, state_vector, validate
from .decay import DecayEngine, DecayScenario, conditions_satisfied, desired_mixing, dicke_vector
from .dephasing import DephasingEngine, bell_fidelity_series, second_order_density
from .errors import ConfigError
from .optimize import OptimizationProblem, minimize, power_sweep
from .oracle import RNG_NAME, OracleReport, exact_decay_solve, mc_dephasing_fidelity
from .output import Table, manifest, now, write_csv, write_json

log = logging.getLogger(__name__)


def defaults_for(scenario, cfg):
    """Resolved numerical settings echoed into every manifest."""
    eng = cfg.get("engine", {})
    out = {
        "dt": scenario.time_step(),
        "steps_per_time": decay.STEPS_PER_TIME,
        "max_phase_step": decay.MAX_PHASE_STEP,
        "offdiag_tol": eng.get("offdiag_tol", decay.OFFDIAG_TOL),
        "rate_tol": eng.get("rate_tol", decay.RATE_TOL),
        "stride": cfg.get("output", {}).get("stride", 1),
    }
    if isinstance(scenario, DecayScenario):
        out["memory_time"] = scenario.memory_time()
        out["memory_factor"] = decay.MEMORY_FACTOR
        out["phase_convention"] = scenario.phase_convention
        out["reference_channel"] = scenario.reference_index + 1
    else:
        out["memory_time"] = "full" if scenario.memory == "full" else float(scenario.memory)
        out["validity_loss"] = dephasing.VALIDITY_LOSS
        out["sign_convention"] = scenario.sign_convention
    return out


# ------------------------------------------------------------------ tables


def _rows(count, stride):
    """Every ``stride``-th grid index, always ending on the last one."""
    idx = np.arange(0, count, max(int(stride), 1))
    return idx if idx[-1] == count - 1 else np.append(idx, count - 1)


def decay_table(hist, stride=1, target=None):
    """Columns: t, |A|, A, then c_k, |c_k|, fidelities and J entries."""
    sl = _rows(len(hist.t), stride)
    n = hist.alpha.shape[1]
    tab = Table().add("t", hist.t[sl])
    tab.add("abs_A", np.abs(hist.A[sl])).add("A", hist.A[sl])
    for k in range(n):
        tab.add(f"c{k + 1}", hist.c[sl, k]).add(f"abs_c{k + 1}", np.abs(hist.c[sl, k]))
    ref = hist.reference
    tab.add("F_preserve", np.exp(-2.0 * hist.J[sl, ref, ref].real))
    c = hist.c[sl]
    norm = np.sum(np.abs(c) ** 2, axis=1)
    for l in range(1, n + 1):
        ov = c @ dicke_vector(n, l).conj()
        tab.add(f"F_D{l}", np.abs(hist.A[sl]) ** 2 * np.abs(ov) ** 2 / norm)
    if target is not None:
        cd = np.asarray(target)
        tab.add("steer_residual", np.sum(np.abs(c - cd) ** 2, axis=1))
        tab.add("steer_residual_moduli", np.sum((np.abs(c) - np.abs(cd)) ** 2, axis=1))
    for a in range(n):
        for b in range(n):
            tab.add(f"J{a + 1}{b + 1}", hist.J[sl, a, b])
    return tab


def dephasing_table(res, rho0, stride=1):
    sl = _rows(len(res.t), stride)
    M = res.I.shape[-1]
    tab = Table().add("t", res.t[sl]).add("F_basis", res.fidelity[sl])
    if M == 2:
        for l in range(1, 5):
            tab.add(f"F_bell{l}_lab", bell_fidelity_series(res, l, "lab")[sl])
            tab.add(f"F_bell{l}_drive", bell_fidelity_series(res, l, "drive")[sl])
    idx = np.arange(len(res.t))[sl]
    f_init = [float(np.trace(rho0 @ second_order_density(res, rho0, res.t[i])).real) for i in idx]
    tab.add("F_initial_drive", np.array(f_init))
    for j in range(M):
        for j2 in range(M):
            tab.add(f"JP{j + 1}{j2 + 1}", res.JP[sl, j, j2])
    return tab


# ------------------------------------------------------------------- modes


def _target(cfg, n):
    return state_vector(cfg["steer"]["target"], n, "steer.target")


def run_decay(cfg, scenario, target=None):
    stride = cfg.get("output", {}).get("stride", 1)
    ref = None
    c_d = None
    if target is not None:
        ref, c_d = desired_mixing(target)
    hist = DecayEngine(scenario).history(reference=ref)
    J = hist.J[-1]
    eng = cfg.get("engine", {})
    tol = (eng.get("offdiag_tol", decay.OFFDIAG_TOL), eng.get("rate_tol", decay.RATE_TOL))
    summary = {
        "t_end": hist.t[-1],
        "abs_A_end": abs(hist.A[-1]),
        "abs_c_end": np.abs(hist.c[-1]),
        "J_end": J,
        "conditions_satisfied": conditions_satisfied(J, *tol),
        "reference_channel": hist.reference + 1,
        "flagged_steps": int(hist.flagged.sum()),
    }
    if c_d is not None:
        summary["target_mixing"] = c_d
        summary["steer_residual_end"] = float(np.sum(np.abs(hist.c[-1] - c_d) ** 2))
    return {"": (decay_table(hist, stride, c_d), summary)}


def run_dephasing(cfg, scenario):
    stride = cfg.get("output", {}).get("stride", 1)
    res = DephasingEngine(scenario).run()
    rho0 = initial_density(cfg, scenario.M)
    tab = dephasing_table(res, rho0, stride)
    summary = {"t_end": res.t[-1], "F_basis_end": res.fidelity[-1], "F_initial_drive_end": tab.cols[tab.names.index("F_initial_drive")][-1]}
    if scenario.M == 2:
        for l in range(1, 5):
            summary[f"F_bell{l}_lab_end"] = bell_fidelity_series(res, l, "lab")[-1]
    return {"": (tab, summary)}


def run_oracle(cfg, scenario, seed):
    o = cfg.get("oracle", {})
    reports = []
    if isinstance(scenario, DecayScenario):
        exact = exact_decay_solve(scenario)
        hist = DecayEngine(scenario).history()
        a_eng, a_ex = np.abs(hist.A), np.abs(exact.A)
        rel = np.abs(a_eng - a_ex) / np.maximum(a_ex, 1e-300)
        tol = o.get("tolerance", 0.05)
        k = int(np.argmax(rel))
        reports.append(OracleReport.compare("abs_A", a_eng[k], a_ex[k], tol, "relative", step=scenario.time_step(),
                                            notes=f"worst relative gap over the grid, at t={hist.t[k]:g}"))
        tab = Table().add("t", hist.t).add("abs_A_engine", a_eng).add("abs_A_exact", a_ex).add("rel_diff", rel)
        for j in range(hist.c.shape[1]):
            tab.add(f"abs_c{j + 1}_engine", np.abs(hist.c[:, j])).add(f"abs_c{j + 1}_exact", np.abs(exact.c[:, j]))
        summary = {"max_rel_diff_abs_A": float(rel.max())}
    else:
        count = int(o.get("realizations", 2000))
        mc = mc_dephasing_fidelity(scenario, count, seed, substeps=int(o.get("substeps", 4)))
        res = DephasingEngine(scenario).run()
        tol = o.get("tolerance", 3.0)
        eng_at = np.array([res.fidelity[res.index(t)] for t in mc.t])
        times = o.get("times", [t for t in (1.0, 2.0, 5.0) if t <= scenario.t_end])
        for t in times:
            if t > scenario.t_end:
                raise ConfigError("oracle.times", f"t={t:g} exceeds grid.t_end")
            i = mc.at(float(t))
            reports.append(OracleReport.compare(f"F_basis(t={t:g})", res.fidelity[res.index(mc.t[i])], mc.basis_mean[i],
                                                tol, "standard_errors", mc.basis_se[i], realizations=count,
                                                step=scenario.time_step()))
        tab = Table().add("t", mc.t).add("F_basis_engine", eng_at).add("F_basis_mc", mc.basis_mean).add("F_basis_mc_se", mc.basis_se)
        if scenario.M == 2:
            for l in range(1, 5):
                eng_l = bell_fidelity_series(res, l, "lab")
                tab.add(f"F_bell{l}_engine", np.array([eng_l[res.index(t)] for t in mc.t]))
                tab.add(f"F_bell{l}_mc", mc.bell_mean[l]).add(f"F_bell{l}_mc_se", mc.bell_se[l])
        summary = {"realizations": count, "rng": RNG_NAME}
    summary["reports"] = [r.to_dict() for r in reports]
    summary["all_passed"] = all(r.passed for r in reports)
    return {"": (tab, summary)}


def _problem(cfg, scenario):
    o = cfg["optimize"]
    n = len(scenario.modulation)
    free, bounds = [], []
    lo, hi = o.get("bounds_over_pi", [0.0, 10.0])
    for ch in o["free_theta"]:
        if ch > n:
            raise ConfigError("optimize.free_theta", f"channel {ch} outside 1..{n}")
        free.append((ch - 1, "theta"))
        bounds.append((lo * np.pi, hi * np.pi))
    if o.get("free_tau"):
        if "tau_bounds" not in o:
            raise ConfigError("optimize.tau_bounds", "free_tau needs tau_bounds")
        for ch in o["free_tau"]:
            if ch > n:
                raise ConfigError("optimize.free_tau", f"channel {ch} outside 1..{n}")
            free.append((ch - 1, "tau"))
            bounds.append(tuple(o["tau_bounds"]))
    target = _target(cfg, n) if o["objective"] == "steer" else None
    kw = {k: o[k] for k in ("t_eval", "penalty", "restarts", "maxiter", "fatol", "steer_moduli") if k in o}
    if "weights" in o:
        kw["weights"] = tuple(o["weights"])
    if "bell_pair" in o:
        kw["bell_pair"] = tuple(o["bell_pair"])
    try:
        return OptimizationProblem(scenario, free, bounds, o["objective"], target=target, **kw)
    except ValueError as exc:
        raise ConfigError("optimize", str(exc)) from exc


def run_optimize(cfg, scenario):
    problem = _problem(cfg, scenario)
    result = minimize(problem)
    mod = scenario.modulation.with_taus(result.taus).with_thetas(result.thetas)
    best = replace(scenario, modulation=mod)
    target = problem.target
    if isinstance(best, DecayScenario):
        tables = run_decay(cfg, best, target)
    else:
        tables = run_dephasing(cfg, best)
    tab, summary = tables[""]
    trace = Table().add("evaluation", np.arange(1, len(result.trace) + 1)).add("best_objective", np.array(result.trace))
    summary.update({
        "objective": result.objective,
        "thetas": result.thetas,
        "thetas_over_pi": result.thetas / np.pi,
        "taus": result.taus,
        "residuals": result.residuals,
        "converged": result.converged,
        "restarts": result.restarts,
        "fan_out": "sequential",
    })
    return {"": (tab, summary), "trace": (trace, {})}


def run_sweep(cfg, scenario):
    s = cfg["sweep"]
    kw = {k: s[k] for k in ("restarts", "maxiter") if k in s}
    if "bounds_over_pi" in s:
        kw["bounds"] = tuple(np.pi * np.asarray(s["bounds_over_pi"], float))
    if s.get("t", scenario.t_end) > scenario.t_end:
        raise ConfigError("sweep.t", "evaluation time exceeds grid.t_end")
    rows = power_sweep(scenario, s["powers"], t=s.get("t"), **kw)
    tab = sweep_table(rows)
    summary = {"rows": rows, "local_never_worse": all(r["A_local"] >= r["A_global"] - 1e-9 for r in rows)}
    return {"": (tab, summary)}


def sweep_table(rows):
    tab = Table()
    for key in ("power", "mean_theta_over_tau_before", "mean_theta_over_tau_after", "tau", "t_eval", "A_local", "A_global"):
        tab.add(key, np.array([r[key] for r in rows]))
    for k in range(len(rows[0]["c_local"])):
        tab.add(f"abs_c{k + 2}_local", np.array([r["c_local"][k] for r in rows]))
        tab.add(f"abs_c{k + 2}_global", np.array([r["c_global"][k] for r in rows]))
    tab.add("symmetrized", np.array([float(r["symmetrized"]) for r in rows]))
    return tab


def dispatch(cfg, command="run"):
    """Run ``command`` for a validated config; returns (scenario, seed, tables)."""
    validate(cfg)
    seed = resolve_seed(cfg)
    scenario = build_scenario(cfg)
    mode = cfg["mode"]
    if command == "oracle":
        if mode not in ("oracle", "decay", "dephasing"):
            raise ConfigError("mode", f"'decoctl oracle' takes decay, dephasing or oracle configs, not {mode!r}")
        return scenario, seed, run_oracle(cfg, scenario, seed)
    if command == "optimize":
        if "optimize" not in cfg:
            raise ConfigError("optimize", "'decoctl optimize' needs an optimize block")
        return scenario, seed, run_optimize(cfg, scenario)
    if mode == "decay":
        return scenario, seed, run_decay(cfg, scenario)
    if mode == "steer":
        return scenario, seed, run_decay(cfg, scenario, _target(cfg, scenario.n_channels))
    if mode == "dephasing":
        return scenario, seed, run_dephasing(cfg, scenario)
    if mode == "oracle":
        return scenario, seed, run_oracle(cfg, scenario, seed)
    if mode == "optimize":
        return scenario, seed, run_optimize(cfg, scenario)
    return scenario, seed, run_sweep(cfg, scenario)


def execute(cfg, command="run", out_dir=None):
    """Validate, compute and write outputs. Returns the manifest path."""
    started = now()
    scenario, seed, tables = dispatch(cfg, command)
    out = cfg.get("output", {})
    root = Path(out_dir if out_dir is not None else out.get("dir", "."))
    root.mkdir(parents=True, exist_ok=True)
    mode = cfg["mode"]
    prefix = out.get("prefix", mode if command in ("run", mode) else f"{mode}_{command}")
    mname = f"{prefix}.json"
    files = []
    summary = {}
    for suffix, (tab, summ) in tables.items():
        name = f"{prefix}_{suffix}.csv" if suffix else f"{prefix}.csv"
        write_csv(root / name, tab, cfg, mname)
        files.append({"file": name, "columns": tab.names, "rows": len(tab)})
        if not suffix:
            summary.update(summ)
    man = manifest(cfg, seed, started, defaults_for(scenario, cfg), files, summary, {"command": command})
    if command == "oracle" or mode == "oracle":
        man["rng"] = RNG_NAME
    return write_json(root / mname, man)

"""Derivative-free search over pulse phases (and optionally pulse intervals).

Nelder-Mead from scipy with box bounds, restarted from an unscrambled Halton
sequence over the bounds. Restarts run in index order so results are
deterministic.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize as _nelder_mead
from scipy.stats import qmc

from .decay import (
    DecayEngine,
    DecayScenario,
    _circular_spread,
    conditions_satisfied,
    desired_mixing,
)
from .dephasing import DephasingEngine, DephasingScenario
from .modulation import ModulationSchedule

log = logging.getLogger(__name__)

THETA_MAX = 10 * np.pi
SENTINEL = 1e6
DEFAULT_WEIGHTS = (1.0, 1.0, 0.1)
DEFAULT_LAMBDA = 0.1


@dataclass
class OptimizationProblem:
    """``free`` lists (flat channel index, "theta" | "tau") pairs with matching ``bounds``.

    ``target`` is the desired amplitude vector for steering; ``t_eval``
    defaults to the scenario end time.
    """

    scenario: object
    free: list
    bounds: list
    objective: str = "preserve"
    t_eval: float = None
    weights: tuple = DEFAULT_WEIGHTS
    target: np.ndarray = None
    penalty: float = DEFAULT_LAMBDA
    bell_pair: tuple = (2, 4)
    restarts: int = 8
    maxiter: int = 400
    fatol: float = 1e-8
    steer_moduli: bool = False
    nearest: bool = False

    def __post_init__(self):
        if not self.free:
            raise ValueError("need at least one free parameter")
        if len(self.bounds) != len(self.free):
            raise ValueError("one (low, high) bound per free parameter")
        for (ch, kind), (lo, hi) in zip(self.free, self.bounds):
            if kind not in ("theta", "tau"):
                raise ValueError(f"free parameter kind must be theta or tau, got {kind!r}")
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError(f"bounds for channel {ch} must be finite with low < high")
            if kind == "theta" and (lo < 0 or hi > THETA_MAX + 1e-12):
                raise ValueError("theta bounds must lie within [0, 10 pi]")
            if kind == "tau" and lo <= 0:
                raise ValueError("tau bounds must be positive")
        if self.objective not in ("preserve", "steer", "equalize_bell"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.objective == "steer" and self.target is None:
            raise ValueError("steering needs a target state")
        if self.objective == "equalize_bell" and not isinstance(self.scenario, DephasingScenario):
            raise ValueError("equalize_bell needs a dephasing scenario")
        if self.objective in ("preserve", "steer") and not isinstance(self.scenario, DecayScenario):
            raise ValueError(f"{self.objective} needs a decay scenario")


@dataclass
class OptimizationResult:
    params: np.ndarray
    thetas: np.ndarray
    taus: np.ndarray
    objective: float
    residuals: dict
    trace: list
    converged: bool
    restarts: list = field(default_factory=list)


class Objective:
    """Callable objective; caches the phase-independent engine when only phases vary."""

    def __init__(self, problem):
        self.problem = p = problem
        self.kinds = [k for _, k in p.free]
        self.channels = [c for c, _ in p.free]
        sc = p.scenario
        self.t_eval = sc.t_end if p.t_eval is None else float(p.t_eval)
        self._engine = None
        if "tau" not in self.kinds:
            self._engine = self._build(sc)
        if p.objective == "steer":
            self.ref, self.c_desired = desired_mixing(p.target)

    def _build(self, sc):
        if isinstance(sc, DephasingScenario):
            return DephasingEngine(sc)
        return DecayEngine(sc)

    def apply(self, x):
        """Full (thetas, taus) vectors for parameters ``x``."""
        sc = self.problem.scenario
        thetas = sc.modulation.thetas.copy()
        taus = sc.modulation.taus.copy()
        for ch, kind, val in zip(self.channels, self.kinds, x):
            if kind == "theta":
                thetas[ch] = val
            else:
                taus[ch] = val
        return thetas, taus

    def _engine_for(self, taus):
        if self._engine is not None:
            return self._engine
        sc = self.problem.scenario
        mod = sc.modulation.with_taus(taus)
        return self._build(replace(sc, modulation=mod))

    def breakdown(self, x):
        thetas, taus = self.apply(x)
        p = self.problem
        eng = self._engine_for(taus)
        if p.objective == "preserve":
            J = eng.J_at(thetas, self.t_eval, p.nearest)
            i = eng._grid_index(self.t_eval, p.nearest)
            off = ~np.eye(J.shape[0], dtype=bool)
            offdiag = float(np.sum(np.abs(J[off]) ** 2))
            re = J.diagonal().real
            phase = _circular_spread(J.diagonal().imag + eng.stark_grid[i])
            w1, w2, w3 = p.weights
            value = w1 * offdiag + w2 * (re.max() - re.min()) ** 2 + w3 * phase**2
            return value, {
                "offdiag_norm": offdiag,
                "rate_spread": float(re.max() - re.min()),
                "phase_spread": phase,
                "satisfied": conditions_satisfied(J),
            }
        if p.objective == "steer":
            hist = eng.history(thetas, reference=self.ref)
            i = hist.index(self.t_eval, p.nearest)
            if hist.flagged[i]:
                log.warning("reference amplitude vanished at t=%g for params %s", self.t_eval, x)
                return SENTINEL, {"steering_residual": np.nan, "fidelity_penalty": np.nan}
            c = hist.c[i]
            if p.steer_moduli:
                resid = float(np.sum((np.abs(c) - np.abs(self.c_desired)) ** 2))
            else:
                resid = float(np.sum(np.abs(c - self.c_desired) ** 2))
            loss = 1.0 - np.exp(-2.0 * hist.J[i, self.ref, self.ref].real)
            return resid + p.penalty * loss, {"steering_residual": resid, "fidelity_penalty": float(loss)}
        # equalize_bell: drive-frame |F_a - F_b| at t_eval
        res = eng.run(thetas)
        i = res.index(self.t_eval)
        la, lb = p.bell_pair
        fa = 1.0 - 0.5 * res.J_bell(la)[i].sum().real
        fb = 1.0 - 0.5 * res.J_bell(lb)[i].sum().real
        gap = abs(fa - fb)
        return gap, {"bell_gap": gap, f"F{la}": fa, f"F{lb}": fb}

    def __call__(self, x):
        return self.breakdown(x)[0]


def _starts(bounds, count):
    lo = np.array([b[0] for b in bounds], float)
    hi = np.array([b[1] for b in bounds], float)
    # skip the origin of the unscrambled sequence
    pts = qmc.Halton(d=len(bounds), scramble=False).random(count + 1)[1:]
    return lo + pts * (hi - lo), lo, hi


def _simplex(x0, lo, hi):
    step = 0.1 * (hi - lo)
    pts = [x0]
    for i in range(len(x0)):
        x = x0.copy()
        x[i] = x0[i] + step[i] if x0[i] + step[i] <= hi[i] else x0[i] - step[i]
        pts.append(x)
    return np.array(pts)


def minimize(problem, objective=None, extra_candidates=()):
    """Restarted bounded Nelder-Mead.

    Ties within ``1e-10 + 1e-8 |f|`` are broken by the smallest sum of squared
    phases. ``extra_candidates`` are evaluated and compete on equal terms.
    """
    obj = objective or Objective(problem)
    starts, lo, hi = _starts(problem.bounds, problem.restarts)
    runs = []
    errors = []
    for k, x0 in enumerate(starts):
        trace = []

        def f(x, _trace=trace):
            val = obj(np.clip(x, lo, hi))
            _trace.append(min(val, _trace[-1]) if _trace else val)
            return val

        try:
            res = _nelder_mead(
                f, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                options={"maxiter": problem.maxiter, "fatol": problem.fatol, "xatol": np.inf,
                         "initial_simplex": _simplex(x0, lo, hi)},
            )
        except Exception as exc:  # engine refusal etc.; keep going with other starts
            errors.append(f"start {k}: {type(exc).__name__}: {exc}")
            continue
        x = np.clip(res.x, lo, hi)
        runs.append({"start": k, "x": x, "fun": float(obj(x)), "converged": bool(res.success),
                     "nfev": int(res.nfev), "trace": trace})
    for k, x in enumerate(extra_candidates):
        x = np.clip(np.asarray(x, float), lo, hi)
        runs.append({"start": f"candidate{k}", "x": x, "fun": float(obj(x)), "converged": True, "nfev": 1, "trace": []})
    if not runs:
        raise RuntimeError("all optimizer starts failed:\n" + "\n".join(errors))
    return _select(problem, obj, runs)


def _select(problem, obj, runs, feasible=None):
    pool = [r for r in runs if feasible is None or feasible(r)]
    if not pool:
        pool = runs
    best = min(r["fun"] for r in pool)
    tol = 1e-10 + 1e-8 * abs(best)
    ties = [r for r in pool if r["fun"] <= best + tol]
    win = min(ties, key=lambda r: (float(np.sum(obj.apply(r["x"])[0] ** 2)), str(r["start"])))
    value, parts = obj.breakdown(win["x"])
    thetas, taus = obj.apply(win["x"])
    summary = [{k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in r.items() if k != "trace"} for r in runs]
    return OptimizationResult(win["x"], thetas, taus, value, parts, win["trace"], win["converged"], summary)


def power_sweep(scenario, powers, t=None, bounds=(0.0, THETA_MAX), restarts=8, maxiter=400):
    """Local versus global modulation over a grid of mean theta/tau.

    At power ``p`` the global run uses theta = pi with tau = pi / p (p = 0 means
    no pulses). The local run keeps theta_1 = pi and tau, and searches the
    other phases with the preserve objective. Local candidates whose decay
    exceeds the global run are rejected; the global phases are always a
    candidate, so local is never worse than global.
    """
    t = scenario.t_end if t is None else float(t)
    A = scenario.n_channels
    rows = []
    for p in powers:
        if p == 0:
            mod = ModulationSchedule.unmodulated(scenario.modulation.layout)
            sc = replace(scenario, modulation=mod)
            eng = DecayEngine(sc)
            h = eng.history()
            i = h.index(t, nearest=True)
            row = _sweep_row(p, p, h, i, h, i, symmetrized=conditions_satisfied(h.J[i]))
            rows.append(row)
            continue
        tau = np.pi / p
        mod = ModulationSchedule.pulse_trains(tau, np.full(A, np.pi), layout=scenario.modulation.layout)
        sc = replace(scenario, modulation=mod)
        problem = OptimizationProblem(
            sc, [(a, "theta") for a in range(1, A)], [bounds] * (A - 1), "preserve", t_eval=t,
            restarts=restarts, maxiter=maxiter, nearest=True,
        )
        obj = Objective(problem)
        eng = obj._engine
        h_glob = eng.history()
        i = h_glob.index(t, nearest=True)
        a_glob = abs(h_glob.A[i])
        result = minimize(problem, obj, extra_candidates=[np.full(A - 1, np.pi)])
        cache = {}

        def decay_of(r):
            key = tuple(np.round(r["x"], 14))
            if key not in cache:
                cache[key] = abs(eng.history(obj.apply(r["x"])[0]).A[i])
            return cache[key]

        chosen = _select(problem, obj, [dict(r, x=np.asarray(r["x"]), trace=[]) for r in result.restarts],
                         feasible=lambda r: decay_of(r) >= a_glob)
        h_loc = eng.history(chosen.thetas)
        mean_after = float(np.mean(chosen.thetas) / tau)
        rows.append(_sweep_row(p, mean_after, h_loc, i, h_glob, i, symmetrized=bool(chosen.residuals["satisfied"]),
                               thetas=chosen.thetas, tau=tau))
    return rows


def _sweep_row(p, mean_after, h_loc, i_loc, h_glob, i_glob, symmetrized, thetas=None, tau=np.inf):
    return {
        "power": float(p),
        "mean_theta_over_tau_before": float(p),
        "mean_theta_over_tau_after": float(mean_after),
        "tau": float(tau),
        "t_eval": float(h_loc.t[i_loc]),
        "thetas_local": None if thetas is None else [float(x) for x in thetas],
        "A_local": float(abs(h_loc.A[i_loc])),
        "A_global": float(abs(h_glob.A[i_glob])),
        "c_local": [float(abs(x)) for x in h_loc.c[i_loc][1:]],
        "c_global": [float(abs(x)) for x in h_glob.c[i_glob][1:]],
        "symmetrized": bool(symmetrized),
    }

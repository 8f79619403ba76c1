"""Built-in figure recipes with fixed parameter sets.

Each recipe returns ``{file suffix: Table}`` plus the parameter dict, which
is written as the recipe's manifest and hashed like a config.
"""

import numpy as np

from .baths import CorrelatedGaussianDecayBath, ExponentialDephasingBath, GaussianDipoleBath
from .decay import DecayEngine, DecayScenario, amplitudes_from_mixing, dicke_vector
from .dephasing import DephasingEngine, DephasingScenario, bell_fidelity_series
from .modulation import ModulationSchedule
from .optimize import power_sweep
from .output import Table
from .runner import sweep_table

PI = np.pi

PARAMS = {
    "fig2": {
        "omega1": 0.5, "delta": 0.1, "t_c": 1.0,
        "eta_over_pi": [0.246, 0.0, 0.326, 0.370],
        "c_diag": 1.0, "c_offdiag": 0.5,
        "tau": 1.0, "theta_over_pi": [1.0, 9.0, 8.0, 7.0],
        "t_end": 50.0,
    },
    "fig3": {
        "omega1": 0.5, "delta": 0.1, "t_c": 1.0,
        "eta_over_pi": [0.246, 0.0, 0.326, 0.370],
        "c_diag": 1.0, "c_offdiag": 0.5,
        "t": 50.0,
        "powers": [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        "initial": "equal superposition",
    },
    "fig4": {
        "gamma": 0.05, "r0": 1.0, "omega": 0.5, "tau": 1.0,
        "t_j_identical": [1.0, 1.0, 1.0],
        "t_j_different": [0.75, 0.81, 1.0],
        "theta_over_pi_global": [1.0, 1.0, 1.0],
        "theta_over_pi_local": [1.0, 0.70, 0.58],
        "initial": "D_1",
        "t_end": 25.0,
    },
    "fig5": {
        "gamma": 0.05, "r0": 1.0, "omega": 0.5, "tau": 1.0,
        "t_j": [0.75, 0.81, 1.0],
        "c0": [1.0, 1.57, 1.64], "A0": 1.0,
        "theta_over_pi_global": [1.0, 1.0, 1.0],
        "theta_over_pi_local": [0.80, 0.56, 0.47],
        "t_end": 25.0,
    },
    "fig6": {
        "gamma": 0.01, "t_j": [1.0, 1.0], "r0": 1.0,
        "tau": [1.0, 1.0], "theta1_over_pi": 0.9,
        "theta2_over_pi": {"global": 0.9, "local": 0.8},
        "t_end": 25.0,
        "rate_grid_over_pi": [0.0, 2.0, 21],
    },
}


def _dipole_bath(p):
    c = np.full((4, 4), p["c_offdiag"])
    np.fill_diagonal(c, p["c_diag"])
    return GaussianDipoleBath(c, PI * np.asarray(p["eta_over_pi"]), p["t_c"])


def _ladder(p):
    return p["omega1"] + p["delta"] * np.arange(4)


def fig2(p):
    bath = _dipole_bath(p)
    tabs = {}
    for name, th in (("", p["theta_over_pi"]), ("global", [1.0] * 4)):
        mod = ModulationSchedule.pulse_trains(p["tau"], PI * np.asarray(th), layout=(4,))
        sc = DecayScenario(bath, mod, _ladder(p), np.full(4, 0.5), p["t_end"])
        eng = DecayEngine(sc)
        J = eng.J_series()
        tab = Table().add("t", eng.t)
        for a in range(4):
            for b in range(4):
                tab.add(f"J{a + 1}{b + 1}", J[:, a, b])
        tabs[name] = tab
    return tabs


def fig3(p):
    bath = _dipole_bath(p)
    sc = DecayScenario(bath, ModulationSchedule.unmodulated((4,)), _ladder(p), np.full(4, 0.5), p["t"])
    return {"": sweep_table(power_sweep(sc, p["powers"], t=p["t"]))}


def _three_qubit(p, tj, theta_over_pi, a0, dt=None):
    bath = CorrelatedGaussianDecayBath(p["gamma"], tj, p["r0"])
    mod = ModulationSchedule.pulse_trains(p["tau"], PI * np.asarray(theta_over_pi))
    sc = DecayScenario(bath, mod, np.full(3, p["omega"]), a0, p["t_end"], dt=dt)
    return DecayEngine(sc).history()


def _add_decay(tab, hist, tag):
    tab.add(f"abs_A_{tag}", np.abs(hist.A))
    for k in (1, 2):
        tab.add(f"abs_c{k + 1}_{tag}", np.abs(hist.c[:, k]))


def fig4(p):
    a0 = dicke_vector(3, 1)
    # one grid for all four variants
    dt = min(min(p["t_j_identical"]), min(p["t_j_different"]), p["tau"]) / 20
    tab = None
    for coupling in ("identical", "different"):
        for kind in ("global", "local"):
            h = _three_qubit(p, p[f"t_j_{coupling}"], p[f"theta_over_pi_{kind}"], a0, dt)
            if tab is None:
                tab = Table().add("t", h.t)
            _add_decay(tab, h, f"{coupling}_{kind}")
    return {"": tab}


def fig5(p):
    a0 = amplitudes_from_mixing(np.asarray(p["c0"], complex), p["A0"])
    tab = None
    for kind in ("global", "local"):
        h = _three_qubit(p, p["t_j"], p[f"theta_over_pi_{kind}"], a0)
        if tab is None:
            tab = Table().add("t", h.t)
        _add_decay(tab, h, kind)
        tab.add(f"steer_residual_{kind}", np.sum(np.abs(h.c - 1.0) ** 2, axis=1))
    return {"": tab}


def fig6(p):
    bath = ExponentialDephasingBath(p["gamma"], p["t_j"], separation=p["r0"])
    th1 = PI * p["theta1_over_pi"]
    tab = None
    for kind, th2 in p["theta2_over_pi"].items():
        mod = ModulationSchedule.pulse_trains(p["tau"], [th1, PI * th2])
        res = DephasingEngine(DephasingScenario(bath, mod, p["t_end"])).run()
        if tab is None:
            tab = Table().add("t", res.t)
        tab.add(f"F_singlet_{kind}", bell_fidelity_series(res, 2))
        tab.add(f"F_triplet_{kind}", bell_fidelity_series(res, 4))
    # panels b, c: mean dephasing rate over [0, t_end] on a phase grid
    lo, hi, count = p["rate_grid_over_pi"]
    grid = np.linspace(lo, hi, int(count))
    eng = DephasingEngine(DephasingScenario(bath, ModulationSchedule.pulse_trains(p["tau"], [th1, th1]), p["t_end"]))
    rows = []
    for a in grid:
        for b in grid:
            res = eng.run(PI * np.array([a, b]))
            rows.append((a, b, (1 - bell_fidelity_series(res, 2, "drive")[-1]) / p["t_end"],
                         (1 - bell_fidelity_series(res, 4, "drive")[-1]) / p["t_end"]))
    rows = np.array(rows)
    rates = Table().add("theta1_over_pi", rows[:, 0]).add("theta2_over_pi", rows[:, 1])
    rates.add("rate_singlet", rows[:, 2]).add("rate_triplet", rows[:, 3])
    return {"": tab, "rates": rates}


RECIPES = {"fig2": fig2, "fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6}


def figure(name):
    """(parameters, {suffix: Table}) for a built-in figure."""
    if name not in RECIPES:
        raise KeyError(f"unknown figure {name!r}; choose from {', '.join(RECIPES)}")
    params = PARAMS[name]
    return params, RECIPES[name](params)

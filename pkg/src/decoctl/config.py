"""Scenario configuration: parsing, schema validation and scenario construction.

A config is one JSON or TOML file. Blocks map onto the engine objects:
``bath``, ``systems``, ``modulation``, ``initial``, ``grid``, ``engine``,
``oracle``, ``optimize``, ``steer``, ``sweep`` and ``output``. Channels are
numbered from one in every user-facing field.
"""

import hashlib
import json
import os
from pathlib import Path

import jsonschema
import numpy as np

from .baths import (
    CorrelatedGaussianDecayBath,
    ExponentialDephasingBath,
    GaussianDipoleBath,
    TabulatedBath,
)
from .decay import DecayScenario, amplitudes_from_mixing, dicke_vector
from .dephasing import BELL_STATES, DephasingScenario
from .errors import ConfigError
from .modulation import (
    ChannelModulation,
    DrivingEnvelope,
    ModulationSchedule,
    PhasePulseTrain,
    StarkShiftSchedule,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

MODES = ("decay", "dephasing", "optimize", "steer", "sweep", "oracle")
DECAY_MODELS = ("gaussian_dipole", "correlated_gaussian", "tabulated")
DEPHASING_MODELS = ("exponential_dephasing", "tabulated")

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}
_INT1 = {"type": "integer", "minimum": 1}


def _list(item, min_items=1):
    return {"type": "array", "items": item, "minItems": min_items}


def _one_or_many(item):
    return {"anyOf": [item, _list(item)]}


_MATRIX = _list(_list(_NUM))
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_POSITIONS = _list({"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3})


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_STATE = {
    **_obj({
        "state": {"type": "string", "pattern": r"^(dicke|D_[1-9][0-9]*|bell_[1-4]|basis_[1-9][0-9]*)$"},
        "amplitudes": _obj({"re": _list(_NUM), "im": _list(_NUM)}, ["re"]),
        "mixing": _obj({"c": _list(_NUM), "c_im": _list(_NUM), "A": _POS, "reference": _INT1}, ["c"]),
    }),
    "minProperties": 1,
    "maxProperties": 1,
}

_BATH_MODELS = {
    "gaussian_dipole": _obj({
        "model": {"const": "gaussian_dipole"},
        "t_c": _POS,
        "dipole_angles": _list(_NUM),
        "dipole_angles_over_pi": _list(_NUM),
        "coupling": _MATRIX,
        "c_diag": _NUM,
        "c_offdiag": _NUM,
    }, ["model", "t_c"]),
    "correlated_gaussian": _obj({
        "model": {"const": "correlated_gaussian"},
        "gamma": _NONNEG,
        "t_j": _one_or_many(_POS),
        "r0": _POS,
        "positions": _POSITIONS,
    }, ["model", "gamma", "t_j"]),
    "exponential_dephasing": _obj({
        "model": {"const": "exponential_dephasing"},
        "gamma": _NONNEG,
        "t_j": _one_or_many(_POS),
        "r0": _POS,
        "positions": _POSITIONS,
        "cross_correlated": {"type": "boolean"},
    }, ["model", "gamma", "t_j"]),
    "tabulated": _obj({
        "model": {"const": "tabulated"},
        "t": _list(_NUM, 2),
        "re": _list(_MATRIX),
        "im": _list(_MATRIX),
    }, ["model", "t", "re"]),
}

SCHEMA = _obj({
    "mode": {"enum": list(MODES)},
    "bath": {
        "type": "object",
        "properties": {"model": {"enum": list(_BATH_MODELS)}},
        "required": ["model"],
        "allOf": [
            {"if": {"properties": {"model": {"const": k}}}, "then": v} for k, v in _BATH_MODELS.items()
        ],
    },
    "systems": _obj({
        "M": _INT1,
        "levels": _one_or_many(_INT1),
        "energies": _list(_NUM),
        "omega0": _NUM,
        "delta": _NUM,
    }),
    "modulation": _obj({
        "tau": _one_or_many(_POS),
        "theta": _one_or_many(_NUM),
        "theta_over_pi": _one_or_many(_NUM),
        "stark": _one_or_many(_NUM),
        "drive": _one_or_many(_NUM),
    }),
    "initial": _STATE,
    "grid": _obj({
        "t_end": _POS,
        "dt": _POS,
        "memory": {"anyOf": [{"const": "full"}, _POS]},
    }, ["t_end"]),
    "engine": _obj({
        "phase_convention": {"enum": ["printed", "rotating"]},
        "sign_convention": {"enum": ["prose", "formula"]},
        "offdiag_tol": _POS,
        "rate_tol": _POS,
    }),
    "oracle": _obj({
        "realizations": {"type": "integer", "minimum": 2},
        "seed": {"type": "integer", "minimum": 0},
        "times": _list(_POS),
        "substeps": _INT1,
        "tolerance": _POS,
    }),
    "optimize": _obj({
        "objective": {"enum": ["preserve", "steer", "equalize_bell"]},
        "free_theta": _list(_INT1),
        "free_tau": _list(_INT1, 0),
        "bounds_over_pi": _PAIR,
        "tau_bounds": _PAIR,
        "t_eval": _POS,
        "weights": {"type": "array", "items": _NONNEG, "minItems": 3, "maxItems": 3},
        "penalty": _NONNEG,
        "bell_pair": {"type": "array", "items": {"type": "integer", "minimum": 1, "maximum": 4},
                      "minItems": 2, "maxItems": 2},
        "restarts": _INT1,
        "maxiter": _INT1,
        "fatol": _POS,
        "steer_moduli": {"type": "boolean"},
    }, ["objective", "free_theta"]),
    "steer": _obj({"target": _STATE}, ["target"]),
    "sweep": _obj({
        "powers": _list(_NONNEG),
        "t": _POS,
        "bounds_over_pi": _PAIR,
        "restarts": _INT1,
        "maxiter": _INT1,
    }, ["powers"]),
    "output": _obj({
        "dir": {"type": "string"},
        "prefix": {"type": "string", "pattern": r"^[A-Za-z0-9_.-]+$"},
        "stride": _INT1,
    }),
}, ["mode", "bath", "grid"])

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def _dotted(path):
    return ".".join(str(p) for p in path) or "<root>"


def load_config(path):
    """Read a JSON or TOML file into a plain dict (no validation)."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {p}: {exc.strerror or exc}") from exc
    try:
        if p.suffix.lower() == ".toml":
            return tomllib.loads(text)
        if p.suffix.lower() == ".json":
            return json.loads(text)
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            return tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError("<file>", f"cannot parse {p.name}: {exc}") from exc


def validate(cfg):
    """Schema check plus cross-block rules. Raises ConfigError naming the key."""
    errors = sorted(_VALIDATOR.iter_errors(cfg), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = max(errors, key=lambda e: len(e.absolute_path))
        key = _dotted(err.absolute_path)
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            key = _dotted(list(err.absolute_path) + extra[:1])
            raise ConfigError(key, "unknown key")
        raise ConfigError(key, err.message)
    mode = cfg["mode"]
    model = cfg["bath"]["model"]
    mod = cfg.get("modulation", {})
    if "theta" in mod and "theta_over_pi" in mod:
        raise ConfigError("modulation.theta", "give theta or theta_over_pi, not both")
    if "drive" in mod and ("theta" in mod or "theta_over_pi" in mod or "tau" in mod):
        raise ConfigError("modulation.drive", "a drive envelope excludes pulse trains")
    if ("theta" in mod or "theta_over_pi" in mod) != ("tau" in mod):
        raise ConfigError("modulation.tau", "pulse trains need both tau and theta")
    kind = scenario_kind(cfg)
    if kind == "decay":
        if model not in DECAY_MODELS:
            raise ConfigError("bath.model", f"{model!r} is not a decay bath")
        sysb = cfg.get("systems", {})
        if "energies" not in sysb and "omega0" not in sysb:
            raise ConfigError("systems.energies", "decay runs need energies or omega0")
        if "drive" in mod:
            raise ConfigError("modulation.drive", "drive envelopes apply to dephasing runs")
    elif model not in DEPHASING_MODELS:
        raise ConfigError("bath.model", f"{model!r} is not a dephasing bath")
    if mode == "steer" and "steer" not in cfg:
        raise ConfigError("steer", "steer mode needs a steer block")
    if mode == "optimize":
        if "optimize" not in cfg:
            raise ConfigError("optimize", "optimize mode needs an optimize block")
        if cfg["optimize"]["objective"] == "steer" and "steer" not in cfg:
            raise ConfigError("steer.target", "the steer objective needs a target")
    if mode == "sweep" and "sweep" not in cfg:
        raise ConfigError("sweep", "sweep mode needs a sweep block")
    return cfg


def scenario_kind(cfg):
    """'decay' or 'dephasing'. Oracle and optimize modes follow the bath."""
    mode = cfg["mode"]
    if mode == "dephasing":
        return "dephasing"
    if mode in ("decay", "steer", "sweep"):
        return "decay"
    if mode == "optimize" and cfg.get("optimize", {}).get("objective") == "equalize_bell":
        return "dephasing"
    return "dephasing" if cfg["bath"]["model"] == "exponential_dephasing" else "decay"


def canonical_json(cfg):
    return json.dumps(cfg, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(cfg):
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()


def resolve_seed(cfg, environ=None):
    """DECOCTL_SEED overrides ``oracle.seed``; the default seed is 0."""
    env = os.environ if environ is None else environ
    raw = env.get("DECOCTL_SEED")
    if raw is not None and raw != "":
        try:
            seed = int(raw)
        except ValueError:
            raise ConfigError("DECOCTL_SEED", f"not an integer: {raw!r}") from None
        if seed < 0:
            raise ConfigError("DECOCTL_SEED", "must be non-negative")
        return seed
    return int(cfg.get("oracle", {}).get("seed", 0))


# ---------------------------------------------------------------- builders


def _per_channel(value, n, key):
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        return np.full(n, float(arr[0]))
    if arr.size != n:
        raise ConfigError(key, f"expected 1 or {n} values, got {arr.size}")
    return arr


def _checked(key, build):
    try:
        return build()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(key, str(exc)) from exc


def _system_count(cfg):
    b = cfg["bath"]
    if b["model"] in ("correlated_gaussian", "exponential_dephasing"):
        tj = b["t_j"]
        if isinstance(tj, list):
            return len(tj)
        return int(cfg.get("systems", {}).get("M", 1))
    return None


def build_bath(cfg):
    b = cfg["bath"]
    model = b["model"]
    if model == "gaussian_dipole":
        if "dipole_angles" in b and "dipole_angles_over_pi" in b:
            raise ConfigError("bath.dipole_angles", "give dipole_angles or dipole_angles_over_pi, not both")
        if "dipole_angles_over_pi" in b:
            eta = np.pi * np.asarray(b["dipole_angles_over_pi"], float)
        elif "dipole_angles" in b:
            eta = np.asarray(b["dipole_angles"], float)
        else:
            levels = cfg.get("systems", {}).get("levels", 1)
            eta = np.zeros(levels if isinstance(levels, int) else sum(levels))
        N = eta.size
        if "coupling" in b:
            if "c_diag" in b or "c_offdiag" in b:
                raise ConfigError("bath.coupling", "give coupling or c_diag/c_offdiag, not both")
            c = np.asarray(b["coupling"], float)
        else:
            c = np.full((N, N), float(b.get("c_offdiag", 0.0)))
            np.fill_diagonal(c, float(b.get("c_diag", 1.0)))
        return _checked("bath.coupling", lambda: GaussianDipoleBath(c, eta, float(b["t_c"])))
    if model in ("correlated_gaussian", "exponential_dephasing"):
        M = _system_count(cfg)
        tj = _per_channel(b["t_j"], M, "bath.t_j")
        pos = None if "positions" not in b else np.asarray(b["positions"], float)
        r0 = float(b.get("r0", 1.0))
        if model == "correlated_gaussian":
            return _checked("bath.positions", lambda: CorrelatedGaussianDecayBath(float(b["gamma"]), tj, r0, pos))
        cross = bool(b.get("cross_correlated", True))
        return _checked("bath.positions", lambda: ExponentialDephasingBath(float(b["gamma"]), tj, pos, r0, cross))
    # tabulated: re/im indexed [time][a][b]
    re = np.asarray(b["re"], float)
    im = np.zeros_like(re) if "im" not in b else np.asarray(b["im"], float)
    if im.shape != re.shape:
        raise ConfigError("bath.im", "im must match the shape of re")
    layout = None
    if cfg["mode"] != "dephasing" and "levels" in cfg.get("systems", {}):
        lv = cfg["systems"]["levels"]
        layout = tuple(lv) if isinstance(lv, list) else (lv,) * int(cfg["systems"].get("M", 1))
    return _checked("bath.re", lambda: TabulatedBath(np.asarray(b["t"], float), re + 1j * im, layout))


def build_energies(cfg, n):
    s = cfg.get("systems", {})
    if "energies" in s:
        w = np.asarray(s["energies"], float)
        if w.size != n:
            raise ConfigError("systems.energies", f"expected {n} energies, got {w.size}")
        return w
    # omega0 + (n - 1) delta within each system
    delta = float(s.get("delta", 0.0))
    return np.concatenate([s["omega0"] + delta * np.arange(k) for k in _layout(cfg, n)])


def _layout(cfg, n):
    s = cfg.get("systems", {})
    lv = s.get("levels")
    if lv is None:
        if cfg["bath"]["model"] == "gaussian_dipole":
            return (n,)
        return (1,) * n
    layout = tuple(lv) if isinstance(lv, list) else (lv,) * int(s.get("M", n // lv if lv else 1))
    if sum(layout) != n:
        raise ConfigError("systems.levels", f"levels sum to {sum(layout)}, bath has {n} channels")
    return layout


def build_modulation(cfg, n, layout):
    m = cfg.get("modulation", {})
    stark = None
    if "stark" in m:
        rates = _per_channel(m["stark"], n, "modulation.stark")
        stark = [StarkShiftSchedule.constant(r) for r in rates]
    if "drive" in m:
        amps = _per_channel(m["drive"], n, "modulation.drive")
        return ModulationSchedule([ChannelModulation(drive=DrivingEnvelope.constant(a)) for a in amps], layout)
    if "tau" not in m:
        starks = stark or [None] * n
        return ModulationSchedule([ChannelModulation(stark=s) for s in starks], layout)
    taus = _per_channel(m["tau"], n, "modulation.tau")
    if "theta_over_pi" in m:
        thetas = np.pi * _per_channel(m["theta_over_pi"], n, "modulation.theta_over_pi")
    else:
        thetas = _per_channel(m["theta"], n, "modulation.theta")
    starks = stark or [None] * n
    chans = [ChannelModulation(pulse=PhasePulseTrain(float(t), float(th)), stark=s)
             for t, th, s in zip(taus, thetas, starks)]
    return ModulationSchedule(chans, layout)


def state_vector(spec, n, key, kind="decay"):
    """Amplitude vector from a state block (named, explicit or mixing form)."""
    if "amplitudes" in spec:
        size = n if kind == "decay" else 2**n
        re = np.asarray(spec["amplitudes"]["re"], float)
        im = np.asarray(spec["amplitudes"].get("im", np.zeros_like(re)), float)
        if re.size != size or im.size != size:
            raise ConfigError(f"{key}.amplitudes", f"expected {size} amplitudes")
        return re + 1j * im
    if "mixing" in spec:
        if kind != "decay":
            raise ConfigError(f"{key}.mixing", "mixing form applies to decay runs")
        mx = spec["mixing"]
        c = np.asarray(mx["c"], float) + 1j * np.asarray(mx.get("c_im", np.zeros(len(mx["c"]))), float)
        if c.size != n:
            raise ConfigError(f"{key}.mixing.c", f"expected {n} mixing parameters")
        ref = int(mx.get("reference", 1)) - 1
        if not 0 <= ref < n or c[ref] == 0:
            raise ConfigError(f"{key}.mixing.reference", "reference must index a nonzero mixing parameter")
        return amplitudes_from_mixing(c, float(mx.get("A", 1.0)), ref)
    name = spec["state"]
    if name == "dicke":
        name = "D_1"
    head, idx = name.split("_")
    idx = int(idx)
    if head == "D":
        if kind != "decay" or idx > n:
            raise ConfigError(f"{key}.state", f"D_l needs a decay run with l <= {n}")
        return dicke_vector(n, idx)
    if head == "bell":
        if kind != "dephasing" or n != 2:
            raise ConfigError(f"{key}.state", "Bell states need a two-qubit dephasing run")
        return BELL_STATES[idx - 1].astype(complex)
    if kind != "dephasing" or idx > 2**n:
        raise ConfigError(f"{key}.state", f"basis_l needs a dephasing run with l <= {2**n}")
    v = np.zeros(2**n, complex)
    v[idx - 1] = 1.0
    return v


def build_scenario(cfg):
    """DecayScenario or DephasingScenario for a validated config."""
    bath = build_bath(cfg)
    n = bath.n_channels
    kind = scenario_kind(cfg)
    grid = cfg["grid"]
    eng = cfg.get("engine", {})
    if kind == "dephasing":
        mod = build_modulation(cfg, n, (1,) * n)
        return _checked("grid", lambda: DephasingScenario(
            bath, mod, float(grid["t_end"]), grid.get("dt"), grid.get("memory", "full"),
            eng.get("sign_convention", "prose"),
        ))
    layout = _layout(cfg, n)
    if isinstance(bath, TabulatedBath) and bath.layout != layout:
        bath = TabulatedBath(bath.grid, bath.values, layout)
    mod = build_modulation(cfg, n, layout)
    w = build_energies(cfg, n)
    a0 = state_vector(cfg.get("initial", {"state": "dicke"}), n, "initial")
    ref = 0
    if "mixing" in cfg.get("initial", {}):
        ref = int(cfg["initial"]["mixing"].get("reference", 1)) - 1
    return _checked("initial", lambda: DecayScenario(
        bath, mod, w, a0, float(grid["t_end"]), grid.get("dt"), grid.get("memory"),
        eng.get("phase_convention", "printed"), ref,
    ))


def initial_density(cfg, M):
    """Density matrix for a dephasing run (default: basis_1)."""
    psi = state_vector(cfg.get("initial", {"state": "basis_1"}), M, "initial", kind="dephasing")
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise ConfigError("initial.amplitudes", "state has zero norm")
    psi = psi / norm
    return np.outer(psi, psi.conj())

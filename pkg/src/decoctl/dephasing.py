"""Proper dephasing of M qubits in the up/down (dressed) product basis.

Qubit states: index 0 is up (bit 0), index 1 is down (bit 1); qubit 1 is the
most significant bit of the basis index. Under driving, the noise couples
single-flip pairs through

    X_j(t) = exp(i s phi_j) S+_j + exp(-i s phi_j) S-_j,    S+ = |up><down|,

with ``s = +1`` in the default ("prose") sign convention and ``s = -1`` in the
"formula" convention. Every second-order quantity is a combination of

    I^{sig sig'}_{jj'}(t) = int_0^t dt' int_0^t' dt'' Phi_jj'(t'-t'')
                            exp(i sig phi_j(t')) exp(i sig' phi_j'(t'')).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NumericalRefusal
from .kernels import MemoryConvolution

STEPS_PER_TIME = 20
MAX_PHASE_STEP = 0.3
VALIDITY_LOSS = 0.2
SIGNS = (1, -1)

# Bell states in the up/down basis, order (uu, ud, du, dd)
_S2 = 1.0 / np.sqrt(2.0)
BELL_STATES = np.array(
    [
        [_S2, 0.0, 0.0, -_S2],
        [0.0, -_S2, _S2, 0.0],
        [_S2, 0.0, 0.0, _S2],
        [0.0, _S2, _S2, 0.0],
    ],
    dtype=complex,
)


def bits(l, M):
    """Bits b_1..b_M of the one-based basis index ``l`` (b_1 most significant)."""
    if not 1 <= l <= 2**M:
        raise IndexError(f"basis index {l} outside 1..{2**M}")
    k = l - 1
    return tuple((k >> (M - 1 - j)) & 1 for j in range(M))


def binary_distance(l, l2, M=None):
    if M is None:
        M = max(int(l - 1).bit_length(), int(l2 - 1).bit_length(), 1)
    return sum(x != y for x, y in zip(bits(l, M), bits(l2, M)))


def flip_target(l, l2, M, convention="prose"):
    """Qubit j (one-based) flipped going from ``l2`` to ``l``, and its sign.

    Prose convention: +1 for a flip 1 -> 0 (down to up), i.e.
    ``s = b^{l2}_j - b^l_j``. The formula convention returns the opposite.
    """
    b, b2 = bits(l, M), bits(l2, M)
    diff = [j for j in range(M) if b[j] != b2[j]]
    if len(diff) != 1:
        raise ValueError(f"basis states {l} and {l2} differ in {len(diff)} qubits, not one")
    j = diff[0]
    s = b2[j] - b[j]
    return j + 1, s if convention == "prose" else -s


@dataclass(frozen=True, eq=False)
class DephasingScenario:
    bath: object
    modulation: object
    t_end: float
    dt: float = None
    memory: object = "full"
    sign_convention: str = "prose"

    def __post_init__(self):
        M = self.bath.n_channels
        if len(self.modulation) != M:
            raise ValueError(f"modulation has {len(self.modulation)} qubits, bath has {M}")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.sign_convention not in ("prose", "formula"):
            raise ValueError("sign_convention must be 'prose' or 'formula'")

    @property
    def M(self):
        return self.bath.n_channels

    def time_step(self):
        taus = self.modulation.taus
        finite = taus[np.isfinite(taus)]
        t_c = self.bath.shortest_correlation_time
        scale = min(finite.min(), t_c) if finite.size else t_c
        dt = self.dt if self.dt is not None else scale / STEPS_PER_TIME
        if dt > scale / STEPS_PER_TIME * (1 + 1e-9):
            raise ValueError(f"dt={dt:g} exceeds min(tau, t_c)/{STEPS_PER_TIME}")
        if finite.size:
            tau = finite.min()
            dt = tau / int(np.ceil(tau / dt - 1e-9))
        return float(dt)


@dataclass
class DephasingResult:
    """``I[i, s, s2, j, j2]`` holds I^{sig sig'}_{jj'}(t_i) with sig = SIGNS[s]."""

    t: np.ndarray
    I: np.ndarray
    phi: np.ndarray
    sign_convention: str

    def index(self, t):
        dt = self.t[1] - self.t[0]
        i = int(round(t / dt))
        if not 0 <= i < len(self.t) or abs(self.t[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t:g} is not on the grid (step {dt:g}, end {self.t[-1]:g})")
        return i

    @property
    def JP(self):
        """Basis-state kernel conj(eps_j(t')) eps_j'(t'')."""
        return self.I[:, 1, 0]

    def J_bell(self, l):
        """Signed Bell kernels: diagonal eps* eps for every l; cross terms
        eps* eps* (l=3), eps eps* (l=4), and their negatives for l=1, 2."""
        if l not in (1, 2, 3, 4):
            raise ValueError("Bell index must be 1..4")
        J = self.I[:, 1, 0].copy()
        if l in (1, 3):
            cross = self.I[:, 1, 1]
        else:
            cross = self.I[:, 0, 1]
        off = ~np.eye(J.shape[-1], dtype=bool)
        sign = -1.0 if l in (1, 2) else 1.0
        J[:, off] = sign * cross[:, off]
        return J

    @property
    def fidelity(self):
        return 1.0 - 0.5 * np.einsum("ijj->i", self.JP).real


class DephasingEngine:
    def __init__(self, scenario, backend=None):
        self.scenario = sc = scenario
        self.dt = dt = sc.time_step()
        self.n = n = int(np.ceil(sc.t_end / dt - 1e-9))
        h = dt / 2
        M = sc.M
        xq = np.arange(4 * n + 1) * (h / 2)
        chans = sc.modulation.channels
        # smooth part of each drive phase (pulse labels are handled separately)
        static_q = np.array([c.drive.phase(xq) if c.drive is not None else np.zeros_like(xq) for c in chans])
        rate = np.abs(np.diff(static_q, axis=1)).max(initial=0.0) / (h / 2)
        if dt * rate > MAX_PHASE_STEP:
            raise NumericalRefusal(f"grid too coarse for the drive: dt*max|dphi/dt| = {dt * rate:.3g} > {MAX_PHASE_STEP}")
        labels_q = np.array([c.labels(xq) for c in chans], dtype=np.int64)
        theta = sc.modulation.thetas
        # extended channels (j, sig) in order j*2 + s, eps = exp(i sig phi_j)
        sig = np.array(SIGNS, dtype=float)
        g_q = np.exp(1j * sig[None, :, None] * static_q[:, None, :]).reshape(2 * M, -1)
        lab_ext = np.repeat(labels_q, 2, axis=0)
        self.theta_ext = (theta[:, None] * sig[None, :]).ravel()
        t_mem = np.inf if sc.memory == "full" else float(sc.memory)
        window = 2 * n if not np.isfinite(t_mem) else min(2 * n, int(np.ceil(t_mem / h)))
        resp = sc.bath.response(np.arange(2 * window + 1) * (h / 2))
        resp = np.repeat(np.repeat(resp, 2, axis=0), 2, axis=1)
        self.conv = MemoryConvolution(resp, g_q, lab_ext, h, window, backend=backend)
        stat_s = g_q[:, ::2]
        mid = (np.arange(n) + 0.5) * dt
        self.left_labels = np.repeat(np.array([c.labels(mid) for c in chans], dtype=np.int64), 2, axis=0).T
        self.node_conj = np.conj(stat_s).T  # (2n+1, 2M)
        self.phi = np.array([c.drive_phase(xq[::4]) for c in chans]).T  # (n+1, M)
        self.t = np.arange(n + 1) * dt

    def run(self, thetas=None):
        """Kernel integrals for the scenario phases or a replacement set ``thetas``."""
        sc = self.scenario
        M = sc.M
        theta_ext = self.theta_ext
        if thetas is not None:
            theta_ext = (np.asarray(thetas, dtype=float)[:, None] * np.array(SIGNS, dtype=float)[None, :]).ravel()
        U = self.conv.inner(theta_ext)
        base = self.node_conj[:, :, None] * U
        left = np.exp(-1j * self.left_labels * theta_ext[None, :])[:, :, None]
        inc = self.dt / 6 * left * (base[0:-1:2] + 4 * base[1::2] + base[2::2])
        Jext = np.zeros((self.n + 1, 2 * M, 2 * M), dtype=complex)
        np.cumsum(inc, axis=0, out=Jext[1:])
        # Jext[(j, s), (j', s')] has exp(-i sig_s phi_j) on the left
        Jext = Jext.reshape(self.n + 1, M, 2, M, 2)
        I = np.transpose(Jext[:, :, ::-1, :, :], (0, 2, 4, 1, 3))
        phi = self.phi
        if thetas is not None:
            mod = sc.modulation.with_thetas(thetas)
            phi = np.array([c.drive_phase(self.t) for c in mod.channels]).T
        return DephasingResult(self.t.copy(), np.ascontiguousarray(I), phi.copy(), sc.sign_convention)


def compute_dephasing(scenario, backend=None):
    return DephasingEngine(scenario, backend=backend).run()


def _result(scenario_or_result):
    if isinstance(scenario_or_result, DephasingResult):
        return scenario_or_result
    return compute_dephasing(scenario_or_result)


def compute_JP(scenario, j, j2, t, bell_index=None):
    """J^P_{jj'}(t) with one-based qubit indices; Bell kernels when ``bell_index`` is given."""
    res = _result(scenario)
    i = res.index(t)
    J = res.JP if bell_index is None else res.J_bell(bell_index)
    return complex(J[i, j - 1, j2 - 1])


def _warn_if_invalid(loss, what):
    if np.any(np.asarray(loss) > VALIDITY_LOSS):
        warnings.warn(f"{what}: fidelity loss exceeds {VALIDITY_LOSS}; second-order result unreliable", RuntimeWarning, stacklevel=3)


def basis_state_fidelity(scenario, t):
    """1 - 1/2 sum_j Re J^P_jj(t), returned raw (no clamping)."""
    res = _result(scenario)
    F = float(res.fidelity[res.index(t)])
    _warn_if_invalid(1 - F, "basis_state_fidelity")
    return F


def flip_operators(M):
    """S+_j and S-_j on the 2^M product space."""
    sp = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    eye = np.eye(2, dtype=complex)
    ops = []
    for j in range(M):
        factors = [eye] * M
        factors[j] = sp
        op = factors[0]
        for f in factors[1:]:
            op = np.kron(op, f)
        ops.append((op, op.conj().T))
    return ops


def second_order_density(scenario, rho0, t):
    """rho(0) - 1/4 sum I^{sig sig'}_{jj'} [S^sig_j, [S^sig'_j', rho(0)]] in the drive frame.

    The correction is Hermitised, which is exact for real correlation functions.
    """
    res = _result(scenario)
    i = res.index(t)
    rho0 = np.asarray(rho0, dtype=complex)
    M = res.I.shape[-1]
    if rho0.shape != (2**M, 2**M):
        raise ValueError(f"density matrix must be {2**M}x{2**M}")
    ops = flip_operators(M)
    flip = 1 if res.sign_convention == "prose" else -1
    corr = np.zeros_like(rho0)
    for s, sg in enumerate(SIGNS):
        for s2, sg2 in enumerate(SIGNS):
            for j in range(M):
                A = ops[j][0 if sg * flip > 0 else 1]
                for j2 in range(M):
                    B = ops[j2][0 if sg2 * flip > 0 else 1]
                    inner = B @ rho0 - rho0 @ B
                    corr += res.I[i, s, s2, j, j2] * (A @ inner - inner @ A)
    corr = 0.5 * (corr + corr.conj().T)
    return rho0 - 0.25 * corr


def frame_rotation(phi, convention="prose"):
    """Lab-frame factor D = prod_j diag(exp(-i s phi_j/2), exp(i s phi_j/2))."""
    s = 1 if convention == "prose" else -1
    D = np.ones(1, dtype=complex)
    for p in np.atleast_1d(phi):
        D = np.kron(D, np.array([np.exp(-0.5j * s * p), np.exp(0.5j * s * p)]))
    return np.diag(D)


def bell_rotation():
    """Unitary whose rows are B_1..B_4 in the up/down product basis."""
    return BELL_STATES.copy()


def bell_fidelity(scenario, l, t, frame="lab", method="recipe"):
    """Fidelity of an initial Bell state B_l for two qubits.

    ``method="recipe"`` uses the closed kernels,
    cos(phi_pm) Re[exp(i phi_pm)(1 - 1/2 sum J_l)] in the lab frame or
    Re[1 - 1/2 sum J_l] in the drive frame. ``method="density"`` projects the
    second-order density matrix instead.
    """
    res = _result(scenario)
    if res.I.shape[-1] != 2:
        raise ValueError("Bell fidelities need exactly two qubits")
    if l not in (1, 2, 3, 4):
        raise ValueError("Bell index must be 1..4")
    i = res.index(t)
    if method == "recipe":
        core = 1.0 - 0.5 * res.J_bell(l)[i].sum()
        if frame == "drive":
            F = float(core.real)
        elif frame == "lab":
            p1, p2 = res.phi[i]
            ph = 0.5 * (p1 + p2) if l in (1, 3) else 0.5 * (p1 - p2)
            F = float(np.cos(ph) * (np.exp(1j * ph) * core).real)
        else:
            raise ValueError("frame must be 'lab' or 'drive'")
        _warn_if_invalid(1 - core.real, "bell_fidelity")
        return F
    if method != "density":
        raise ValueError("method must be 'recipe' or 'density'")
    v = BELL_STATES[l - 1]
    rho = second_order_density(res, np.outer(v, v.conj()), t)
    if frame == "lab":
        D = frame_rotation(res.phi[i], res.sign_convention)
        rho = D @ rho @ D.conj().T
    elif frame != "drive":
        raise ValueError("frame must be 'lab' or 'drive'")
    return float(np.vdot(v, rho @ v).real)


def bell_fidelity_series(result, l, frame="lab"):
    """Recipe fidelity over the whole grid."""
    core = 1.0 - 0.5 * result.J_bell(l).sum(axis=(1, 2))
    if frame == "drive":
        return core.real
    p1, p2 = result.phi[:, 0], result.phi[:, 1]
    ph = 0.5 * (p1 + p2) if l in (1, 3) else 0.5 * (p1 - p2)
    return np.cos(ph) * (np.exp(1j * ph) * core).real

"""Independent reference solutions.

* ``exact_decay_solve``: the full-memory integro-differential equation

      d alpha~_a/dt = -sum_b int_0^t Phi_ab(t - t') conj(eps_a(t)) eps_b(t')
                      exp(i w_a t - i w_b t') alpha~_b(t') dt'

  with product trapezoid in the history and implicit trapezoid in time. It
  shares no code with the engines beyond the bath and modulation objects.
* ``sample_gaussian_process`` / ``mc_dephasing_fidelity``: Gaussian noise by
  circulant embedding, propagated through each qubit's two-level equation.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ._accel import dispatch, njit
from .decay import mixing_decay_parameters
from .dephasing import BELL_STATES, bits
from .errors import NumericalRefusal

RNG_NAME = "numpy PCG64 via SeedSequence([seed, chunk])"
CHUNK = 256  # complex draws per RNG chunk (two realizations each)


@njit
def _volterra_loop(phi_d, outer, s_node, lab_phase, e_s, alpha0, dt):
    A = alpha0.shape[0]
    n = s_node.shape[0] - 1
    alpha = np.zeros((n + 1, A), dtype=np.complex128)
    alpha[0] = alpha0
    YL = np.zeros((n, A), dtype=np.complex128)
    YR = np.zeros((n, A), dtype=np.complex128)
    half = 0.5 * dt
    for i in range(n):
        # history integral at t_i over completed subintervals
        F = np.zeros(A, dtype=np.complex128)
        for a in range(A):
            acc = 0.0j
            for b in range(A):
                hsum = 0.0j
                for k in range(i):
                    hsum += phi_d[a, b, i - k] * YL[k, b] + phi_d[a, b, i - k - 1] * YR[k, b]
                acc += outer[i, a, b] * half * hsum
            F[a] = -e_s[i, a] * np.conj(lab_phase[i, a]) * acc
        for b in range(A):
            YL[i, b] = lab_phase[i, b] * s_node[i, b] * alpha[i, b]
        rhs = np.zeros(A, dtype=np.complex128)
        mat = np.zeros((A, A), dtype=np.complex128)
        for a in range(A):
            P = e_s[i + 1, a] * np.conj(lab_phase[i, a])
            acc = 0.0j
            for b in range(A):
                hsum = phi_d[a, b, 1] * YL[i, b]
                for k in range(i):
                    hsum += phi_d[a, b, i + 1 - k] * YL[k, b] + phi_d[a, b, i - k] * YR[k, b]
                acc += outer[i + 1, a, b] * half * hsum
                mat[a, b] = half * half * P * outer[i + 1, a, b] * phi_d[a, b, 0] * lab_phase[i, b] * s_node[i + 1, b]
            mat[a, a] += 1.0
            rhs[a] = alpha[i, a] + half * F[a] - half * P * acc
        alpha[i + 1] = np.linalg.solve(mat, rhs)
        for b in range(A):
            YR[i, b] = lab_phase[i, b] * s_node[i + 1, b] * alpha[i + 1, b]
    return alpha


def _volterra_numpy(phi_d, outer, s_node, lab_phase, e_s, alpha0, dt):
    A = alpha0.shape[0]
    n = s_node.shape[0] - 1
    alpha = np.zeros((n + 1, A), dtype=complex)
    alpha[0] = alpha0
    YL = np.zeros((n, A), dtype=complex)
    YR = np.zeros((n, A), dtype=complex)
    half = 0.5 * dt
    eye = np.eye(A)
    for i in range(n):
        k = np.arange(i)
        hist = np.einsum("abk,kb->ab", phi_d[:, :, i - k], YL[:i]) + np.einsum("abk,kb->ab", phi_d[:, :, i - k - 1], YR[:i])
        F = -e_s[i] * np.conj(lab_phase[i]) * np.sum(outer[i] * half * hist, axis=1)
        YL[i] = lab_phase[i] * s_node[i] * alpha[i]
        hist = phi_d[:, :, 1] * YL[i][None, :]
        if i:
            hist = hist + np.einsum("abk,kb->ab", phi_d[:, :, i + 1 - k], YL[:i]) + np.einsum("abk,kb->ab", phi_d[:, :, i - k], YR[:i])
        P = e_s[i + 1] * np.conj(lab_phase[i])
        rhs = alpha[i] + half * F - half * P * np.sum(outer[i + 1] * half * hist, axis=1)
        mat = eye + half * half * P[:, None] * outer[i + 1] * phi_d[:, :, 0] * (lab_phase[i] * s_node[i + 1])[None, :]
        alpha[i + 1] = np.linalg.solve(mat, rhs)
        YR[i] = lab_phase[i] * s_node[i + 1] * alpha[i + 1]
    return alpha


volterra_solve = dispatch(_volterra_loop, _volterra_numpy)


@dataclass
class ExactDecaySolution:
    t: np.ndarray
    alpha_tilde: np.ndarray
    alpha: np.ndarray
    c: np.ndarray
    A: np.ndarray


def exact_decay_solve(scenario, dt=None, backend=None):
    """Full-memory solution on the scenario grid (or a custom aligned ``dt``)."""
    sc = scenario
    step = sc.time_step() if dt is None else float(dt)
    omega = sc.energies
    if step * np.abs(omega).max(initial=0.0) > 0.3:
        raise NumericalRefusal(f"grid too coarse: dt*max|w| = {step * np.abs(omega).max():.3g} > 0.3")
    n = int(np.ceil(sc.t_end / step - 1e-9))
    t = np.arange(n + 1) * step
    chans = sc.modulation.channels
    stark = np.array([c.stark_integral(t) for c in chans]).T  # (n+1, A)
    mid = (np.arange(n) + 0.5) * step
    labels = np.array([c.labels(mid) for c in chans]).T  # (n, A)
    theta = sc.modulation.thetas
    lab_phase = np.exp(1j * labels * theta[None, :])
    s_node = np.exp(-1j * stark - 1j * omega[None, :] * t[:, None])
    e_s = np.exp(1j * stark)
    if sc.phase_convention == "printed":
        outer = np.exp(1j * omega[None, :, None] * t[:, None, None]) * np.ones((1, 1, len(omega)))
    else:
        outer = np.exp(1j * omega[None, None, :] * t[:, None, None]) * np.ones((1, len(omega), 1))
    phi_d = np.ascontiguousarray(sc.bath.response(t), dtype=complex)
    alpha_t = volterra_solve(phi_d, np.ascontiguousarray(outer), s_node, lab_phase, e_s,
                             sc.alpha0.astype(complex), step, backend=backend)
    alpha = np.exp(-1j * omega[None, :] * t[:, None] - 1j * stark) * alpha_t
    c, A, _ = mixing_decay_parameters(alpha, sc.reference_index)
    return ExactDecaySolution(t, alpha_t, alpha, c, A)


@dataclass
class NoiseRealization:
    """``delta[r, j, i]``: realization r of qubit j's noise at ``t[i]``."""

    t: np.ndarray
    delta: np.ndarray
    seed: int
    rng: str = RNG_NAME


def _embedding_factor(bath, dt, n_total):
    k = np.arange(n_total)
    lag = np.minimum(k, n_total - k) * dt
    cov = bath.response(lag)  # (M, M, n_total)
    if np.abs(cov.imag).max(initial=0.0) > 1e-12 * max(np.abs(cov).max(initial=0.0), 1e-300):
        raise NumericalRefusal("dephasing correlation must be real for classical noise")
    spec = np.fft.fft(cov.real, axis=-1).real  # symmetric even sequence -> real spectrum
    spec = np.moveaxis(spec, -1, 0)
    spec = 0.5 * (spec + np.swapaxes(spec, 1, 2))
    lam, vec = np.linalg.eigh(spec)
    top = max(lam.max(initial=0.0), 0.0)
    if lam.min(initial=0.0) < -1e-10 * max(top, 1e-300):
        raise NumericalRefusal(
            f"noise covariance is not positive semidefinite after embedding: min eigenvalue {lam.min():.3e}"
            f" (max {top:.3e})"
        )
    return vec * np.sqrt(np.clip(lam, 0.0, None))[:, None, :]


def sample_gaussian_process(bath, grid, count, seed, period=None):
    """Jointly Gaussian zero-mean noise with covariance Phi_jj'(|dt|).

    Circulant embedding with period ``4 * t_end`` (at least twice the grid);
    each complex draw yields two independent realizations (real and imaginary
    parts). Chunk ``c`` uses ``SeedSequence([seed, c])``.
    """
    t = np.asarray(grid, dtype=float)
    dt = t[1] - t[0]
    n_t = len(t)
    M = bath.n_channels
    period = 4.0 * t[-1] if period is None else period
    n_total = max(int(round(period / dt)), 2 * n_t)
    L = _embedding_factor(bath, dt, n_total)
    n_draw = (count + 1) // 2
    out = np.empty((2 * n_draw, M, n_t))
    for chunk, start in enumerate(range(0, n_draw, CHUNK)):
        size = min(CHUNK, n_draw - start)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), chunk])))
        z = rng.standard_normal((size, n_total, M)) + 1j * rng.standard_normal((size, n_total, M))
        y = np.fft.fft(np.einsum("fjk,sfk->sfj", L, z), axis=1)[:, :n_t] / np.sqrt(n_total)
        y = np.transpose(y, (0, 2, 1))
        out[2 * start: 2 * (start + size): 2] = y.real
        out[2 * start + 1: 2 * (start + size): 2] = y.imag
    return NoiseRealization(t, out[:count], int(seed))


@dataclass
class MCDephasingResult:
    t: np.ndarray
    basis_mean: np.ndarray
    basis_se: np.ndarray
    bell_mean: dict = field(default_factory=dict)
    bell_se: dict = field(default_factory=dict)
    bell_drive_mean: dict = field(default_factory=dict)
    bell_drive_se: dict = field(default_factory=dict)
    realizations: int = 0
    seed: int = 0
    rng: str = RNG_NAME

    def at(self, t):
        i = int(np.argmin(np.abs(self.t - t)))
        if abs(self.t[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t:g} is not a recorded time")
        return i


def _drift(dphi):
    return np.stack([np.exp(-0.5j * dphi), np.exp(0.5j * dphi)], axis=-1)


def mc_dephasing_fidelity(scenario, count, seed, substeps=4, basis_index=1, stride=None):
    """Monte-Carlo fidelities with standard errors.

    Each qubit evolves under ``H = (dphi/dt / 2) sz + (delta / 2)(1 + sx)`` in
    the up/down basis: drift half steps around an exact noise step
    ``exp(-i Theta (1 + sx))`` with ``Theta`` the trapezoid integral of
    ``delta / 2``. Basis fidelity uses ``basis_index``; for two qubits the
    Bell fidelities are reported in the lab and drive frames.
    """
    sc = scenario
    M = sc.M
    dt = sc.time_step() / substeps
    n = int(np.ceil(sc.t_end / dt - 1e-9))
    t = np.arange(n + 1) * dt
    noise = sample_gaussian_process(sc.bath, t, count, seed)
    delta = noise.delta  # (R, M, n+1)
    R = delta.shape[0]
    theta_step = 0.25 * dt * (delta[:, :, 1:] + delta[:, :, :-1])  # (R, M, n)
    chans = sc.modulation.channels
    phi_nodes = np.array([c.drive_phase(t) for c in chans])  # (M, n+1)
    phi_mid = np.array([c.drive_phase(t[:-1] + 0.5 * dt) for c in chans])
    stride = substeps if stride is None else stride
    rec = np.arange(0, n + 1, stride)
    U = np.zeros((R, M, 2, 2), dtype=complex)
    U[:, :, 0, 0] = U[:, :, 1, 1] = 1.0
    Us = [U.copy()]
    for i in range(n):
        d1 = _drift(phi_mid[:, i] - phi_nodes[:, i])  # (M, 2)
        d2 = _drift(phi_nodes[:, i + 1] - phi_mid[:, i])
        th = theta_step[:, :, i]
        cs, sn, ph = np.cos(th), -1j * np.sin(th), np.exp(-1j * th)
        V = d1[None, :, :, None] * U
        c, sx = cs[..., None], sn[..., None]
        V0, V1 = V[:, :, 0], V[:, :, 1]
        V = ph[..., None, None] * np.stack([c * V0 + sx * V1, sx * V0 + c * V1], axis=2)
        U = d2[None, :, :, None] * V
        if (i + 1) % stride == 0:
            Us.append(U.copy())
    Us = np.array(Us)  # (T, R, M, 2, 2)
    trec = t[rec]
    b = bits(basis_index, M)
    # |U_bb|^2 = 1 - |U_b'b|^2 for a unitary; this form is exactly 1 without noise
    fb = np.ones(Us.shape[:2])
    for j in range(M):
        fb = fb * (1.0 - np.abs(Us[:, :, j, 1 - b[j], b[j]]) ** 2)
    res = MCDephasingResult(trec, fb.mean(axis=1), fb.std(axis=1, ddof=1) / np.sqrt(R), realizations=R, seed=int(seed))
    if M == 2:
        U12 = np.einsum("trab,trcd->tracbd", Us[:, :, 0], Us[:, :, 1]).reshape(len(trec), R, 4, 4)
        phis = phi_nodes[:, rec].T  # (T, 2)
        s = 1 if sc.sign_convention == "prose" else -1
        for l in range(1, 5):
            v = BELL_STATES[l - 1]
            psi = U12 @ v  # lab frame
            f_lab = np.abs(psi @ v.conj()) ** 2
            # drive frame: remove D = diag(exp(-i phi/2), exp(i phi/2)) per qubit
            dq = [np.stack([np.exp(0.5j * s * phis[:, j]), np.exp(-0.5j * s * phis[:, j])], axis=1) for j in range(2)]
            dinv = np.einsum("ta,tb->tab", dq[0], dq[1]).reshape(len(trec), 4)
            f_drive = np.abs((dinv[:, None, :] * psi) @ v.conj()) ** 2
            res.bell_mean[l] = f_lab.mean(axis=1)
            res.bell_se[l] = f_lab.std(axis=1, ddof=1) / np.sqrt(R)
            res.bell_drive_mean[l] = f_drive.mean(axis=1)
            res.bell_drive_se[l] = f_drive.std(axis=1, ddof=1) / np.sqrt(R)
    return res


@dataclass
class OracleReport:
    quantity: str
    engine_value: float
    oracle_value: float
    tolerance: float
    tolerance_kind: str  # "absolute", "relative" or "standard_errors"
    passed: bool
    realizations: int = None
    step: float = None
    standard_error: float = None
    notes: str = ""

    @classmethod
    def compare(cls, quantity, engine, oracle, tolerance, kind="absolute", standard_error=None, **extra):
        diff = abs(engine - oracle)
        if kind == "absolute":
            ok = diff <= tolerance
        elif kind == "relative":
            ok = diff <= tolerance * abs(oracle)
        elif kind == "standard_errors":
            ok = diff <= tolerance * standard_error
        else:
            raise ValueError(f"unknown tolerance kind {kind!r}")
        return cls(quantity, float(engine), float(oracle), float(tolerance), kind, bool(ok),
                   standard_error=None if standard_error is None else float(standard_error), **extra)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

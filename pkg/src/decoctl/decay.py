"""Zero-temperature decay: decoherence matrices, amplitudes and conditions.

Amplitudes in the interaction picture obey ``d alpha~/dt = -W(t) alpha~`` with

    W_ab(t) = int_0^t Phi_ab(t - t') conj(eps_a(t)) eps_b(t') exp(i w_a t - i w_b t') dt'

and ``J(t) = int_0^t W``. The physical amplitudes are
``alpha_a = exp(-i w_a t - i int_0^t delta_a) alpha~_a``.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from .baths import ChannelIndex
from .errors import NumericalRefusal
from .kernels import MemoryConvolution, contract_moments

MEMORY_FACTOR = 8.0
STEPS_PER_TIME = 20
MAX_PHASE_STEP = 0.3
REF_FLOOR = 1e-12
# preservation "satisfied" tolerances
OFFDIAG_TOL = 1e-4
RATE_TOL = 1e-2


@dataclass(frozen=True, eq=False)
class DecayScenario:
    """Full decay problem: bath, modulation, energies, initial amplitudes and grid.

    ``memory`` is the window length in time units, ``"full"`` for the whole
    history, or None for ``8 * max t_c``. ``dt`` defaults to
    ``min(tau_min, t_c) / 20`` and is always shrunk to divide ``tau_min``.
    """

    bath: object
    modulation: object
    energies: np.ndarray
    alpha0: np.ndarray
    t_end: float
    dt: float = None
    memory: object = None
    phase_convention: str = "printed"
    reference: object = 0

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.energies, dtype=float))
        a0 = np.atleast_1d(np.asarray(self.alpha0, dtype=complex))
        n = self.bath.n_channels
        if len(self.modulation) != n:
            raise ValueError(f"modulation has {len(self.modulation)} channels, bath has {n}")
        if w.shape != (n,) or a0.shape != (n,):
            raise ValueError(f"energies and initial amplitudes need {n} entries")
        if np.sum(np.abs(a0) ** 2) > 1.0 + 1e-12:
            raise ValueError("initial amplitudes exceed unit norm")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.phase_convention not in ("printed", "rotating"):
            raise ValueError("phase_convention must be 'printed' or 'rotating'")
        object.__setattr__(self, "energies", w)
        object.__setattr__(self, "alpha0", a0)

    @property
    def n_channels(self):
        return len(self.energies)

    @property
    def reference_index(self):
        ref = self.reference
        if isinstance(ref, ChannelIndex):
            return self.modulation.index(ref)
        return self.modulation.index(int(ref))

    def time_step(self):
        """Grid step aligned to the shortest pulse interval."""
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

    def memory_time(self):
        if self.memory == "full":
            return np.inf
        if self.memory is None:
            return MEMORY_FACTOR * self.bath.correlation_time
        return float(self.memory)


class Residuals(NamedTuple):
    offdiag_norm: float
    rate_spread: float
    phase_spread: float


class Fidelity(NamedTuple):
    value: float
    approximate: bool


@dataclass
class DecoherenceHistory:
    """Sampled run on the grid ``t_i = i dt``.

    ``W`` holds the right-continuous value at each grid point (left limit at
    the last point); ``W_mid`` holds interval midpoints, so ``J`` is exactly
    the Simpson integral of the stored samples.
    """

    t: np.ndarray
    W: np.ndarray
    W_mid: np.ndarray
    W_left: np.ndarray
    J: np.ndarray
    alpha_tilde: np.ndarray
    alpha: np.ndarray
    c: np.ndarray
    A: np.ndarray
    reference: int
    stark_phase: np.ndarray
    flagged: np.ndarray

    def index(self, t, nearest=False):
        """Grid index of ``t``; ``nearest=True`` accepts the closest grid point."""
        dt = self.t[1] - self.t[0]
        i = int(round(t / dt))
        if nearest and 0 <= i < len(self.t):
            return i
        if not 0 <= i < len(self.t) or abs(self.t[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t:g} is not on the grid (step {dt:g}, end {self.t[-1]:g})")
        return i


def _circular_spread(angles):
    a = np.sort(np.mod(np.asarray(angles, dtype=float), 2 * np.pi))
    if a.size < 2:
        return 0.0
    gaps = np.diff(np.concatenate([a, [a[0] + 2 * np.pi]]))
    return float(2 * np.pi - gaps.max())


class DecayEngine:
    """Precomputes the phase-independent convolution for a scenario.

    ``history(thetas)`` and ``J_at(thetas, t)`` reuse it, so optimizers that
    vary only the phase steps pay for the memory integral once.
    """

    def __init__(self, scenario, backend=None):
        self.scenario = sc = scenario
        self.dt = dt = sc.time_step()
        omega = sc.energies
        if dt * np.abs(omega).max(initial=0.0) > MAX_PHASE_STEP:
            raise NumericalRefusal(
                f"grid too coarse: dt*max|w| = {dt * np.abs(omega).max():.3g} > {MAX_PHASE_STEP}"
                f" (dt={dt:g}); reduce grid.dt"
            )
        self.n = n = int(np.ceil(sc.t_end / dt - 1e-9))
        self.h = h = dt / 2
        self.t = np.arange(n + 1) * dt
        mod = sc.modulation
        A = sc.n_channels
        xq = np.arange(4 * n + 1) * (h / 2)
        chans = mod.channels
        stark_q = np.array([c.stark_integral(xq) for c in chans])
        labels_q = np.array([c.labels(xq) for c in chans], dtype=np.int64)
        g_q = np.exp(-1j * stark_q - 1j * omega[:, None] * xq[None, :])
        t_mem = sc.memory_time()
        window = 2 * n if not np.isfinite(t_mem) else min(2 * n, int(np.ceil(t_mem / h)))
        phi_q = sc.bath.response(np.arange(2 * window + 1) * (h / 2))
        self.conv = MemoryConvolution(phi_q, g_q, labels_q, h, window, backend=backend)

        s = np.arange(2 * n + 1) * h
        stark_s = stark_q[:, ::2]
        self.stark_grid = stark_s[:, ::2].T  # (n+1, A)
        if sc.phase_convention == "printed":
            freq = np.broadcast_to(omega[:, None], (A, A))
        else:
            freq = np.broadcast_to(omega[None, :], (A, A))
        # smooth left factor exp(i S_a(s)) exp(i w s) at every h-node
        self.node_phase = np.exp(1j * stark_s.T[:, :, None]) * np.exp(1j * freq[None] * s[:, None, None])
        mid = (np.arange(n) + 0.5) * dt
        self.left_labels = np.array([c.labels(mid) for c in chans], dtype=np.int64).T  # (n, A)
        self._moments = {}

    def _default_thetas(self, thetas):
        return self.scenario.modulation.thetas if thetas is None else np.asarray(thetas, dtype=float)

    def _w_nodes(self, thetas):
        U = self.conv.inner(thetas)
        base = self.node_phase * U
        left = np.exp(-1j * self.left_labels * thetas[None, :])[:, :, None]  # (n, A, 1)
        return left * base[0:-1:2], left * base[1::2], left * base[2::2]

    def w_samples(self, thetas=None):
        thetas = self._default_thetas(thetas)
        return self._w_nodes(thetas)

    def J_series(self, thetas=None):
        w_plus, w_mid, w_minus = self.w_samples(thetas)
        inc = self.dt / 6 * (w_plus + 4 * w_mid + w_minus)
        J = np.zeros((self.n + 1,) + inc.shape[1:], dtype=complex)
        np.cumsum(inc, axis=0, out=J[1:])
        return J

    def J_at(self, thetas=None, t=None, nearest=False):
        """J(t) through the label moments; exact to rounding against J_series."""
        thetas = self._default_thetas(thetas)
        i = self.n if t is None else self._grid_index(t, nearest)
        if i == 0:
            A = self.scenario.n_channels
            return np.zeros((A, A), complex)
        mom = self._moments.get(i)
        if mom is None:
            k = np.arange(i)
            nodes = np.concatenate([2 * k, 2 * k + 1, 2 * k + 2])
            weights = np.concatenate([np.full(i, 1.0), np.full(i, 4.0), np.full(i, 1.0)]) * self.dt / 6
            labels = np.concatenate([self.left_labels[:i]] * 3)
            mom = self.conv.label_moments(nodes, weights, self.node_phase[nodes], labels)
            self._moments[i] = mom
        return contract_moments(mom, thetas, thetas)

    def _grid_index(self, t, nearest=False):
        i = int(round(t / self.dt))
        if nearest and 0 <= i <= self.n:
            return i
        if not 0 <= i <= self.n or abs(i * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t:g} is not on the grid (step {self.dt:g})")
        return i

    def history(self, thetas=None, alpha0=None, reference=None):
        sc = self.scenario
        thetas = self._default_thetas(thetas)
        a0 = sc.alpha0 if alpha0 is None else np.asarray(alpha0, dtype=complex)
        ref = sc.reference_index if reference is None else int(reference)
        w_plus, w_mid, w_minus = self._w_nodes(thetas)
        dJ = self.dt / 6 * (w_plus + 4 * w_mid + w_minus)
        J = np.zeros((self.n + 1,) + dJ.shape[1:], dtype=complex)
        np.cumsum(dJ, axis=0, out=J[1:])
        # fourth-order Magnus step with end-point commutator
        comm = w_plus @ w_minus - w_minus @ w_plus
        props = expm(-dJ - self.dt**2 / 12 * comm)
        alpha_t = np.empty((self.n + 1, len(a0)), dtype=complex)
        alpha_t[0] = a0
        for i in range(self.n):
            alpha_t[i + 1] = props[i] @ alpha_t[i]
        W = np.concatenate([w_plus, w_minus[-1:]], axis=0)
        phase = np.exp(-1j * sc.energies[None, :] * self.t[:, None] - 1j * self.stark_grid)
        alpha = phase * alpha_t
        c, A, flagged = mixing_decay_parameters(alpha, ref)
        return DecoherenceHistory(
            t=self.t.copy(), W=W, W_mid=w_mid, W_left=w_minus, J=J,
            alpha_tilde=alpha_t, alpha=alpha, c=c, A=A, reference=ref,
            stark_phase=self.stark_grid.copy(), flagged=flagged,
        )


def compute_W(scenario, t, inner_grid=None, backend=None):
    """W(t) at a grid time (right-continuous at pulse instants).

    ``inner_grid`` overrides the scenario step.
    """
    if inner_grid is not None:
        scenario = _replace(scenario, dt=float(inner_grid))
    eng = DecayEngine(scenario, backend=backend)
    i = eng._grid_index(t)
    w_plus, _, w_minus = eng.w_samples()
    return w_plus[i] if i < eng.n else w_minus[-1]


def compute_J(history):
    """Cumulative integral of the sampled W series (Simpson on half steps)."""
    dt = history.t[1] - history.t[0]
    inc = dt / 6 * (history.W[:-1] + 4 * history.W_mid + history.W_left)
    J = np.zeros_like(history.J)
    np.cumsum(inc, axis=0, out=J[1:])
    return J


def evolve_amplitudes(scenario, backend=None):
    return DecayEngine(scenario, backend=backend).history()


def mixing_decay_parameters(alpha, reference=0):
    """c = alpha / alpha_ref and A = alpha_ref * sqrt(sum |c|^2).

    Works on a single vector or a series of vectors. Where the reference
    amplitude is below 1e-12 the result is flagged and c, A are NaN.
    """
    alpha = np.asarray(alpha, dtype=complex)
    single = alpha.ndim == 1
    al = np.atleast_2d(alpha)
    ref = al[:, reference]
    flagged = np.abs(ref) <= REF_FLOOR
    safe = np.where(flagged, 1.0, ref)
    c = al / safe[:, None]
    A = safe * np.sqrt(np.sum(np.abs(c) ** 2, axis=1))
    c[flagged] = np.nan
    A = np.where(flagged, np.nan, A)
    if single:
        return c[0], complex(A[0]), bool(flagged[0])
    return c, A, flagged


def amplitudes_from_mixing(c, A, reference=0):
    """Inverse of ``mixing_decay_parameters``: alpha with alpha_ref real positive."""
    c = np.asarray(c, dtype=complex)
    ref_amp = A / np.sqrt(np.sum(np.abs(c) ** 2))
    alpha = ref_amp * c / c[reference]
    return alpha


def preservation_residuals(history, t, stark_integrals=None):
    i = history.index(t)
    J = history.J[i]
    off = ~np.eye(J.shape[0], dtype=bool)
    offdiag = float(np.sum(np.abs(J[off]) ** 2))
    re = J.diagonal().real
    stark = history.stark_phase[i] if stark_integrals is None else stark_integrals
    phase = J.diagonal().imag + stark
    return Residuals(offdiag, float(re.max() - re.min()), _circular_spread(phase))


def conditions_satisfied(J, offdiag_tol=OFFDIAG_TOL, rate_tol=RATE_TOL):
    off = ~np.eye(J.shape[0], dtype=bool)
    offdiag = np.sum(np.abs(J[off]) ** 2)
    re = J.diagonal().real
    scale = np.sum(np.abs(J.diagonal()))
    if scale == 0:
        return offdiag == 0
    return bool(offdiag < offdiag_tol * scale**2 and (re.max() - re.min()) <= rate_tol * abs(re.mean()))


def preservation_fidelity(history, t, reference=None, offdiag_tol=OFFDIAG_TOL, rate_tol=RATE_TOL):
    """exp(-2 Re J_ref); labelled approximate unless the conditions hold."""
    i = history.index(t)
    ref = history.reference if reference is None else reference
    J = history.J[i]
    value = float(np.exp(-2.0 * J[ref, ref].real))
    return Fidelity(value, not conditions_satisfied(J, offdiag_tol, rate_tol))


def desired_mixing(alpha_desired):
    """Reference (argmax |alpha^d|) and the desired mixing vector."""
    ad = np.asarray(alpha_desired, dtype=complex)
    ref = int(np.argmax(np.abs(ad)))
    if abs(ad[ref]) <= REF_FLOOR:
        raise ValueError("desired state has no nonzero amplitude")
    return ref, ad / ad[ref]


def steering_residual(history, t, c_desired, moduli=False):
    """sum_a |c_a(t) - c^d_a|^2; ``moduli=True`` compares |c| only."""
    i = history.index(t)
    c = history.c[i]
    cd = np.asarray(c_desired, dtype=complex)
    if moduli:
        return float(np.sum((np.abs(c) - np.abs(cd)) ** 2))
    return float(np.sum(np.abs(c - cd) ** 2))


def dicke_vector(M, l):
    """q_j^(l) = exp(2 pi i j (l - 1) / M) / sqrt(M), j = 1..M."""
    j = np.arange(1, M + 1)
    return np.exp(2j * np.pi * j * (l - 1) / M) / np.sqrt(M)


def entangled_basis_fidelity(history, l, t):
    """|A|^2 |<D_l|c>|^2 / sum |c|^2 for the singly-excited basis state D_l."""
    i = history.index(t)
    c = history.c[i]
    q = dicke_vector(len(c), l)
    overlap = np.vdot(q, c)
    return float(abs(history.A[i]) ** 2 * abs(overlap) ** 2 / np.sum(np.abs(c) ** 2))


def _replace(scenario, **changes):
    from dataclasses import replace

    return replace(scenario, **changes)

"""Per-channel modulation: impulsive phase trains, Stark shifts, drive envelopes.

A channel's modulation factor factorises as

    eps(t) = static(t) * exp(i * label(t) * theta)

where ``label`` counts completed pulses of an impulsive train and ``static``
collects everything smooth (Stark phase, continuous drive). The engines exploit
this split: everything that depends on ``static`` is precomputed once and the
pulse phases ``theta`` enter only through cheap contractions.
"""

from dataclasses import dataclass, replace

import numpy as np

from .baths import ChannelIndex
from .errors import ChannelIndexError

# Guards floor(t/tau) against t = k*tau landing a rounding error below k.
_EDGE = 1e-9


@dataclass(frozen=True)
class PhasePulseTrain:
    """Phase advance ``theta`` at every multiple of ``tau`` (right-continuous)."""

    tau: float
    theta: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("pulse interval must be positive")

    def count(self, t):
        return np.floor(np.asarray(t, dtype=float) / self.tau + _EDGE).astype(np.int64)

    def phase(self, t):
        return self.count(t) * self.theta

    def epsilon(self, t):
        return np.exp(1j * self.phase(t))


class _PiecewiseTable:
    """Piecewise-linear accumulated quantity with piecewise-constant slope."""

    def __init__(self, breakpoints, slopes, offset=0.0):
        bp = np.asarray(breakpoints, dtype=float)
        sl = np.asarray(slopes, dtype=float)
        if bp.ndim != 1 or bp.size == 0 or bp[0] != 0.0:
            raise ValueError("breakpoints must start at 0")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        if sl.shape != bp.shape:
            raise ValueError("need one slope per breakpoint")
        self.breakpoints = bp
        self.slopes = sl
        # value at each breakpoint, exact partial sums
        self.values = offset + np.concatenate([[0.0], np.cumsum(np.diff(bp) * sl[:-1])])

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.breakpoints, t, side="right") - 1, 0, None)
        return self.values[k] + self.slopes[k] * (t - self.breakpoints[k])

    def __eq__(self, other):
        return (
            isinstance(other, _PiecewiseTable)
            and np.array_equal(self.breakpoints, other.breakpoints)
            and np.array_equal(self.slopes, other.slopes)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


class StarkShiftSchedule:
    """Piecewise-constant Stark shift ``delta(t)``; ``integral`` is exact."""

    def __init__(self, breakpoints, rates):
        self._table = _PiecewiseTable(breakpoints, rates)

    @classmethod
    def constant(cls, rate):
        return cls([0.0], [rate])

    @property
    def is_zero(self):
        return not np.any(self._table.slopes)

    def integral(self, t):
        return self._table(t)

    def __eq__(self, other):
        return isinstance(other, StarkShiftSchedule) and self._table == other._table

    __hash__ = None


class DrivingEnvelope:
    """Resonant drive with real piecewise-constant envelope ``V0(t)``.

    Stored as an accumulated-phase table, so ``phase(t) = 2 * int_0^t V0``
    is exact at every t.
    """

    def __init__(self, breakpoints, amplitudes):
        self._table = _PiecewiseTable(breakpoints, 2.0 * np.asarray(amplitudes, dtype=float))

    @classmethod
    def constant(cls, amplitude):
        return cls([0.0], [amplitude])

    @property
    def breakpoints(self):
        return self._table.breakpoints

    def phase(self, t):
        return self._table(t)

    def epsilon(self, t):
        return np.exp(1j * self.phase(t))

    def __eq__(self, other):
        return isinstance(other, DrivingEnvelope) and self._table == other._table

    __hash__ = None


@dataclass(frozen=True)
class ChannelModulation:
    """Modulation of one channel. Decay channels use ``pulse`` and ``stark``;
    dephasing qubits use ``pulse`` or ``drive``."""

    pulse: PhasePulseTrain = None
    stark: StarkShiftSchedule = None
    drive: DrivingEnvelope = None

    def __post_init__(self):
        if self.pulse is not None and self.drive is not None:
            raise ValueError("a channel takes either a pulse train or a drive envelope, not both")

    @property
    def theta(self):
        return 0.0 if self.pulse is None else float(self.pulse.theta)

    @property
    def tau(self):
        return np.inf if self.pulse is None else float(self.pulse.tau)

    def labels(self, t):
        t = np.asarray(t, dtype=float)
        if self.pulse is None:
            return np.zeros(t.shape, dtype=np.int64)
        return self.pulse.count(t)

    def stark_integral(self, t):
        t = np.asarray(t, dtype=float)
        return np.zeros(t.shape) if self.stark is None else self.stark.integral(t)

    def drive_phase(self, t):
        """Accumulated drive phase phi(t); impulsive trains count as drive."""
        t = np.asarray(t, dtype=float)
        if self.drive is not None:
            return self.drive.phase(t)
        if self.pulse is not None:
            return self.pulse.phase(t)
        return np.zeros(t.shape)

    def decay_static(self, t):
        """Smooth part of the decay factor: exp(-i int_0^t delta)."""
        return np.exp(-1j * self.stark_integral(t))

    def dephasing_static(self, t):
        t = np.asarray(t, dtype=float)
        return np.ones(t.shape, complex) if self.drive is None else self.drive.epsilon(t)

    def epsilon_decay(self, t):
        return np.exp(1j * self.labels(t) * self.theta) * self.decay_static(t)

    def epsilon_dephasing(self, t):
        return np.exp(1j * self.drive_phase(t))


class ModulationSchedule:
    """Channel map for a scenario, flattened in (system, level) order."""

    def __init__(self, channels, layout=None):
        self.channels = tuple(channels)
        self.layout = tuple(layout) if layout is not None else (1,) * len(self.channels)
        if sum(self.layout) != len(self.channels):
            raise ValueError("layout does not match the number of channels")

    @classmethod
    def pulse_trains(cls, taus, thetas, layout=None, stark=None):
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        taus = np.broadcast_to(np.asarray(taus, dtype=float), thetas.shape)
        starks = [None] * len(thetas) if stark is None else list(stark)
        chans = [
            ChannelModulation(pulse=PhasePulseTrain(float(tau), float(th)), stark=st)
            for tau, th, st in zip(taus, thetas, starks)
        ]
        return cls(chans, layout)

    @classmethod
    def unmodulated(cls, layout):
        return cls([ChannelModulation() for _ in range(sum(layout))], layout)

    def __len__(self):
        return len(self.channels)

    def index(self, ch):
        if isinstance(ch, (int, np.integer)):
            if not 0 <= ch < len(self.channels):
                raise ChannelIndexError(f"channel {ch} outside 0..{len(self.channels) - 1}")
            return int(ch)
        if not 1 <= ch.system <= len(self.layout) or not 1 <= ch.level <= self.layout[ch.system - 1]:
            raise ChannelIndexError(f"{ch} outside layout {self.layout}")
        return int(sum(self.layout[: ch.system - 1]) + ch.level - 1)

    def __getitem__(self, ch):
        return self.channels[self.index(ch)]

    @property
    def is_global(self):
        first = self.channels[0]
        return all(c == first for c in self.channels[1:])

    @property
    def thetas(self):
        return np.array([c.theta for c in self.channels])

    @property
    def taus(self):
        return np.array([c.tau for c in self.channels])

    def with_thetas(self, thetas):
        chans = []
        for c, th in zip(self.channels, thetas):
            if c.pulse is None:
                chans.append(c)
            else:
                chans.append(replace(c, pulse=PhasePulseTrain(c.pulse.tau, float(th))))
        return ModulationSchedule(chans, self.layout)

    def with_taus(self, taus):
        chans = []
        for c, tau in zip(self.channels, taus):
            if c.pulse is None or not np.isfinite(tau):
                chans.append(replace(c, pulse=None) if not np.isfinite(tau) else c)
            else:
                chans.append(replace(c, pulse=PhasePulseTrain(float(tau), c.pulse.theta)))
        return ModulationSchedule(chans, self.layout)


def eval_epsilon_decay(schedule, ch, t):
    """eps_a(t) = (pulse phase) * exp(-i int_0^t delta_a)."""
    out = schedule[ch].epsilon_decay(t)
    return complex(out) if np.ndim(out) == 0 else out


def eval_kernel_decay(schedule, a, b, t, t_prime):
    """K_ab(t, t') = conj(eps_a(t)) * eps_b(t')."""
    out = np.conj(schedule[a].epsilon_decay(t)) * schedule[b].epsilon_decay(t_prime)
    return complex(out) if np.ndim(out) == 0 else out


def accumulated_drive_phase(schedule, j, t):
    """phi_j(t) = 2 int_0^t V0_j, with eps_j(t) = exp(i phi_j(t))."""
    ch = ChannelIndex(j, 1) if isinstance(j, (int, np.integer)) else j
    out = schedule[ch].drive_phase(t)
    return float(out) if np.ndim(out) == 0 else out

"""Bath response functions and their spectra.

Every model exposes the full channel-by-channel response matrix
``response(t) -> (A, A, *t.shape)``. The Fourier convention throughout is

    Phi(t) = integral dw G(w) exp(-i w t),

so ``G(w) = (1/2pi) integral dt Phi(t) exp(+i w t)``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ChannelIndexError, NumericalRefusal


@dataclass(frozen=True)
class ChannelIndex:
    """One-based (system, level) pair. Dephasing channels use ``level=1``."""

    system: int
    level: int = 1


def ring_positions(count, radius):
    """Positions ``radius * (cos 2pi j/M, sin 2pi j/M, 0)`` for j = 1..M."""
    j = np.arange(1, count + 1)
    ang = 2.0 * np.pi * j / count
    return np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(count)], axis=1)


def line_positions(count, spacing):
    return np.stack([spacing * np.arange(count), np.zeros(count), np.zeros(count)], axis=1)


def _pair_distances(positions):
    pos = np.asarray(positions, dtype=float)
    return np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)


class BathResponseModel:
    """Common interface. Subclasses set ``layout`` and implement ``response``."""

    layout = (1,)

    @property
    def n_channels(self):
        return int(sum(self.layout))

    def flat_index(self, ch):
        if not isinstance(ch, ChannelIndex):
            raise TypeError(f"expected ChannelIndex, got {type(ch).__name__}")
        if not 1 <= ch.system <= len(self.layout):
            raise ChannelIndexError(f"system {ch.system} outside 1..{len(self.layout)}")
        if not 1 <= ch.level <= self.layout[ch.system - 1]:
            raise ChannelIndexError(
                f"level {ch.level} outside 1..{self.layout[ch.system - 1]} for system {ch.system}"
            )
        return int(sum(self.layout[: ch.system - 1]) + ch.level - 1)

    def channels(self):
        return [ChannelIndex(j + 1, n + 1) for j, nj in enumerate(self.layout) for n in range(nj)]

    def response(self, t):
        raise NotImplementedError

    def zero_lag(self):
        """Analytic Phi(0), hand-evaluated per model."""
        raise NotImplementedError

    @property
    def correlation_time(self):
        """Longest correlation time; sets memory windows."""
        raise NotImplementedError

    @property
    def shortest_correlation_time(self):
        return self.correlation_time

    def closed_form_spectrum(self, omega):
        return None


@dataclass(frozen=True, eq=False)
class GaussianDipoleBath(BathResponseModel):
    """Single multilevel system: ``c_nn' cos(eta_n) cos(eta_n') exp(-t^2 / 4 t_c^2)``."""

    coupling: np.ndarray
    dipole_angles: np.ndarray
    t_c: float

    def __post_init__(self):
        c = np.asarray(self.coupling, dtype=float)
        eta = np.asarray(self.dipole_angles, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("coupling matrix must be square")
        if not np.allclose(c, c.T):
            raise ValueError("coupling matrix must be symmetric")
        if eta.shape != (c.shape[0],):
            raise ValueError("need one dipole angle per level")
        if not self.t_c > 0:
            raise ValueError("correlation time must be positive")
        object.__setattr__(self, "coupling", c)
        object.__setattr__(self, "dipole_angles", eta)

    @property
    def layout(self):
        return (len(self.dipole_angles),)

    def _amplitude(self):
        d = np.cos(self.dipole_angles)
        return self.coupling * np.outer(d, d)

    def response(self, t):
        t = np.asarray(t, dtype=float)
        env = np.exp(-(t**2) / (4.0 * self.t_c**2))
        return (self._amplitude()[(...,) + (None,) * t.ndim] * env).astype(complex)

    def zero_lag(self):
        return self._amplitude().astype(complex)

    @property
    def correlation_time(self):
        return float(self.t_c)

    def closed_form_spectrum(self, omega):
        w = np.asarray(omega, dtype=float)
        g = self.t_c / np.sqrt(np.pi) * np.exp(-(w**2) * self.t_c**2)
        return self._amplitude()[(...,) + (None,) * w.ndim] * g


@dataclass(frozen=True, eq=False)
class CorrelatedGaussianDecayBath(BathResponseModel):
    """M two-level systems sharing a zero-temperature continuum.

    ``Phi_jj'(t) = gamma exp(-t^2/4t_j^2) exp(-t^2/4t_j'^2) / (r0 + |r_j - r_j'|)``.
    Positions default to a ring of radius ``r0``.
    """

    gamma: float
    correlation_times: np.ndarray
    r0: float = 1.0
    positions: np.ndarray = None

    def __post_init__(self):
        tj = np.atleast_1d(np.asarray(self.correlation_times, dtype=float))
        if np.any(tj <= 0):
            raise ValueError("correlation times must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        pos = ring_positions(len(tj), self.r0) if self.positions is None else np.asarray(self.positions, float)
        if pos.shape != (len(tj), 3):
            raise ValueError("need one 3-vector position per system")
        dist = _pair_distances(pos)
        if np.any(self.r0 + dist <= 0):
            raise ValueError("r0 + r_jj' must be positive")
        object.__setattr__(self, "correlation_times", tj)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "_denominator", self.r0 + dist)

    @property
    def layout(self):
        return (1,) * len(self.correlation_times)

    def _inv_width2(self):
        tj = self.correlation_times
        return 1.0 / (4.0 * tj[:, None] ** 2) + 1.0 / (4.0 * tj[None, :] ** 2)

    def response(self, t):
        t = np.asarray(t, dtype=float)
        ix = (...,) + (None,) * t.ndim
        k = self._inv_width2()[ix]
        return (self.gamma / self._denominator[ix] * np.exp(-k * t**2)).astype(complex)

    def zero_lag(self):
        return (self.gamma / self._denominator).astype(complex)

    @property
    def correlation_time(self):
        return float(self.correlation_times.max())

    @property
    def shortest_correlation_time(self):
        return float(self.correlation_times.min())

    def closed_form_spectrum(self, omega):
        w = np.asarray(omega, dtype=float)
        ix = (...,) + (None,) * w.ndim
        k = self._inv_width2()[ix]  # exp(-k t^2)  <->  exp(-w^2 / 4k) / sqrt(4 pi k)
        return self.gamma / self._denominator[ix] * np.exp(-(w**2) / (4 * k)) / np.sqrt(4 * np.pi * k)


@dataclass(frozen=True, eq=False)
class ExponentialDephasingBath(BathResponseModel):
    """Classical dephasing noise ``gamma exp(-|t|/2t_j - |t|/2t_j' - r_jj'^2)``.

    ``cross_correlated=False`` drops the j != j' terms (the r -> infinity limit).
    Default positions lie on a line with spacing ``separation``.
    """

    gamma: float
    correlation_times: np.ndarray
    positions: np.ndarray = None
    separation: float = 1.0
    cross_correlated: bool = True

    def __post_init__(self):
        tj = np.atleast_1d(np.asarray(self.correlation_times, dtype=float))
        if np.any(tj <= 0):
            raise ValueError("correlation times must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        pos = line_positions(len(tj), self.separation) if self.positions is None else np.asarray(self.positions, float)
        if pos.shape != (len(tj), 3):
            raise ValueError("need one 3-vector position per qubit")
        amp = self.gamma * np.exp(-_pair_distances(pos) ** 2)
        if not self.cross_correlated:
            amp = np.diag(np.diag(amp))
        object.__setattr__(self, "correlation_times", tj)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "_amp", amp)

    @property
    def layout(self):
        return (1,) * len(self.correlation_times)

    def _rates(self):
        tj = self.correlation_times
        return 1.0 / (2 * tj[:, None]) + 1.0 / (2 * tj[None, :])

    def response(self, t):
        t = np.abs(np.asarray(t, dtype=float))
        ix = (...,) + (None,) * t.ndim
        return (self._amp[ix] * np.exp(-self._rates()[ix] * t)).astype(complex)

    def zero_lag(self):
        return self._amp.astype(complex)

    @property
    def correlation_time(self):
        return float(self.correlation_times.max())

    @property
    def shortest_correlation_time(self):
        return float(self.correlation_times.min())

    def closed_form_spectrum(self, omega):
        w = np.asarray(omega, dtype=float)
        ix = (...,) + (None,) * w.ndim
        k = self._rates()[ix]
        return self._amp[ix] / np.pi * k / (k**2 + w**2)


@dataclass(frozen=True, eq=False)
class TabulatedBath(BathResponseModel):
    """User-supplied response on a time grid, linearly interpolated.

    Outside the grid the response is zero (memory cutoff). If the grid starts
    at t >= 0, negative times use the Hermitian extension
    ``Phi_ab(-t) = conj(Phi_ba(t))``.
    """

    grid: np.ndarray
    values: np.ndarray
    layout: tuple = field(default=None)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=complex)
        if g.ndim != 1 or g.size < 2 or np.any(np.diff(g) <= 0):
            raise ValueError("tabulated grid must be strictly increasing")
        if v.ndim != 3 or v.shape[0] != g.size or v.shape[1] != v.shape[2]:
            raise ValueError("values must have shape (len(grid), A, A)")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        if self.layout is None:
            object.__setattr__(self, "layout", (1,) * v.shape[1])
        elif sum(self.layout) != v.shape[1]:
            raise ValueError("layout does not match value matrix size")

    def _interp(self, t):
        A = self.values.shape[1]
        flat = t.ravel()
        out = np.empty((A, A, flat.size), dtype=complex)
        for a in range(A):
            for b in range(A):
                col = self.values[:, a, b]
                re = np.interp(flat, self.grid, col.real, left=0.0, right=0.0)
                im = np.interp(flat, self.grid, col.imag, left=0.0, right=0.0)
                out[a, b] = re + 1j * im
        return out.reshape((A, A) + t.shape)

    def response(self, t):
        t = np.asarray(t, dtype=float)
        out = self._interp(t)
        if self.grid[0] >= 0:
            neg = t < 0
            if np.any(neg):
                mirrored = np.conj(np.swapaxes(self._interp(-t), 0, 1))
                out = np.where(neg, mirrored, out)
        return out

    def zero_lag(self):
        return self.response(np.array(0.0))

    @property
    def correlation_time(self):
        return float(self.grid[-1] - max(self.grid[0], 0.0))

    @property
    def shortest_correlation_time(self):
        return float(np.min(np.diff(self.grid))) * 50.0

    def decays(self, rtol=1e-6):
        scale = np.abs(self.values).max()
        return scale == 0 or np.abs(self.values[-1]).max() <= rtol * scale


def eval_response(model, a, b, t):
    """Phi_ab(t) for channel indices ``a`` and ``b``."""
    i, j = model.flat_index(a), model.flat_index(b)
    out = model.response(np.asarray(t, dtype=float))[i, j]
    return complex(out) if np.ndim(out) == 0 else out


def spectral_density(model, a, b, omega):
    """Numerical G_ab(omega) from the response by trapezoid quadrature.

    The window is [-12 t_max, 12 t_max] with step t_min/50 (grid spacing for
    tabulated baths). Returns a real array when the result is real to rounding.
    """
    i, j = model.flat_index(a), model.flat_index(b)
    if isinstance(model, TabulatedBath):
        if not model.decays():
            raise NumericalRefusal("tabulated bath does not decay to zero at the end of its grid")
        half = max(abs(model.grid[0]), model.grid[-1])
        step = float(np.min(np.diff(model.grid)))
    else:
        half = 12.0 * model.correlation_time
        step = model.shortest_correlation_time / 50.0
    n = int(np.ceil(half / step))
    t = np.linspace(-n * step, n * step, 2 * n + 1)
    phi = model.response(t)[i, j]
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    integrand = phi[None, :] * np.exp(1j * np.outer(w, t))
    g = np.trapezoid(integrand, t, axis=1) / (2.0 * np.pi)
    scale = np.abs(g).max() if g.size else 0.0
    if scale == 0 or np.abs(g.imag).max() <= 1e-12 * max(scale, 1e-300):
        g = g.real
    return g.reshape(np.shape(omega)) if np.ndim(omega) else g[0]

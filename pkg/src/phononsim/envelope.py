"""
Temporal wavepackets on a uniform time grid and their spectra.

All times are in ns, so amplitudes carry units of ns^-1/2 and
``sum(|amp|**2) * dt`` is the excitation probability carried by the packet.
Spectra follow the convention ``u(w) = int u(t) exp(-i w t) dt`` with w in rad/ns.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

#: fraction of the norm that may fall outside a grid before we refuse
TRUNCATION_TOL = 1e-6


class TruncationError(ValueError):
    """A wavepacket (or schedule) does not fit on its time grid."""


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    dt: float
    n: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n < 2:
            raise ValueError(f"grid needs at least 2 samples, got {self.n}")

    @classmethod
    def default(cls) -> "TimeGrid":
        """0.5 ns steps over 1600 ns."""
        return cls(0.0, 0.5, 3200)

    @classmethod
    def spanning(cls, t_start: float, t_stop: float, dt: float) -> "TimeGrid":
        n = int(round((t_stop - t_start) / dt)) + 1
        return cls(t_start, dt, n)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (self.n - 1)

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Grid index of time ``t``; raises if ``t`` is not a grid point."""
        k = (t - self.t0) / self.dt
        kr = int(round(k))
        if abs(k - kr) > tol * max(1.0, abs(k)):
            raise ValueError(f"time {t} is not on the grid (dt={self.dt})")
        return kr

    def steps(self, duration: float, tol: float = 1e-9) -> int:
        """Number of grid steps in ``duration``; must be an integer multiple of dt."""
        k = duration / self.dt
        kr = int(round(k))
        if abs(k - kr) > tol * max(1.0, abs(k)):
            raise ValueError(f"duration {duration} ns is not a multiple of dt={self.dt}")
        return kr


@dataclass(eq=False)
class Envelope:
    grid: TimeGrid
    amp: np.ndarray

    def __post_init__(self):
        self.amp = np.asarray(self.amp, dtype=complex)
        if self.amp.shape != (self.grid.n,):
            raise ValueError(f"amplitude length {self.amp.shape} does not match grid n={self.grid.n}")
        if not np.all(np.isfinite(self.amp)):
            raise ValueError("envelope amplitudes must be finite")

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amp) ** 2) * self.grid.dt)

    def normalized(self) -> "Envelope":
        nrm = self.norm()
        if nrm == 0:
            raise ValueError("cannot normalize an all-zero envelope")
        return Envelope(self.grid, self.amp / np.sqrt(nrm))

    def fwhm(self) -> float:
        """Full width at half maximum of |amp| (amplitude, not intensity)."""
        mag = np.abs(self.amp)
        half = mag.max() / 2
        above = np.nonzero(mag >= half)[0]
        lo, hi = above[0], above[-1]
        t = self.times

        def cross(i, j):
            # linear interpolation of the half-maximum crossing between samples i and j
            return t[i] + (half - mag[i]) * (t[j] - t[i]) / (mag[j] - mag[i])

        left = cross(lo - 1, lo) if lo > 0 else t[lo]
        right = cross(hi, hi + 1) if hi < len(t) - 1 else t[hi]
        return float(right - left)

    def peak_time(self) -> float:
        return float(self.times[np.argmax(np.abs(self.amp))])


@dataclass(eq=False)
class SpectralAmplitude:
    """Spectrum of an envelope on a uniform (fft-ordered, then shifted) omega grid.

    ``grid`` is the time grid the spectrum was taken from and ``n_pad`` the
    transform length, so :func:`to_envelope` can undo the transform exactly.
    """
    omega: np.ndarray
    amp: np.ndarray
    grid: TimeGrid
    n_pad: int = field(default=0)

    @property
    def domega(self) -> float:
        return float(self.omega[1] - self.omega[0])

    def norm(self) -> float:
        return float(np.sum(np.abs(self.amp) ** 2) * self.domega / (2 * np.pi))


def make_sech(sigma: float, center: float, grid: TimeGrid | None = None) -> Envelope:
    """Normalized ``sech((t - center)/sigma)`` wavepacket.

    Raises
    ------
    TruncationError
        If more than ``TRUNCATION_TOL`` of the norm lies outside the grid.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    grid = grid or TimeGrid.default()
    x_lo = (grid.t0 - center) / sigma
    x_hi = (grid.t_end - center) / sigma
    inside = 0.5 * (np.tanh(x_hi) - np.tanh(x_lo))
    if inside < 1 - TRUNCATION_TOL:
        raise TruncationError(
            f"grid [{grid.t0}, {grid.t_end}] ns holds only {inside:.8f} of a sech "
            f"with sigma={sigma} centred at {center}"
        )
    amp = 1.0 / np.cosh((grid.times - center) / sigma)
    return Envelope(grid, amp).normalized()


def sech_spectrum(omega, sigma: float, center: float = 0.0) -> np.ndarray:
    """Closed-form transform of the normalized sech packet."""
    omega = np.asarray(omega, dtype=float)
    return (np.pi * sigma / np.sqrt(2 * sigma)) / np.cosh(np.pi * sigma * omega / 2) * np.exp(-1j * omega * center)


def sech_fwhm(sigma: float) -> float:
    """Amplitude FWHM of a sech packet, 2 arccosh(2) sigma."""
    return 2 * np.arccosh(2.0) * sigma


def _check_same_grid(a: Envelope, b: Envelope):
    if a.grid != b.grid:
        raise GridMismatchError(f"envelopes live on different grids: {a.grid} vs {b.grid}")


def overlap(a: Envelope, b: Envelope) -> complex:
    """Inner product <a|b> = sum conj(a) b dt."""
    _check_same_grid(a, b)
    return complex(np.vdot(a.amp, b.amp) * a.grid.dt)


def delay(e: Envelope, tau: float) -> Envelope:
    """Shift an envelope later in time by ``tau`` (an integer number of steps)."""
    k = e.grid.steps(tau)
    if k == 0:
        return Envelope(e.grid, e.amp.copy())
    out = np.zeros_like(e.amp)
    if k > 0:
        out[k:] = e.amp[:-k] if k < e.grid.n else []
        lost = e.amp[e.grid.n - k:] if k < e.grid.n else e.amp
    else:
        out[:k] = e.amp[-k:] if -k < e.grid.n else []
        lost = e.amp[:-k]
    lost_norm = float(np.sum(np.abs(lost) ** 2) * e.grid.dt)
    if lost_norm > TRUNCATION_TOL:
        raise TruncationError(f"delay by {tau} ns pushes {lost_norm:.3g} of the norm off the grid")
    return Envelope(e.grid, out)


def to_spectrum(e: Envelope, pad: int = 1) -> SpectralAmplitude:
    """Discrete version of ``u(w) = int u(t) exp(-i w t) dt``.

    ``pad`` zero-pads the transform to ``pad * n`` points, refining the omega grid.
    """
    n = e.grid.n * int(pad)
    dt = e.grid.dt
    buf = np.zeros(n, dtype=complex)
    buf[: e.grid.n] = e.amp
    omega = 2 * np.pi * np.fft.fftfreq(n, d=dt)
    amp = np.fft.fft(buf) * dt * np.exp(-1j * omega * e.grid.t0)
    order = np.argsort(omega, kind="stable")
    return SpectralAmplitude(omega[order], amp[order], e.grid, n)


def to_envelope(s: SpectralAmplitude) -> Envelope:
    """Inverse of :func:`to_spectrum`, back onto the original time grid."""
    grid = s.grid
    n = s.n_pad or len(s.omega)
    omega_fft = 2 * np.pi * np.fft.fftfreq(n, d=grid.dt)
    idx = np.argsort(omega_fft, kind="stable")
    spec_fft = np.empty(n, dtype=complex)
    spec_fft[idx] = s.amp
    spec_fft *= np.exp(1j * omega_fft * grid.t0)
    buf = np.fft.ifft(spec_fft) / grid.dt
    return Envelope(grid, buf[: grid.n])


def envelope_to_csv(e: Envelope, path) -> None:
    from ._io import write_csv

    rows = zip(e.times, e.amp.real, e.amp.imag)
    write_csv(path, ["t_ns", "re_amp", "im_amp"], rows)


def envelope_from_csv(path) -> Envelope:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        t, re, im = [], [], []
        for row in reader:
            t.append(float(row["t_ns"]))
            re.append(float(row["re_amp"]))
            im.append(float(row["im_amp"]))
    t = np.asarray(t)
    if len(t) < 2:
        raise ValueError(f"{path}: need at least two samples")
    dt = float(np.mean(np.diff(t)))
    if not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-9):
        raise ValueError(f"{path}: samples are not uniformly spaced")
    return Envelope(TimeGrid(float(t[0]), dt, len(t)), np.asarray(re) + 1j * np.asarray(im))

"""
Control synthesis for the nodes: coupler schedules kappa(t) for shaped
release and time-reversed capture, and the sideband drive that makes a
transmon absorb two phonons like a harmonic oscillator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_simpson

from .envelope import Envelope, TimeGrid, TruncationError
from .special import bessel_j, bisect_root

#: cumulative emission beyond 1 - CLIP_TOL switches the coupler off
CLIP_TOL = 1e-8


class InfeasibleScheduleError(ValueError):
    """The requested shape needs more coupling than the node can provide."""

    def __init__(self, required: float, cap: float):
        self.required = required
        self.cap = cap
        self.deficit = required - cap
        super().__init__(
            f"schedule needs kappa up to {required:.6g} rad/ns but the cap is {cap:.6g} "
            f"(short by {self.deficit:.3g})"
        )


@dataclass(eq=False)
class CouplerSchedule:
    grid: TimeGrid
    kappa: np.ndarray
    #: probability left in the node when the schedule was clipped
    residual: float = 0.0

    def __post_init__(self):
        self.kappa = np.asarray(self.kappa, dtype=float)
        if self.kappa.shape != (self.grid.n,):
            raise ValueError("kappa must have one value per grid point")
        if np.any(self.kappa < 0) or not np.all(np.isfinite(self.kappa)):
            raise ValueError("kappa must be finite and non-negative")

    @classmethod
    def off(cls, grid: TimeGrid) -> "CouplerSchedule":
        return cls(grid, np.zeros(grid.n))

    @classmethod
    def constant(cls, grid: TimeGrid, kappa: float, t_on: float | None = None, t_off: float | None = None):
        t = grid.times
        mask = np.ones(grid.n, dtype=bool)
        if t_on is not None:
            mask &= t >= t_on - 1e-9
        if t_off is not None:
            mask &= t <= t_off + 1e-9
        return cls(grid, np.where(mask, float(kappa), 0.0))

    @property
    def peak(self) -> float:
        return float(self.kappa.max())

    def scaled(self, factor: float) -> "CouplerSchedule":
        return CouplerSchedule(self.grid, self.kappa * factor, self.residual)

    def __add__(self, other: "CouplerSchedule") -> "CouplerSchedule":
        if other.grid != self.grid:
            raise ValueError("cannot add schedules on different grids")
        return CouplerSchedule(self.grid, self.kappa + other.kappa, self.residual + other.residual)

    def to_csv(self, path) -> None:
        from ._io import write_csv

        write_csv(path, ["t_ns", "kappa_rad_per_ns"], zip(self.grid.times, self.kappa))


def _tail_probability(p: np.ndarray, dt: float) -> np.ndarray:
    """``int_t^inf p`` on the grid, Simpson-accurate, with a geometric estimate
    of whatever lies beyond the last sample."""
    rev = p[::-1]
    tail = cumulative_simpson(rev, dx=dt, initial=0.0)[::-1]
    if len(p) > 2 and p[-1] > 0 and p[-2] > p[-1]:
        rate = math.log(p[-2] / p[-1]) / dt
        tail = tail + p[-1] / rate
    return tail


def emission_schedule(target: Envelope, kappa_cap: float = math.inf, clip: float = CLIP_TOL) -> CouplerSchedule:
    """Coupling that releases an excitation into the shape ``target``.

    kappa(t) = |u(t)|^2 / (1 - int_{-inf}^t |u|^2). Once the node has emitted
    all but ``clip`` of its population the coupler is switched off and the
    remainder is reported as ``residual``.
    """
    p = np.abs(target.amp) ** 2
    tail = _tail_probability(p, target.grid.dt)
    total = tail[0] + 0.0
    remaining = tail / total
    kappa = np.zeros_like(p)
    live = remaining > clip
    kappa[live] = p[live] / total / remaining[live]
    residual = float(remaining[~live][0]) if np.any(~live) else float(remaining[-1])
    sched = CouplerSchedule(target.grid, kappa, residual)
    if sched.peak > kappa_cap * (1 + 1e-6):
        raise InfeasibleScheduleError(sched.peak, kappa_cap)
    return sched


def sech_emission_kappa(t, sigma: float, center: float = 0.0) -> np.ndarray:
    """Closed-form release schedule for a sech packet: (1 + tanh((t-c)/sigma)) / sigma."""
    return (1 + np.tanh((np.asarray(t, dtype=float) - center) / sigma)) / sigma


def catch_schedule(release: CouplerSchedule, t_mirror: float, tol: float = 1e-6) -> CouplerSchedule:
    """Time reversal of ``release`` about ``t_mirror``.

    Coupling that would land off the grid is dropped if its integrated area
    is below ``tol``; otherwise :class:`TruncationError` is raised.
    """
    grid = release.grid
    t = grid.times
    src = 2 * t_mirror - t
    kappa = np.interp(src, t, release.kappa, left=0.0, right=0.0)
    # coupling of the release that has no image on the grid
    image = 2 * t_mirror - t
    outside = (image < grid.t0 - 1e-9) | (image > grid.t_end + 1e-9)
    lost = float(np.sum(release.kappa[outside]) * grid.dt)
    if lost > tol:
        raise TruncationError(f"reversed schedule leaves the grid (lost coupling area {lost:.3g})")
    return CouplerSchedule(grid, kappa, release.residual)


@dataclass(frozen=True)
class ModulationDrive:
    omega_mod: float
    delta_amp: float
    #: drive phase; the time-reversed drive uses the negated phase
    phase: float = 0.0

    def __post_init__(self):
        if not self.omega_mod > 0:
            raise ValueError("modulation frequency must be positive")

    @property
    def ratio(self) -> float:
        return self.delta_amp / self.omega_mod

    def conjugate(self) -> "ModulationDrive":
        return ModulationDrive(self.omega_mod, self.delta_amp, -self.phase)


@dataclass(frozen=True)
class LadderCoefficients:
    c_ge: complex
    c_ef: complex

    def __post_init__(self):
        if abs(self.c_ge) > 1 + 1e-12 or abs(self.c_ef) > math.sqrt(2) + 1e-12:
            raise ValueError(f"ladder coefficients out of range: {self.c_ge}, {self.c_ef}")


#: bare transmon ladder; the e-f branch is off resonance with the carrier
UNMODULATED = LadderCoefficients(1.0, 0.0)


@lru_cache(maxsize=None)
def bessel_balance_ratio() -> float:
    """Smallest positive x with J0(x) = J1(x) (about 1.4347)."""
    return bisect_root(lambda x: bessel_j(0, x) - bessel_j(1, x), 0.5, 2.4)


def modulation_for(chi: float, ratio: float | None = None, phase: float = 0.0) -> ModulationDrive:
    """Drive at the anharmonicity with amplitude set for a harmonic ladder."""
    if not chi > 0:
        raise ValueError("anharmonicity must be positive")
    ratio = bessel_balance_ratio() if ratio is None else ratio
    return ModulationDrive(chi, ratio * chi, phase)


def ladder_coefficients(d: ModulationDrive | None) -> LadderCoefficients:
    if d is None:
        return UNMODULATED
    x = d.ratio
    c_ef = math.sqrt(2) * bessel_j(1, x) * np.exp(-1j * d.phase)
    return LadderCoefficients(complex(bessel_j(0, x)), complex(c_ef))

"""
Frequency-domain theory of a single phonon reflecting off a coupled qubit.

The qubit acts as an all-pass filter on the reflected spectrum; the overlap
between incoming and reflected packets gives the scattering phase and the
pulse distortion.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .envelope import Envelope, SpectralAmplitude, to_spectrum

TWO_PI = 2 * math.pi


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScatterParams:
    kappa_max: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.kappa_max > 0:
            raise ValueError(f"kappa_max must be positive, got {self.kappa_max}")


@dataclass(frozen=True)
class ScatterResult:
    phase: float
    distortion: float
    overlap: complex
    delta: float = 0.0

    @classmethod
    def from_overlap(cls, ov: complex, delta: float = 0.0) -> "ScatterResult":
        return cls(float(np.angle(ov) % TWO_PI), float(1 - abs(ov)), complex(ov), delta)


def reflection_coefficient(omega, p: ScatterParams):
    """r(w) = (i(w - D) + k/2) / (i(w - D) - k/2); unit modulus everywhere."""
    x = 1j * (np.asarray(omega, dtype=float) - p.delta)
    half = 0.5 * p.kappa_max
    return (x + half) / (x - half)


def monochromatic_phase(delta: float, kappa: float) -> float:
    """Phase of r(0): pi - 2 arctan(2 delta / kappa), wrapped to [0, 2 pi)."""
    return (math.pi - 2 * math.atan(2 * delta / kappa)) % TWO_PI


def apply_filter(s: SpectralAmplitude, p: ScatterParams) -> SpectralAmplitude:
    return SpectralAmplitude(s.omega.copy(), s.amp * reflection_coefficient(s.omega, p), s.grid, s.n_pad)


def _overlap_sum(u: Envelope, p: ScatterParams, pad: int) -> complex:
    s = to_spectrum(u, pad=pad)
    w = np.abs(s.amp) ** 2
    return complex(np.sum(w * reflection_coefficient(s.omega, p)) * s.domega / TWO_PI)


def _min_pad(u: Envelope, kappa: float) -> int:
    # the reflected tail rings for ~1/kappa; leave room for ~40 decay times
    span = u.grid.n * u.grid.dt
    need = span + 80.0 / kappa
    return max(2, int(math.ceil(need / span)))


def scattering_overlap(u: Envelope, p: ScatterParams, tol: float = 1e-8) -> ScatterResult:
    """<u|v> for the reflected packet, by trapezoid sums on the DFT grid.

    The sum is repeated with twice the zero padding; if the two disagree by
    more than ``tol`` the result is not trusted and :class:`QuadratureError`
    is raised.
    """
    pad = _min_pad(u, p.kappa_max)
    coarse = _overlap_sum(u, p, pad)
    fine = _overlap_sum(u, p, 2 * pad)
    err = abs(fine - coarse)
    if not err <= tol:
        raise QuadratureError(f"overlap quadrature did not converge (change {err:.3g} > {tol:g})")
    norm = u.norm()
    return ScatterResult.from_overlap(fine / norm, p.delta)


def unwrap_nearest(phases: Sequence[float]) -> np.ndarray:
    """Continue each phase onto the branch nearest the previous value."""
    out = np.array(phases, dtype=float)
    for i in range(1, len(out)):
        out[i] = out[i - 1] + ((out[i] - out[i - 1] + math.pi) % TWO_PI - math.pi)
    return out


def detuning_sweep(u: Envelope, kappa: float, deltas: Sequence[float], tol: float = 1e-8) -> list[ScatterResult]:
    """Scatter ``u`` at each detuning. Phases in the returned list are unwrapped
    along the sweep (the first point lies in [0, 2 pi))."""
    deltas = list(deltas)
    if not deltas:
        return []
    res = [scattering_overlap(u, ScatterParams(kappa, d), tol) for d in deltas]
    phases = unwrap_nearest([r.phase for r in res])
    return [ScatterResult(float(ph), r.distortion, r.overlap, r.delta) for ph, r in zip(phases, res)]


def phase_crossing(u: Envelope, kappa: float, target: float, bracket: tuple[float, float], xtol: float = 1e-10) -> float:
    """Detuning at which the scattering phase equals ``target`` (mod 2 pi).

    ``bracket`` must enclose a single crossing.
    """
    from scipy.optimize import brentq

    def f(d):
        ph = scattering_overlap(u, ScatterParams(kappa, d)).phase
        return (ph - target + math.pi) % TWO_PI - math.pi

    return float(brentq(f, *bracket, xtol=xtol))


def sweep_to_csv(results: Sequence[ScatterResult], path) -> None:
    from ._io import write_csv

    rows = ((r.delta / TWO_PI * 1e3, r.phase, r.distortion) for r in results)
    write_csv(path, ["delta_MHz", "phase_rad", "distortion"], rows)


def mhz_to_rad_per_ns(f_mhz):
    return np.asarray(f_mhz, dtype=float) * TWO_PI * 1e-3


def rad_per_ns_to_mhz(w):
    return np.asarray(w, dtype=float) / TWO_PI * 1e3

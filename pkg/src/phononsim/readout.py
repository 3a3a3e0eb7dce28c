"""
Measurement layer: confusion matrices, inversion, thermal floor and the
interference visibilities.

Matrices are column-stochastic, ``P_meas = C @ P_true``; a column is the
outcome distribution for one prepared state.  Tables published with one row
per prepared state are therefore stored transposed.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

#: largest condition number accepted by :func:`correct`
MAX_CONDITION = 1e6
COLUMN_TOL = 1e-6


class IllConditionedError(ValueError):
    pass


class ConfusionError(ValueError):
    pass


_UNC = re.compile(r"^\s*([-+]?\d*\.?\d+)(?:\((\d+)\))?\s*$")


def parse_uncertain(text: str) -> tuple[float, float]:
    """'0.090(3)' -> (0.090, 0.003); the digits in brackets count in the last
    quoted decimal place.  A bare number has zero uncertainty."""
    m = _UNC.match(text)
    if not m:
        raise ValueError(f"cannot parse {text!r}")
    val, unc = m.groups()
    if unc is None:
        return float(val), 0.0
    decimals = len(val.split(".")[1]) if "." in val else 0
    return float(val), int(unc) * 10.0 ** (-decimals)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    entries: np.ndarray
    #: per-entry standard deviations, same orientation as ``entries``
    sigma: np.ndarray | None = None
    #: outcomes per node, e.g. (2, 2) or (3, 3)
    dims: tuple[int, ...] = ()

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise ConfusionError(f"confusion matrix must be square, got shape {e.shape}")
        object.__setattr__(self, "entries", e)
        if self.sigma is not None:
            s = np.array(self.sigma, dtype=float)
            if s.shape != e.shape:
                raise ConfusionError("sigma must match the entries in shape")
            object.__setattr__(self, "sigma", s)
        dims = tuple(self.dims) or (e.shape[0],)
        if math.prod(dims) != e.shape[0]:
            raise ConfusionError(f"dims {dims} do not multiply to {e.shape[0]}")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_rows(cls, rows, dims: Sequence[int] = ()) -> "ConfusionMatrix":
        """Build from a table with one row per prepared state.  Entries may be
        numbers or strings with bracketed uncertainties."""
        vals = [[parse_uncertain(x) if isinstance(x, str) else (float(x), 0.0) for x in r] for r in rows]
        e = np.array([[v for v, _ in r] for r in vals])
        s = np.array([[u for _, u in r] for r in vals])
        return cls(e.T, s.T if np.any(s) else None, tuple(dims))

    @classmethod
    def identity(cls, n: int, dims: Sequence[int] = ()) -> "ConfusionMatrix":
        return cls(np.eye(n), None, tuple(dims))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def condition(self) -> float:
        return float(np.linalg.cond(self.entries))

    def column_tolerance(self) -> np.ndarray:
        """Allowed deviation of each column sum from 1: the quoted
        uncertainties added in quadrature, or COLUMN_TOL without them."""
        if self.sigma is None:
            return np.full(self.dim, COLUMN_TOL)
        return np.maximum(np.sqrt(np.sum(self.sigma ** 2, axis=0)), COLUMN_TOL)

    def violations(self) -> list[str]:
        out = []
        if np.any(self.entries < 0):
            out.append("negative entries")
        dev = np.abs(self.entries.sum(axis=0) - 1)
        tol = self.column_tolerance()
        for k in np.nonzero(dev > tol)[0]:
            out.append(f"column {k} sums to {1 + dev[k]:.6g} (allowed deviation {tol[k]:.3g})")
        if not np.isfinite(self.condition):
            out.append("singular")
        return out

    def validate(self) -> "ConfusionMatrix":
        v = self.violations()
        if v:
            raise ConfusionError("; ".join(v))
        return self


def apply(c: ConfusionMatrix, p_true) -> np.ndarray:
    p = np.asarray(p_true, dtype=float)
    if p.shape != (c.dim,):
        raise ConfusionError(f"vector of length {p.shape} does not match a {c.dim}-outcome matrix")
    return c.entries @ p


def correct(c: ConfusionMatrix, p_meas, clip: bool = False) -> np.ndarray:
    """Invert the readout.  Negative entries are kept unless ``clip`` is set,
    in which case the result is clipped at 0 and renormalized."""
    p = np.asarray(p_meas, dtype=float)
    if p.shape != (c.dim,):
        raise ConfusionError(f"vector of length {p.shape} does not match a {c.dim}-outcome matrix")
    cond = c.condition
    if cond > MAX_CONDITION:
        raise IllConditionedError(f"condition number {cond:.3g} exceeds {MAX_CONDITION:g}")
    out = np.linalg.solve(c.entries, p)
    if clip:
        out = np.clip(out, 0.0, None)
        out = out * (p.sum() / out.sum())
    return out


def tensor(c1: ConfusionMatrix, c2: ConfusionMatrix) -> ConfusionMatrix:
    """Joint readout of independent nodes, node 1 as the slow index."""
    sigma = None
    if c1.sigma is not None or c2.sigma is not None:
        s1 = c1.sigma if c1.sigma is not None else np.zeros_like(c1.entries)
        s2 = c2.sigma if c2.sigma is not None else np.zeros_like(c2.entries)
        # first-order propagation for a product of independent entries
        sigma = np.sqrt(np.kron(s1, c2.entries) ** 2 + np.kron(c1.entries, s2) ** 2)
    return ConfusionMatrix(np.kron(c1.entries, c2.entries), sigma, c1.dims + c2.dims)


def load_json(path) -> ConfusionMatrix:
    with open(path) as fh:
        doc = json.load(fh)
    return from_dict(doc)


def from_dict(doc: dict) -> ConfusionMatrix:
    rows = doc["entries"]
    dims = tuple(doc.get("dims", ()))
    if doc.get("rows_are_prepared", True):
        return ConfusionMatrix.from_rows(rows, dims)
    c = ConfusionMatrix.from_rows(rows, dims)
    return ConfusionMatrix(c.entries.T, None if c.sigma is None else c.sigma.T, c.dims)


# Published calibration tables, one row per prepared state.
TWO_QUBIT_ROWS = (
    ("0.988(1)", "0.006(1)", "0.006(1)", "0.00002(6)"),
    ("0.050(3)", "0.944(4)", "0.0002(2)", "0.006(1)"),
    ("0.082(3)", "0.0005(2)", "0.912(3)", "0.005(1)"),
    ("0.005(1)", "0.090(3)", "0.045(3)", "0.861(5)"),
)
QUTRIT1_ROWS = (
    ("0.983(1)", "0.017(1)", "0.0003(2)"),
    ("0.104(9)", "0.884(9)", "0.011(1)"),
    ("0.028(3)", "0.108(7)", "0.864(7)"),
)
QUTRIT2_ROWS = (
    ("0.988(1)", "0.010(1)", "0.0016(6)"),
    ("0.10(3)", "0.90(3)", "0.003(2)"),
    ("0.020(3)", "0.079(4)", "0.901(5)"),
)


def two_qubit_matrix() -> ConfusionMatrix:
    """Outcome order gg, ge, eg, ee."""
    return ConfusionMatrix.from_rows(TWO_QUBIT_ROWS, (2, 2))


def qutrit_matrices() -> tuple[ConfusionMatrix, ConfusionMatrix]:
    return ConfusionMatrix.from_rows(QUTRIT1_ROWS, (3,)), ConfusionMatrix.from_rows(QUTRIT2_ROWS, (3,))


def two_qutrit_matrix() -> ConfusionMatrix:
    return tensor(*qutrit_matrices())


# -- joint tables -----------------------------------------------------------------

def table_to_vector(P, levels: int = 3) -> np.ndarray:
    """Flatten a joint {g,e,f}^2 table in node-1-major order over the first
    ``levels`` levels of each node."""
    P = np.asarray(P, dtype=float)
    return P[:levels, :levels].reshape(-1)


def vector_to_table(v, levels: int = 3) -> np.ndarray:
    P = np.zeros((3, 3))
    P[:levels, :levels] = np.asarray(v, dtype=float).reshape(levels, levels)
    return P


def inject_thermal_floor(P, p_th) -> np.ndarray:
    """Each node independently flips g -> e with probability ``p_th``
    (a scalar or one value per node)."""
    p1, p2 = (p_th, p_th) if np.isscalar(p_th) else p_th
    P = np.asarray(P, dtype=float)

    def flip(p):
        return np.array([[1 - p, 0, 0], [p, 1, 0], [0, 0, 1]])

    return flip(p1) @ P @ flip(p2).T


def floor_p_th(P, floor: float) -> float:
    """Per-node flip probability that lifts P_ee of table ``P`` to ``floor``.

    P_ee' = P_ee + p (P_eg + P_ge) + p^2 P_gg, solved for p >= 0.
    """
    P = np.asarray(P, dtype=float)
    a, b, c = P[0, 0], P[1, 0] + P[0, 1], P[1, 1] - floor
    if c >= 0:
        return 0.0
    den = b + math.sqrt(b * b - 4 * a * c)
    if den == 0:
        raise ValueError("no ground-state population to lift")
    # root of a p^2 + b p + c written to avoid cancellation when a is small
    return -2 * c / den


# -- metrics ----------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    v_hom: float | None = None
    v_mz: float | None = None
    v_ee: float | None = None
    n_mean: tuple[float, float] | None = None

    def __post_init__(self):
        for name in ("v_hom", "v_mz", "v_ee"):
            v = getattr(self, name)
            if v is not None and not -1e-12 <= v <= 1 + 1e-12:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        if self.n_mean is not None and not all(-1e-12 <= n <= 2 + 1e-12 for n in self.n_mean):
            raise ValueError(f"n_mean {self.n_mean} outside [0, 2]")

    def as_dict(self) -> dict:
        return {
            "v_hom": self.v_hom, "v_mz": self.v_mz, "v_ee": self.v_ee,
            "n_mean": None if self.n_mean is None else list(self.n_mean),
        }


@dataclass(frozen=True)
class Extrema:
    value_max: float
    value_min: float
    at_max: float
    at_min: float


def extrema(values, coords=None) -> Extrema:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("empty sweep")
    c = np.arange(v.size) if coords is None else np.asarray(coords, dtype=float)
    i, j = int(np.argmax(v)), int(np.argmin(v))
    return Extrema(float(v[i]), float(v[j]), float(c[i]), float(c[j]))


def v_hom(p_ee) -> float:
    """(max - min) / max of a P_ee(tau) sweep."""
    e = extrema(p_ee)
    return (e.value_max - e.value_min) / e.value_max


def v_mz(p) -> float:
    """(max - min) / (max + min) of a routing sweep."""
    e = extrema(p)
    return (e.value_max - e.value_min) / (e.value_max + e.value_min)


#: the two-phonon fringe uses the same contrast as the routing fringe
v_ee = v_mz


def floor_limited_visibility(p_max: float, p_floor: float) -> float:
    return (p_max - p_floor) / (p_max + p_floor)


def n_mean(p_e: float, p_f: float) -> float:
    return p_e + 2 * p_f

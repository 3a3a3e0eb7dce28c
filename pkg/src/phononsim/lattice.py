"""
Time-bin propagator for two acoustic arms joined by a beamsplitter, with a
qubit or qutrit behind a tunable coupler at the far end of each arm.

Geometry
--------
Each arm is a closed loop of ``2*d`` bins (``d`` = one-way delay in steps):
a bin leaves the beamsplitter at position 0, meets the node at position
``d`` and is back at the beamsplitter at position ``2d-1``.  Bins never
move in memory; a ring offset advancing once per step does the propagation.
Mode indices are::

    [0, LA)          arm A (left, node 1)
    [LA, LA+LB)      arm B (right, node 2)
    N-2, N-1         node 1, node 2

State
-----
Amplitudes are kept exactly in the vacuum, one- and two-excitation sectors.
The two-excitation part is a symmetric matrix ``A`` with
``|psi2> = 2**-0.5 * sum_ij A_ij a_i^+ a_j^+ |0>`` so that ``sum |A|^2`` is its
norm and a linear mode map ``U`` acts as ``U A U^T``.  A node's ``|f>`` amplitude
is ``A[n, n]``; ``|e>`` plus a phonon in mode ``j`` has amplitude ``sqrt(2) A[n, j]``.
The one-excitation part is a matrix whose column 0 is the coherent amplitude
vector; further columns hold sampled jump trajectories in ``jump`` loss mode.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .envelope import Envelope, TimeGrid
from .pulse import CouplerSchedule, LadderCoefficients, ModulationDrive, UNMODULATED, ladder_coefficients

SQRT2 = math.sqrt(2.0)
LEVELS = ("g", "e", "f")
JOINT_LABELS = ("gg", "ge", "eg", "ee", "gf", "fg")
#: jump events lighter than this are not sampled
JUMP_FLOOR = 1e-14


class TopologyError(ValueError):
    pass


class NumericalInstabilityError(RuntimeError):
    pass


def _kron_ladder_bare() -> LadderCoefficients:
    return LadderCoefficients(1.0, SQRT2)


@dataclass(frozen=True)
class NodeParams:
    levels: int = 2
    detuning: float = 0.0
    #: per-sample detuning on the evolution grid; overrides ``detuning``
    detuning_profile: np.ndarray | None = None
    chi: float = 0.0
    kappa_max: float = math.inf
    schedule: CouplerSchedule | None = None
    modulation: ModulationDrive | None = None
    t1_e: float = math.inf
    t1_f: float = math.inf
    #: integrate the cos(Omega t) level modulation explicitly with the bare
    #: ladder instead of using the effective one; needs dt <= period / 40
    full_modulation: bool = False

    def __post_init__(self):
        if self.levels not in (2, 3):
            raise ValueError(f"levels must be 2 or 3, got {self.levels}")
        if self.modulation is not None and self.levels != 3:
            raise ValueError("modulation needs a 3-level node")
        if not (self.t1_e > 0 and self.t1_f > 0):
            raise ValueError("lifetimes must be positive (use inf for none)")
        if not self.kappa_max > 0:
            raise ValueError("kappa_max must be positive")
        if self.schedule is not None and self.schedule.peak > self.kappa_max * (1 + 1e-9):
            raise ValueError(
                f"schedule peak {self.schedule.peak:.6g} exceeds kappa_max {self.kappa_max:.6g}"
            )
        if self.full_modulation and self.modulation is None:
            raise ValueError("full_modulation needs a modulation drive")

    def ladder(self) -> LadderCoefficients:
        if self.levels == 2:
            return UNMODULATED
        if self.full_modulation:
            return _kron_ladder_bare()
        return ladder_coefficients(self.modulation)


@dataclass(frozen=True)
class Topology:
    dt: float
    arm_delay_left: float
    arm_delay_right: float
    bs_t: float = 1 / SQRT2
    bs_r: float = 1 / SQRT2
    arm_phase: float = 0.0
    #: intensity transmission per beamsplitter pass
    link_efficiency: float = 1.0

    @property
    def d_left(self) -> int:
        return int(round(self.arm_delay_left / self.dt))

    @property
    def d_right(self) -> int:
        return int(round(self.arm_delay_right / self.dt))

    @property
    def arm_lengths(self) -> tuple[int, int]:
        return 2 * self.d_left, 2 * self.d_right

    @property
    def n_modes(self) -> int:
        la, lb = self.arm_lengths
        return la + lb + 2

    @property
    def node_modes(self) -> tuple[int, int]:
        la, lb = self.arm_lengths
        return la + lb, la + lb + 1

    def bs_matrix(self) -> np.ndarray:
        """Symmetric convention: t real, r = i|r|."""
        return np.array([[1j * self.bs_r, self.bs_t], [self.bs_t, 1j * self.bs_r]])

    def side_of(self) -> np.ndarray:
        """0 for modes on the node-1 side, 1 for the node-2 side."""
        la, lb = self.arm_lengths
        side = np.zeros(self.n_modes, dtype=int)
        side[la:la + lb] = 1
        side[self.node_modes[1]] = 1
        return side


def _grid_steps(value: float, dt: float, what: str) -> int:
    k = value / dt
    kr = int(round(k))
    if abs(k - kr) > 1e-9 * max(1.0, abs(k)):
        raise TopologyError(f"{what} = {value} ns is not a multiple of dt = {dt} ns")
    return kr


def build(dt: float, arm_delay_left: float, arm_delay_right: float, bs_t: float = 1 / SQRT2,
          bs_r: float = 1 / SQRT2, arm_phase: float = 0.0, link_efficiency: float = 1.0) -> Topology:
    """Validate and assemble a :class:`Topology`."""
    if not dt > 0:
        raise TopologyError("dt must be positive")
    if bs_t < 0 or bs_r < 0:
        raise TopologyError("beamsplitter amplitudes are magnitudes and must be non-negative")
    if abs(bs_t ** 2 + bs_r ** 2 - 1) > 1e-12:
        raise TopologyError(f"beamsplitter is not unitary: |t|^2 + |r|^2 = {bs_t ** 2 + bs_r ** 2:.12g}")
    for name, val in (("arm_delay_left", arm_delay_left), ("arm_delay_right", arm_delay_right)):
        if _grid_steps(val, dt, name) < 1:
            raise TopologyError(f"{name} must be at least one step")
    if not 0 <= link_efficiency <= 1:
        raise TopologyError("link_efficiency must lie in [0, 1]")
    return Topology(dt, arm_delay_left, arm_delay_right, bs_t, bs_r, arm_phase, link_efficiency)


@dataclass(eq=False)
class FewExcState:
    n_modes: int
    ones: np.ndarray
    pair: np.ndarray | None = None
    c0: complex = 0j
    weights: np.ndarray = field(default_factory=lambda: np.ones(1))
    #: norm removed by damping in leak mode (or by 1->0 jumps of column 0)
    leaked: float = 0.0
    #: total weight handed to sampled jump trajectories
    jumped: float = 0.0
    #: coherent one-excitation norm that decayed to vacuum in jump mode
    vacuum: float = 0.0
    step: int = 0

    @classmethod
    def empty(cls, topology: Topology) -> "FewExcState":
        n = topology.n_modes
        return cls(n, np.zeros((n, 1), dtype=complex), None, 1.0 + 0j)

    @classmethod
    def nodes_excited(cls, topology: Topology, which: Sequence[int]) -> "FewExcState":
        """Nodes listed in ``which`` (0 and/or 1) start in |e>; listing a node twice puts it in |f>."""
        n = topology.n_modes
        modes = [topology.node_modes[k] for k in which]
        st = cls(n, np.zeros((n, 1), dtype=complex))
        if len(modes) == 1:
            st.ones[modes[0], 0] = 1.0
        elif len(modes) == 2:
            st.pair = np.zeros((n, n), dtype=complex)
            i, j = modes
            if i == j:
                st.pair[i, i] = 1.0
            else:
                st.pair[i, j] = st.pair[j, i] = 1 / SQRT2
        else:
            raise ValueError("one or two excitations are supported")
        return st

    def copy(self) -> "FewExcState":
        return FewExcState(
            self.n_modes, self.ones.copy(), None if self.pair is None else self.pair.copy(),
            self.c0, self.weights.copy(), self.leaked, self.jumped, self.vacuum, self.step,
        )

    def coherent_norm(self) -> float:
        nrm = abs(self.c0) ** 2 + float(np.vdot(self.ones[:, 0], self.ones[:, 0]).real)
        if self.pair is not None:
            nrm += float(np.vdot(self.pair, self.pair).real)
        return nrm


def populations(state: FewExcState, topology: Topology) -> np.ndarray:
    """Joint node table ``P[a, b]`` over {g, e, f}^2, channel bins traced out.

    Norm that sits in the channel counts toward whichever node levels
    accompany it, so phonons in flight land in the ``g`` rows and columns.
    """
    n1, n2 = topology.node_modes
    P = np.zeros((3, 3))
    w = state.weights
    B = state.ones
    p1 = float(np.dot(w, np.abs(B[n1]) ** 2))
    p2 = float(np.dot(w, np.abs(B[n2]) ** 2))
    P[1, 0] += p1
    P[0, 1] += p2
    if state.pair is not None:
        A = state.pair
        ff1 = abs(A[n1, n1]) ** 2
        ff2 = abs(A[n2, n2]) ** 2
        ee = 2 * abs(A[n1, n2]) ** 2
        r1 = 2 * float(np.vdot(A[n1], A[n1]).real) - 2 * ff1 - ee
        r2 = 2 * float(np.vdot(A[n2], A[n2]).real) - 2 * ff2 - ee
        P[2, 0] += ff1
        P[0, 2] += ff2
        P[1, 1] += ee
        P[1, 0] += r1
        P[0, 1] += r2
    total = 1.0 - state.leaked
    P[0, 0] = total - P.sum()
    return np.clip(P, 0.0, 1.0)


def side_populations(state: FewExcState, topology: Topology) -> np.ndarray:
    """Phonon count on each side of the beamsplitter (node plus its arm),
    tabulated like :func:`populations` with 0/1/2 phonons read as g/e/f."""
    side = topology.side_of()
    left = side == 0
    right = ~left
    P = np.zeros((3, 3))
    w = state.weights
    pl = float(np.dot(w, np.sum(np.abs(state.ones[left]) ** 2, axis=0)))
    pr = float(np.dot(w, np.sum(np.abs(state.ones[right]) ** 2, axis=0)))
    P[1, 0] += pl
    P[0, 1] += pr
    if state.pair is not None:
        a2 = np.abs(state.pair) ** 2
        P[2, 0] += float(a2[np.ix_(left, left)].sum())
        P[0, 2] += float(a2[np.ix_(right, right)].sum())
        P[1, 1] += 2 * float(a2[np.ix_(left, right)].sum())
    P[0, 0] = (1.0 - state.leaked) - P.sum()
    return np.clip(P, 0.0, 1.0)


@dataclass(eq=False)
class TraceRecord:
    times: np.ndarray
    joint: np.ndarray
    loss: np.ndarray
    #: optional beamsplitter-side photon-count table taken at ``side_time``
    side: np.ndarray | None = None
    side_time: float | None = None
    #: amplitude (column 0) of the bin leaving each recorded node, per step
    outgoing: dict = field(default_factory=dict)

    def P(self, label: str) -> np.ndarray:
        a, b = (LEVELS.index(c) for c in label)
        return self.joint[:, a, b]

    def p_level(self, node: int, level: str) -> np.ndarray:
        k = LEVELS.index(level)
        return self.joint[:, k, :].sum(axis=1) if node == 0 else self.joint[:, :, k].sum(axis=1)

    def n_mean(self, node: int) -> np.ndarray:
        return self.p_level(node, "e") + 2 * self.p_level(node, "f")

    @property
    def final(self) -> np.ndarray:
        return self.joint[-1]

    def rows(self):
        for k, t in enumerate(self.times):
            J = self.joint[k]
            yield (
                t, J[1].sum(), J[2].sum(), J[:, 1].sum(), J[:, 2].sum(),
                J[0, 0], J[0, 1], J[1, 0], J[1, 1], J[0, 2], J[2, 0],
                J[1].sum() + 2 * J[2].sum(), J[:, 1].sum() + 2 * J[:, 2].sum(), self.loss[k],
            )

    def to_csv(self, path) -> None:
        from ._io import write_csv

        header = ["t_ns", "P1_e", "P1_f", "P2_e", "P2_f", "P_gg", "P_ge", "P_eg", "P_ee",
                  "P_gf", "P_fg", "n1", "n2", "loss"]
        write_csv(path, header, self.rows())


def exchange_angle(kappa: float, dt: float) -> float:
    """Collision angle that makes a bare node decay as exp(-kappa dt / 2) per step."""
    return math.acos(math.exp(-0.5 * kappa * dt)) if kappa > 0 else 0.0


@lru_cache(maxsize=4096)
def _chain_cached(theta: float, couplings: tuple) -> np.ndarray:
    return _chain_unitary(theta, couplings)


def _chain_unitary(theta: float, couplings: Sequence[complex]) -> np.ndarray:
    """exp(theta G) for G = M - M^+, M the lowering chain with M[k+1, k] = couplings[k].

    G^3 = -w^2 G, so the exponential has a three-term closed form.
    """
    m = len(couplings) + 1
    G = np.zeros((m, m), dtype=complex)
    for k, c in enumerate(couplings):
        G[k + 1, k] = c
        G[k, k + 1] = -np.conj(c)
    w = math.sqrt(sum(abs(c) ** 2 for c in couplings))
    if w == 0 or theta == 0:
        return np.eye(m, dtype=complex)
    x = w * theta
    return np.eye(m) + (math.sin(x) / w) * G + ((1 - math.cos(x)) / w ** 2) * (G @ G)


class _Engine:
    """Mutable evolution kernel. All heavy arrays belong to ``state`` and are
    updated in place."""

    def __init__(self, topology: Topology, state: FewExcState, loss_mode: str, n_traj: int, rng):
        self.top = topology
        self.st = state
        self.jump = loss_mode == "jump"
        self.rng = rng
        self.n_traj = n_traj
        self.slots = None
        if self.jump and state.pair is not None and n_traj > 0:
            n = state.n_modes
            existing = state.ones.shape[1]
            if existing == 1:
                state.ones = np.concatenate([state.ones, np.zeros((n, n_traj), dtype=complex)], axis=1)
                state.weights = np.concatenate([state.weights, np.zeros(n_traj)])
            self.slots = np.arange(1, state.ones.shape[1])

    # -- primitive mode operations -------------------------------------------------
    def mix(self, i: int, j: int, M: np.ndarray) -> None:
        """Linear map on bosonic modes i, j."""
        B = self.st.ones
        bi = B[i].copy()
        B[i] = M[0, 0] * bi + M[0, 1] * B[j]
        B[j] = M[1, 0] * bi + M[1, 1] * B[j]
        A = self.st.pair
        if A is None:
            return
        aii, aij, ajj = A[i, i], A[i, j], A[j, j]
        ri = A[i].copy()
        A[i] = M[0, 0] * ri + M[0, 1] * A[j]
        A[j] = M[1, 0] * ri + M[1, 1] * A[j]
        A[:, i] = A[i]
        A[:, j] = A[j]
        m00, m01, m10, m11 = M[0, 0], M[0, 1], M[1, 0], M[1, 1]
        A[i, i] = m00 * m00 * aii + 2 * m00 * m01 * aij + m01 * m01 * ajj
        A[j, j] = m10 * m10 * aii + 2 * m10 * m11 * aij + m11 * m11 * ajj
        A[i, j] = A[j, i] = m00 * m10 * aii + (m00 * m11 + m01 * m10) * aij + m01 * m11 * ajj

    def exchange(self, n: int, b: int, theta: float, lad: LadderCoefficients) -> None:
        """Node n (ladder ``lad``) swaps excitation with bin b."""
        if theta == 0:
            return
        R = _chain_cached(theta, (lad.c_ge,))
        B = self.st.ones
        bn = B[n].copy()
        B[n] = R[0, 0] * bn + R[0, 1] * B[b]
        B[b] = R[1, 0] * bn + R[1, 1] * B[b]
        A = self.st.pair
        if A is None:
            return
        v = np.array([A[n, n], SQRT2 * A[n, b], A[b, b]])
        rn = A[n].copy()
        A[n] = R[0, 0] * rn + R[0, 1] * A[b]
        A[b] = R[1, 0] * rn + R[1, 1] * A[b]
        A[:, n] = A[n]
        A[:, b] = A[b]
        E = _chain_cached(theta, (lad.c_ef, SQRT2 * lad.c_ge))
        v = E @ v
        A[n, n] = v[0]
        A[n, b] = A[b, n] = v[1] / SQRT2
        A[b, b] = v[2]

    def phase(self, i: int, p1: complex, p2: complex) -> None:
        """Unit-modulus phases for single (p1) and double (p2) occupation of mode i."""
        if p1 == 1 and p2 == 1:
            return
        self.st.ones[i] *= p1
        A = self.st.pair
        if A is None:
            return
        d = A[i, i]
        A[i] *= p1
        A[:, i] = A[i]
        A[i, i] = d * p2

    def damp(self, i: int, a1: float, a2: float, g_double: float) -> None:
        """Real amplitude damping of mode i.

        Single occupation keeps ``a1``, double keeps ``a2``.  The lost part of
        a doubly occupied mode lands on one phonon in the same mode with
        amplitude ``g_double * A_ii``; one with a partner in mode j lands on
        j with amplitude ``sqrt(2(1 - a1^2)) * A_ij``.
        """
        st = self.st
        B = st.ones
        # sampled trajectories that decay to vacuum need no bookkeeping: P_gg is the remainder
        lost0 = (1 - a1 * a1) * abs(B[i, 0]) ** 2
        if self.jump:
            st.vacuum += lost0
        else:
            st.leaked += lost0
        B[i] *= a1
        A = st.pair
        if A is None:
            return
        row = A[i].copy()
        d = row[i]
        psi = math.sqrt(2 * (1 - a1 * a1)) * row
        psi[i] = g_double * d
        w = float(np.vdot(psi, psi).real)
        # both phonons of a doubly occupied mode lost at once
        lost2 = max(0.0, 1 - a2 * a2 - g_double * g_double) * abs(d) ** 2
        if self.jump:
            st.vacuum += lost2
        else:
            st.leaked += lost2
        A[i] *= a1
        A[:, i] = A[i]
        A[i, i] = d * a2
        if w <= 0:
            return
        if self.slots is None:
            st.leaked += w
            return
        st.jumped += w
        if w < JUMP_FLOOR:
            return
        # weighted reservoir: each slot independently keeps a draw proportional to weight
        take = self.rng.random(len(self.slots)) < w / st.jumped
        if np.any(take):
            B[:, self.slots[take]] = (psi / math.sqrt(w))[:, None]
        st.weights[self.slots] = st.jumped / len(self.slots)


@dataclass(frozen=True)
class _NodePlan:
    mode: int
    kbar: np.ndarray
    dbar: np.ndarray
    ladder: LadderCoefficients
    levels: int
    params: NodeParams


def _node_plan(p: NodeParams, mode: int, grid: TimeGrid, start: int, n_steps: int) -> _NodePlan:
    idx = np.arange(start, start + n_steps)

    def step_average(samples, what):
        if len(samples) <= idx[-1] + 1:
            raise ValueError(f"{what} covers {len(samples)} samples but the run needs {idx[-1] + 2}")
        return 0.5 * (samples[idx] + samples[idx + 1])

    if p.schedule is None:
        kbar = np.zeros(n_steps)
    else:
        if p.schedule.grid.dt != grid.dt or abs(p.schedule.grid.t0 - grid.t0) > 1e-9:
            raise ValueError("node schedule must live on the evolution grid")
        kbar = step_average(p.schedule.kappa, "schedule")
    if p.detuning_profile is None:
        dbar = np.full(n_steps, float(p.detuning))
    else:
        dbar = step_average(np.asarray(p.detuning_profile, dtype=float), "detuning profile")
    if p.full_modulation:
        period = 2 * math.pi / p.modulation.omega_mod
        if grid.dt > period / 40 * (1 + 1e-9):
            raise ValueError(f"full modulation needs dt <= {period / 40:.4g} ns")
    return _NodePlan(mode, kbar, dbar, p.ladder(), p.levels, p)


def _node_phases(p: NodeParams, det: float, t0: float, dt: float) -> tuple[complex, complex]:
    """Phase factors for |e> and |f> over one step starting at t0."""
    if p.full_modulation:
        d = p.modulation
        s = (math.sin(d.omega_mod * (t0 + dt) + d.phase) - math.sin(d.omega_mod * t0 + d.phase)) / d.omega_mod
        pe = -(det * dt + d.delta_amp * s)
        pf = -((2 * det - p.chi) * dt + 2 * d.delta_amp * s)
        return complex(np.exp(1j * pe)), complex(np.exp(1j * pf))
    pe = complex(np.exp(-1j * det * dt))
    if p.levels == 3 and p.modulation is not None:
        # sideband frame: the drive cancels the anharmonicity
        pf = pe * pe
    else:
        pf = complex(np.exp(-1j * (2 * det - p.chi) * dt))
    return pe, pf


def evolve(topology: Topology, nodes: Sequence[NodeParams], initial: FewExcState, n_steps: int,
           grid: TimeGrid, loss_mode: str = "leak", seed: int = 0, n_traj: int = 256,
           side_step: int | None = None, record_outgoing: Sequence[int] = (),
           drift_tol: float = 1e-6) -> tuple[TraceRecord, FewExcState]:
    """Advance ``initial`` by ``n_steps`` steps of ``grid.dt``.

    Per step: each node exchanges with the bin in front of it and picks up its
    level phases and damping; arm A takes ``arm_phase``; the two bins at the
    beamsplitter are attenuated and mixed; the ring offset advances.

    ``side_step`` (absolute step index) stores a beamsplitter-side photon
    count table in the record.  ``record_outgoing`` lists node indices whose
    outgoing bin amplitude (coherent column) is logged each step.
    """
    if loss_mode not in ("leak", "jump"):
        raise ValueError(f"unknown loss mode {loss_mode!r}")
    if len(nodes) != 2:
        raise ValueError("exactly two nodes are required")
    if abs(grid.dt - topology.dt) > 1e-12:
        raise ValueError("grid and topology disagree on dt")
    st = initial.copy()
    if st.n_modes != topology.n_modes:
        raise ValueError("state does not match topology")
    for p in nodes:
        if p.levels == 2 and st.pair is not None:
            for m in topology.node_modes:
                if abs(st.pair[m, m]) > 0:
                    raise ValueError("a 2-level node cannot hold two excitations")
    rng = np.random.default_rng(seed)
    eng = _Engine(topology, st, loss_mode, n_traj, rng)
    dt = grid.dt
    start = st.step
    plans = [_node_plan(p, m, grid, start, n_steps) for p, m in zip(nodes, topology.node_modes)]
    la, lb = topology.arm_lengths
    da, db = topology.d_left, topology.d_right
    offs = (0, la)
    lens = (la, lb)
    dels = (da, db)
    U = topology.bs_matrix()
    arm_ph = complex(np.exp(1j * topology.arm_phase))
    a_link = math.sqrt(topology.link_efficiency)
    g_link = math.sqrt(2 * (1 - topology.link_efficiency) * topology.link_efficiency)
    damp_e = [math.exp(-0.5 * dt / p.t1_e) for p in nodes]
    damp_f = [math.exp(-0.5 * dt / p.t1_f) for p in nodes]
    init_norm = st.coherent_norm() + st.leaked + st.jumped + st.vacuum

    times = np.empty(n_steps + 1)
    joint = np.empty((n_steps + 1, 3, 3))
    loss = np.empty(n_steps + 1)
    outgoing = {k: np.zeros(n_steps, dtype=complex) for k in record_outgoing}
    side = None
    side_time = None

    def snapshot(k):
        joint[k] = populations(st, topology)
        loss[k] = st.leaked if not eng.jump else 0.0
        times[k] = grid.t0 + st.step * dt

    snapshot(0)
    if side_step is not None and side_step == st.step:
        side, side_time = side_populations(st, topology), grid.t0 + st.step * dt
    for k in range(n_steps):
        s = st.step
        t = grid.t0 + s * dt
        for x, plan in enumerate(plans):
            b = offs[x] + (dels[x] - s) % lens[x]
            eng.exchange(plan.mode, b, exchange_angle(plan.kbar[k], dt), plan.ladder)
            pe, pf = _node_phases(plan.params, plan.dbar[k], t, dt)
            eng.phase(plan.mode, pe, pf)
            if damp_e[x] < 1 or damp_f[x] < 1:
                ae, af = damp_e[x], damp_f[x]
                eng.damp(plan.mode, ae, af, math.sqrt(max(0.0, 1 - af * af)))
            if x in outgoing:
                outgoing[x][k] = st.ones[b, 0]
            if x == 0 and topology.arm_phase != 0:
                eng.phase(b, arm_ph, arm_ph * arm_ph)
        ia = offs[0] + (la - 1 - s) % la
        ib = offs[1] + (lb - 1 - s) % lb
        if a_link < 1:
            eng.damp(ia, a_link, a_link * a_link, g_link)
            eng.damp(ib, a_link, a_link * a_link, g_link)
        eng.mix(ia, ib, U)
        st.step += 1
        snapshot(k + 1)
        if side_step is not None and side_step == st.step:
            side, side_time = side_populations(st, topology), grid.t0 + st.step * dt

    drift = abs(st.coherent_norm() + st.leaked + st.jumped + st.vacuum - init_norm)
    if drift > drift_tol:
        raise NumericalInstabilityError(f"norm drifted by {drift:.3g} over {n_steps} steps")
    rec = TraceRecord(times, joint, loss, side, side_time, outgoing)
    return rec, st


def lattice_scatter(u: Envelope, kappa: float, delta: float) -> Envelope:
    """Reflect ``u`` off a ground-state two-level node held at constant coupling.

    Same collision kernel as :func:`evolve`, on a single straight channel:
    bin k meets the node at step k.
    """
    dt = u.grid.dt
    R = _chain_unitary(exchange_angle(kappa, dt), [1.0])
    ph = complex(np.exp(-1j * delta * dt))
    bins = u.amp * math.sqrt(dt)
    out = np.empty_like(bins)
    node = 0j
    r00, r01, r10, r11 = R[0, 0], R[0, 1], R[1, 0], R[1, 1]
    for k, b in enumerate(bins):
        node, out[k] = r00 * node + r01 * b, r10 * node + r11 * b
        node *= ph
    return Envelope(u.grid, out / math.sqrt(dt))


def two_phonon_interfere(topology: Topology, tau: float, sigma: float, t_emit: float,
                         grid: TimeGrid, kappa_max: float = math.inf, n_steps: int | None = None,
                         detect_at: float | None = None) -> TraceRecord:
    """Both 2-level nodes release a sech phonon, node 2 later by ``tau``, and
    each catches the packet that returns to it.

    ``record.side`` holds the beamsplitter-side phonon counts at
    ``detect_at`` (by default halfway between the two returns), so
    ``record.side[1, 1]`` is the coincidence probability of an arm-resolved
    detector.
    """
    from .envelope import make_sech
    from .pulse import catch_schedule, emission_schedule

    d = topology.arm_delay_left
    if abs(topology.arm_delay_right - d) > 1e-9:
        raise TopologyError("matched catches need equal arm delays")
    centres = (t_emit, t_emit + tau)
    nodes = []
    for c in centres:
        rel = emission_schedule(make_sech(sigma, c, grid), kappa_max)
        nodes.append(NodeParams(schedule=rel + catch_schedule(rel, c + d), kappa_max=kappa_max))
    if detect_at is None:
        detect_at = 0.5 * (centres[0] + centres[1]) + 2 * d
    if n_steps is None:
        n_steps = grid.n - 1
    st = FewExcState.nodes_excited(topology, [0, 1])
    rec, _ = evolve(topology, nodes, st, n_steps, grid, side_step=int(round((detect_at - grid.t0) / grid.dt)))
    return rec

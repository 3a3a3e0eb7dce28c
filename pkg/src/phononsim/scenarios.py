"""
Experiment library.  Each ``run_*`` function wires pulse synthesis, the
lattice propagator and the readout layer into one interferometer protocol
and returns a :class:`ScenarioResult`.

Timing for a sech packet released by node X at ``c`` through arms of
one-way delay ``d`` (equal arms):

* it meets the beamsplitter at ``c + d`` and either node at ``c + 2d``;
* in the interferometer protocols the scatterer holds its coupling on for
  ``c + 2d +- window_sigmas * sigma``, the packet recombines at ``c + 3d``
  and the catches are centred on ``c + 4d``.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import readout
from .envelope import Envelope, TimeGrid, make_sech
from .lattice import (
    FewExcState, NodeParams, Topology, TraceRecord, build, evolve, populations,
)
from .pulse import (
    CouplerSchedule, ModulationDrive, bessel_balance_ratio, catch_schedule, emission_schedule,
    ladder_coefficients, modulation_for,
)
from .scatter import detuning_sweep, mhz_to_rad_per_ns, phase_crossing

TWO_PI = 2 * math.pi
SQRT2 = math.sqrt(2.0)


class ConfigError(ValueError):
    pass


# -- configuration ----------------------------------------------------------------

@dataclass
class GridConfig:
    dt: float = 0.5
    length: float = 1600.0


@dataclass
class PulseConfig:
    sigma: float = 20.0
    #: release centre of the first packet; None means 8 sigma
    t_emit: float | None = None


@dataclass
class TopologyConfig:
    arm_delay_left: float = 250.0
    arm_delay_right: float = 250.0
    bs_t: float = 1 / SQRT2
    bs_r: float = 1 / SQRT2
    #: None picks the protocol's own default
    arm_phase: float | None = None


@dataclass
class NodeConfig:
    kappa_max: float = 0.5
    chi: float = TWO_PI * 0.185
    #: lifetimes in ns; None for no decay
    t1_e: float | None = None
    t1_f: float | None = None


@dataclass
class ScatterConfig:
    kappa_max: float = 0.5
    delta_MHz: float = 0.0
    window_sigmas: float = 10.0
    #: coupling ceiling for the coupling-sweep variant of the two-phonon protocol
    coupling_max: float = 0.1
    coupling_delta_MHz: float = -9.2


@dataclass
class SweepConfig:
    delta_MHz: list = field(default_factory=lambda: [-60.0, 60.0, 41])
    tau_ns: list = field(default_factory=lambda: [-80.0, 80.0, 33])
    kappa_scale: list = field(default_factory=lambda: [0.0, 1.0, 11])


@dataclass
class LossConfig:
    #: end-to-end transfer probability of one phonon from release to catch
    eta: float = 1.0
    #: two-node P_ee floor used to calibrate p_th when p_th is None
    floor: float = 0.0
    p_th: float | None = None
    mode: str = "leak"
    n_traj: int = 1024


@dataclass
class ModulationConfig:
    enabled: bool = True
    #: delta / Omega; None means the J0 = J1 balance point
    ratio: float | None = None
    phase: float = 0.0
    #: global scale on the catch couplings
    kappa_scale: float = 1.0


@dataclass
class ReadoutConfig:
    correct: bool = False
    #: pass the simulated tables through the confusion matrix before output
    apply_errors: bool = False
    clip: bool = False
    #: JSON confusion matrix; None uses the published calibration
    matrix: str | None = None


@dataclass
class ScenarioConfig:
    scenario: str = "hom"
    grid: GridConfig = field(default_factory=GridConfig)
    pulse: PulseConfig = field(default_factory=PulseConfig)
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    node: NodeConfig = field(default_factory=NodeConfig)
    scatter: ScatterConfig = field(default_factory=ScatterConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    modulation: ModulationConfig = field(default_factory=ModulationConfig)
    readout: ReadoutConfig = field(default_factory=ReadoutConfig)
    seed: int = 0
    #: single_split only: node that releases the phonon (1 or 2)
    source: int = 1

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        return _from_dict(cls, doc, "")

    def replace(self, **changes) -> "ScenarioConfig":
        """Copy with dotted-key changes, e.g. ``replace(**{"loss.eta": 0.5})``."""
        cfg = ScenarioConfig.from_dict(self.to_dict())
        for k, v in changes.items():
            set_dotted(cfg, k, v)
        return cfg


def _from_dict(cls, doc, prefix):
    if not isinstance(doc, dict):
        raise ConfigError(f"{prefix or 'config'} must be an object")
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for k, v in doc.items():
        if k not in names:
            raise ConfigError(f"unknown config key {prefix + k!r}")
        sub = _nested_type(cls, k)
        kwargs[k] = _from_dict(sub, v, prefix + k + ".") if sub else v
    return cls(**kwargs)


def _nested_type(cls, name):
    default = {f.name: f for f in dataclasses.fields(cls)}[name]
    if default.default_factory is not dataclasses.MISSING:
        probe = default.default_factory()
        if dataclasses.is_dataclass(probe):
            return type(probe)
    return None


def set_dotted(cfg, key: str, value) -> None:
    """Set ``a.b.c`` on nested config dataclasses.  String values are read as
    JSON where possible so ``"0.1"`` becomes a float."""
    if isinstance(value, str):
        try:
            value = json.loads(value)
        except json.JSONDecodeError:
            pass
    obj = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        if not dataclasses.is_dataclass(obj) or not hasattr(obj, p):
            raise ConfigError(f"unknown config key {key!r}")
        obj = getattr(obj, p)
    last = parts[-1]
    if not dataclasses.is_dataclass(obj) or last not in {f.name for f in dataclasses.fields(obj)}:
        raise ConfigError(f"unknown config key {key!r}")
    if dataclasses.is_dataclass(getattr(obj, last)):
        raise ConfigError(f"{key!r} is a section, set one of its fields")
    setattr(obj, last, value)


def load_config(path) -> ScenarioConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return ScenarioConfig.from_dict(doc)


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def violations(cfg: ScenarioConfig) -> list[str]:
    """Every broken invariant of ``cfg``; empty means valid."""
    out = []

    def positive(name, x):
        if not (_is_num(x) and x > 0):
            out.append(f"{name} must be a positive number (got {x!r})")
            return False
        return True

    if cfg.scenario not in SCENARIOS:
        out.append(f"unknown scenario {cfg.scenario!r}; valid ids: {', '.join(sorted(SCENARIOS))}")
    dt_ok = positive("grid.dt", cfg.grid.dt)
    positive("grid.length", cfg.grid.length)
    positive("pulse.sigma", cfg.pulse.sigma)
    if cfg.pulse.t_emit is not None:
        positive("pulse.t_emit", cfg.pulse.t_emit)
    t = cfg.topology
    for name in ("arm_delay_left", "arm_delay_right"):
        v = getattr(t, name)
        if positive(f"topology.{name}", v) and dt_ok:
            k = v / cfg.grid.dt
            if abs(k - round(k)) > 1e-9 * max(1.0, k):
                out.append(f"topology.{name} = {v} is not a multiple of grid.dt")
    if not (_is_num(t.bs_t) and _is_num(t.bs_r) and t.bs_t >= 0 and t.bs_r >= 0):
        out.append("topology.bs_t and topology.bs_r must be non-negative numbers")
    elif abs(t.bs_t ** 2 + t.bs_r ** 2 - 1) > 1e-12:
        out.append(f"beamsplitter not unitary: |t|^2 + |r|^2 = {t.bs_t ** 2 + t.bs_r ** 2:.12g}")
    if t.arm_phase is not None and not _is_num(t.arm_phase):
        out.append("topology.arm_phase must be a number or null")
    positive("node.kappa_max", cfg.node.kappa_max)
    positive("node.chi", cfg.node.chi)
    for name in ("t1_e", "t1_f"):
        v = getattr(cfg.node, name)
        if v is not None:
            positive(f"node.{name}", v)
    positive("scatter.kappa_max", cfg.scatter.kappa_max)
    positive("scatter.window_sigmas", cfg.scatter.window_sigmas)
    positive("scatter.coupling_max", cfg.scatter.coupling_max)
    for name in ("delta_MHz", "coupling_delta_MHz"):
        if not _is_num(getattr(cfg.scatter, name)):
            out.append(f"scatter.{name} must be a number")
    for name in ("delta_MHz", "tau_ns", "kappa_scale"):
        spec = getattr(cfg.sweep, name)
        if not (isinstance(spec, (list, tuple)) and len(spec) == 3 and _is_num(spec[0]) and _is_num(spec[1])
                and isinstance(spec[2], int) and not isinstance(spec[2], bool) and spec[2] >= 1):
            out.append(f"sweep.{name} must be [start, stop, count] with count >= 1")
    if dt_ok and not any("sweep.tau_ns" in v for v in out):
        for tau in sweep_values(cfg.sweep.tau_ns):
            k = tau / cfg.grid.dt
            if abs(k - round(k)) > 1e-6:
                out.append(f"sweep.tau_ns value {tau:g} is not on the dt lattice")
                break
    loss = cfg.loss
    if not (_is_num(loss.eta) and 0 < loss.eta <= 1):
        out.append(f"loss.eta must lie in (0, 1] (got {loss.eta!r})")
    if not (_is_num(loss.floor) and 0 <= loss.floor < 1):
        out.append(f"loss.floor must lie in [0, 1) (got {loss.floor!r})")
    if loss.p_th is not None and not (_is_num(loss.p_th) and 0 <= loss.p_th < 1):
        out.append(f"loss.p_th must lie in [0, 1) (got {loss.p_th!r})")
    if loss.mode not in ("leak", "jump"):
        out.append(f"loss.mode must be 'leak' or 'jump' (got {loss.mode!r})")
    if not (isinstance(loss.n_traj, int) and loss.n_traj >= 1):
        out.append("loss.n_traj must be a positive integer")
    m = cfg.modulation
    if m.ratio is not None:
        positive("modulation.ratio", m.ratio)
    positive("modulation.kappa_scale", m.kappa_scale)
    if not _is_num(m.phase):
        out.append("modulation.phase must be a number")
    if not isinstance(cfg.seed, int):
        out.append("seed must be an integer")
    if cfg.source not in (1, 2):
        out.append("source must be 1 or 2")
    if cfg.readout.matrix is not None:
        try:
            readout.load_json(cfg.readout.matrix).validate()
        except (OSError, ValueError, KeyError) as exc:
            out.append(f"readout.matrix: {exc}")
    return out


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    v = violations(cfg)
    if v:
        raise ConfigError("; ".join(v))
    return cfg


def sweep_values(spec) -> np.ndarray:
    """``[start, stop, count]`` with both ends included."""
    start, stop, count = spec
    if count == 1:
        return np.array([float(start)])
    return np.linspace(float(start), float(stop), int(count))


# -- calibration presets -----------------------------------------------------------

def eta_for_capture(capture: float) -> float:
    """Transfer efficiency that leaves ``capture`` in each node after a balanced split."""
    return 2 * capture


def eta_for_hom_visibility(floor: float, visibility: float) -> float:
    """Transfer efficiency whose HOM peak ``eta^2 / 2 + floor`` makes the
    floor-limited visibility equal ``visibility``."""
    p_max = floor / (1 - visibility)
    return math.sqrt(2 * (p_max - floor))


def mz_floor(p_max: float, visibility: float) -> float:
    """Single-node floor that limits a routing fringe of height ``p_max`` to ``visibility``."""
    return p_max * (1 - visibility) / (1 + visibility)


# -- results ----------------------------------------------------------------------

@dataclass
class ScenarioResult:
    scenario: str
    metrics: readout.Metrics
    extrema: dict
    trace: TraceRecord | None = None
    sweep_header: list | None = None
    sweep_rows: list | None = None
    #: measured final joint tables keyed by name, after floor/readout
    tables: dict = field(default_factory=dict)
    #: input envelope, for scenarios without a lattice trace
    probe: Envelope | None = None

    def summary(self, cfg: ScenarioConfig) -> dict:
        return {
            "scenario": self.scenario,
            "metrics": self.metrics.as_dict(),
            "extrema": _jsonable(self.extrema),
            "config_echo": cfg.to_dict(),
        }

    def sweep_column(self, name: str) -> np.ndarray:
        k = self.sweep_header.index(name)
        return np.array([r[k] for r in self.sweep_rows], dtype=float)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(format(float(x), ".12g"))
    if isinstance(x, np.integer):
        return int(x)
    return x


# -- plumbing ---------------------------------------------------------------------

def _workers() -> int:
    try:
        return max(1, int(os.environ.get("PHONON_LATTICE_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn: Callable, items: Sequence) -> list:
    """Evaluate independent sweep points, in order, on up to
    ``PHONON_LATTICE_THREADS`` worker processes."""
    n = min(_workers(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _grid(cfg) -> TimeGrid:
    return TimeGrid(0.0, cfg.grid.dt, int(round(cfg.grid.length / cfg.grid.dt)))


def _t_emit(cfg) -> float:
    return cfg.pulse.t_emit if cfg.pulse.t_emit is not None else 8 * cfg.pulse.sigma


def _equal_arms(cfg) -> float:
    t = cfg.topology
    if abs(t.arm_delay_left - t.arm_delay_right) > 1e-9:
        raise ConfigError(f"{cfg.scenario} needs equal arm delays")
    return t.arm_delay_left


def _topology(cfg, passes: int, arm_phase: float) -> Topology:
    t = cfg.topology
    link = cfg.loss.eta ** (1.0 / passes)
    return build(cfg.grid.dt, t.arm_delay_left, t.arm_delay_right, t.bs_t, t.bs_r, arm_phase, link)


def _lifetimes(cfg) -> dict:
    n = cfg.node
    return {"t1_e": n.t1_e if n.t1_e is not None else math.inf,
            "t1_f": n.t1_f if n.t1_f is not None else math.inf}


def _release(cfg, grid, centre, scale=1.0) -> CouplerSchedule:
    rel = emission_schedule(make_sech(cfg.pulse.sigma, centre, grid))
    return rel.scaled(scale) if scale != 1.0 else rel


def _end_step(grid: TimeGrid, t: float) -> int:
    return min(grid.n - 1, int(math.ceil((t - grid.t0) / grid.dt)))


def _window(grid, centre, half, value) -> np.ndarray:
    t = grid.times
    return np.where(np.abs(t - centre) <= half + 1e-9, value, 0.0)


def _matrix(cfg, levels: int) -> readout.ConfusionMatrix:
    if cfg.readout.matrix is not None:
        c = readout.load_json(cfg.readout.matrix)
    else:
        c = readout.two_qubit_matrix() if levels == 2 else readout.two_qutrit_matrix()
    if c.dim != levels * levels:
        raise ConfigError(f"readout matrix has {c.dim} outcomes, the protocol needs {levels * levels}")
    return c


def measure(P, cfg, levels: int, p_th: float = 0.0) -> np.ndarray:
    """Pass a simulated joint table through the measurement pipeline:
    thermal floor, optional readout error, optional correction."""
    P = with_lost_as_ground(P)
    if levels == 2:
        P = merge_f(P)
    if p_th > 0:
        P = readout.inject_thermal_floor(P, p_th)
    if not (cfg.readout.apply_errors or cfg.readout.correct):
        return P
    c = _matrix(cfg, levels)
    v = readout.table_to_vector(P, levels)
    if cfg.readout.apply_errors:
        v = readout.apply(c, v)
    if cfg.readout.correct:
        v = readout.correct(c, v, clip=cfg.readout.clip)
    return readout.vector_to_table(v, levels)


def with_lost_as_ground(P) -> np.ndarray:
    """Book norm that left the table (leak-mode losses) as gg: a node whose
    phonon leaked reads out in g."""
    P = np.array(P, dtype=float)
    P[0, 0] += max(0.0, 1.0 - P.sum())
    return P


def merge_f(P) -> np.ndarray:
    """A 2-level readout reports f as e (two phonons on one side read as one click)."""
    P = np.array(P, dtype=float)
    P[1] += P[2]
    P[2] = 0
    P[:, 1] += P[:, 2]
    P[:, 2] = 0
    return P


def _p_th(cfg) -> float:
    """Per-node thermal flip probability: explicit, or calibrated so that the
    single-split protocol ends with P_ee equal to ``loss.floor``."""
    if cfg.loss.p_th is not None:
        return float(cfg.loss.p_th)
    if cfg.loss.floor <= 0:
        return 0.0
    P = with_lost_as_ground(_single_split_final(cfg))
    return readout.floor_p_th(P, cfg.loss.floor)


def _evolve(cfg, top, nodes, st, n_steps, grid, **kw):
    return evolve(top, nodes, st, n_steps, grid, loss_mode=cfg.loss.mode, seed=cfg.seed,
                  n_traj=cfg.loss.n_traj, **kw)


# -- single phonon split ------------------------------------------------------------

def _single_split_run(cfg):
    grid = _grid(cfg)
    top = _topology(cfg, 1, cfg.topology.arm_phase or 0.0)
    c = _t_emit(cfg)
    dl, dr = top.arm_delay_left, top.arm_delay_right
    src = cfg.source - 1
    d_src = (dl, dr)[src]
    rel = _release(cfg, grid, c)
    life = _lifetimes(cfg)
    nodes = []
    for x, d_x in enumerate((dl, dr)):
        # a packet from the source reaches node x at c + d_src + d_x
        sched = catch_schedule(rel, c + 0.5 * (d_src + d_x))
        if x == src:
            sched = rel + sched
        nodes.append(NodeParams(schedule=sched, kappa_max=cfg.node.kappa_max, **life))
    st = FewExcState.nodes_excited(top, [src])
    n = _end_step(grid, c + 2 * max(dl, dr) + 10 * cfg.pulse.sigma)
    rec, _ = _evolve(cfg, top, nodes, st, n, grid)
    return rec


def _single_split_final(cfg) -> np.ndarray:
    return _single_split_run(cfg).final


def run_single_split(cfg: ScenarioConfig) -> ScenarioResult:
    rec = _single_split_run(cfg)
    p_th = _p_th(cfg)
    P = measure(rec.final, cfg, 2, p_th)
    q1, q2 = P[1].sum(), P[:, 1].sum()
    return ScenarioResult(
        "single_split",
        readout.Metrics(n_mean=(float(q1), float(q2))),
        {"final": {"P_Q1": q1, "P_Q2": q2, "P_ee": P[1, 1], "p_th": p_th}},
        trace=rec, tables={"final": P},
    )


# -- HOM ------------------------------------------------------------------------

def _hom_point(args):
    cfg, tau = args
    grid = _grid(cfg)
    top = _topology(cfg, 1, cfg.topology.arm_phase or 0.0)
    d = _equal_arms(cfg)
    taus = sweep_values(cfg.sweep.tau_ns)
    c1 = _t_emit(cfg) + max(0.0, -float(np.min(taus)))
    c2 = c1 + tau
    life = _lifetimes(cfg)
    nodes = []
    for c in (c1, c2):
        rel = _release(cfg, grid, c)
        nodes.append(NodeParams(schedule=rel + catch_schedule(rel, c + d), kappa_max=cfg.node.kappa_max, **life))
    detect = int(round((0.5 * (c1 + c2) + 2 * d) / grid.dt))
    n = _end_step(grid, max(c1, c2) + 2 * d + 10 * cfg.pulse.sigma)
    st = FewExcState.nodes_excited(top, [0, 1])
    rec, _ = _evolve(cfg, top, nodes, st, n, grid, side_step=detect)
    return rec


def hom_theory(tau, sigma: float, eta: float = 1.0):
    """Arm-resolved coincidence probability for sech packets offset by tau."""
    x = np.asarray(tau, dtype=float) / sigma
    s = np.ones_like(x)
    nz = np.abs(x) > 1e-12
    s[nz] = x[nz] / np.sinh(x[nz])
    return 0.5 * eta ** 2 * (1 - s ** 2)


def run_hom_sweep(cfg: ScenarioConfig) -> ScenarioResult:
    taus = sweep_values(cfg.sweep.tau_ns)
    recs = _map(_hom_point, [(cfg, float(t)) for t in taus])
    mid = int(np.argmin(np.abs(taus)))
    if cfg.loss.p_th is not None:
        p_th = float(cfg.loss.p_th)
    elif cfg.loss.floor > 0:
        # the floor is the coincidence baseline at zero delay
        p_th = readout.floor_p_th(merge_f(with_lost_as_ground(recs[mid].side)), cfg.loss.floor)
    else:
        p_th = 0.0
    rows = []
    for tau, rec in zip(taus, recs):
        side = measure(rec.side, cfg, 2, p_th)
        caught = measure(rec.final, cfg, 2, p_th)
        rows.append((tau, side[1, 1], caught[1, 1], hom_theory(tau, cfg.pulse.sigma, cfg.loss.eta)))
    p_ee = np.array([r[1] for r in rows])
    ex = readout.extrema(p_ee, taus)
    return ScenarioResult(
        "hom",
        readout.Metrics(v_hom=readout.v_hom(p_ee)),
        {"P_ee_max": ex.value_max, "P_ee_min": ex.value_min, "tau_at_max": ex.at_max,
         "tau_at_min": ex.at_min, "p_th": p_th},
        trace=recs[mid], sweep_header=["tau_ns", "P_ee", "P_ee_catch", "P_ee_theory"], sweep_rows=rows,
    )


# -- single-phonon Mach-Zehnder -------------------------------------------------------

MZ_ARM_PHASE = -math.pi / 2


def _mz_point(args):
    """One single-phonon run of the interferometer with the scatterer at ``delta``
    (rad/ns).  Returns (final table, side table at the catch)."""
    cfg, delta, arm_phase = args
    grid = _grid(cfg)
    d = _equal_arms(cfg)
    top = _topology(cfg, 2, arm_phase)
    c = _t_emit(cfg)
    sig = cfg.pulse.sigma
    life = _lifetimes(cfg)
    rel = _release(cfg, grid, c)
    t_catch = c + 4 * d
    half = cfg.scatter.window_sigmas * sig
    hold = _window(grid, c + 2 * d, half, cfg.scatter.kappa_max)
    catch = catch_schedule(rel, 0.5 * (c + t_catch))
    n1 = NodeParams(schedule=rel + catch, kappa_max=max(cfg.node.kappa_max, cfg.scatter.kappa_max), **life)
    n2 = NodeParams(schedule=catch + CouplerSchedule(grid, hold), detuning_profile=_window(grid, c + 2 * d, half, delta),
                    kappa_max=max(cfg.node.kappa_max, cfg.scatter.kappa_max), **life)
    st = FewExcState.nodes_excited(top, [0])
    n = _end_step(grid, t_catch + 10 * sig)
    rec, _ = _evolve(cfg, top, [n1, n2], st, n, grid, side_step=grid.index_of(t_catch))
    return rec


def scatter_crossings(cfg, targets=(math.pi / 2, 3 * math.pi / 2)) -> dict:
    """Detunings (MHz) where the frequency-domain scattering phase of the
    configured packet crosses each target."""
    from .scatter import rad_per_ns_to_mhz

    grid = _grid(cfg)
    u = make_sech(cfg.pulse.sigma, 0.5 * grid.n * grid.dt, grid)
    k = cfg.scatter.kappa_max
    out = {}
    for tgt in targets:
        # the monochromatic crossing picks the side; the bracket is generous
        d0 = 0.5 * k * math.tan(0.5 * (math.pi - tgt))
        lo, hi = (0.0, 40 * k) if d0 > 0 else (-40 * k, 0.0)
        try:
            out[f"{tgt:.6f}"] = float(rad_per_ns_to_mhz(phase_crossing(u, k, tgt, (lo, hi))))
        except ValueError:
            out[f"{tgt:.6f}"] = None
    return out


def run_mz_single(cfg: ScenarioConfig) -> ScenarioResult:
    deltas_mhz = sweep_values(cfg.sweep.delta_MHz)
    deltas = mhz_to_rad_per_ns(deltas_mhz)
    arm_phase = cfg.topology.arm_phase if cfg.topology.arm_phase is not None else MZ_ARM_PHASE
    p_th = cfg.loss.p_th if cfg.loss.p_th is not None else _p_th(cfg)
    recs = _map(_mz_point, [(cfg, float(dl), arm_phase) for dl in deltas])
    rows = []
    for f, rec in zip(deltas_mhz, recs):
        P = measure(rec.final, cfg, 2, p_th)
        S = rec.side
        rows.append((f, P[1].sum(), P[:, 1].sum(), P[1, 1], S[1, 0], S[0, 1]))
    q1 = np.array([r[1] for r in rows])
    q2 = np.array([r[2] for r in rows])
    e1, e2 = readout.extrema(q1, deltas_mhz), readout.extrema(q2, deltas_mhz)
    vis = 0.5 * (readout.v_mz(q1) + readout.v_mz(q2))
    mid = int(np.argmin(np.abs(deltas_mhz)))
    ext = {
        "P_Q1_max": e1.value_max, "P_Q1_min": e1.value_min,
        "delta_MHz_at_P_Q1_max": e1.at_max, "delta_MHz_at_P_Q1_min": e1.at_min,
        "P_Q2_max": e2.value_max, "P_Q2_min": e2.value_min,
        "delta_MHz_at_P_Q2_max": e2.at_max, "delta_MHz_at_P_Q2_min": e2.at_min,
        "scatter_crossings_MHz": scatter_crossings(cfg),
        "arm_phase": arm_phase, "p_th": p_th,
    }
    return ScenarioResult(
        "mz_single", readout.Metrics(v_mz=vis), ext, trace=recs[mid],
        sweep_header=["delta_MHz", "P_Q1", "P_Q2", "P_ee", "side_Q1", "side_Q2"], sweep_rows=rows,
    )


# -- two-phonon phase ------------------------------------------------------------------

TWO_PHONON_ARM_PHASE = 0.3


def _two_phonon_point(args):
    cfg, delta, kappa, arm_phase = args
    grid = _grid(cfg)
    d = _equal_arms(cfg)
    top = _topology(cfg, 2, arm_phase)
    c = _t_emit(cfg)
    sig = cfg.pulse.sigma
    life = _lifetimes(cfg)
    rel = _release(cfg, grid, c)
    t_catch = c + 4 * d
    half = cfg.scatter.window_sigmas * sig
    catch = catch_schedule(rel, 0.5 * (c + t_catch))
    cap = max(cfg.node.kappa_max, kappa)
    n1 = NodeParams(schedule=rel + catch, kappa_max=cap, **life)
    n2 = NodeParams(schedule=rel + catch + CouplerSchedule(grid, _window(grid, c + 2 * d, half, kappa)),
                    detuning_profile=_window(grid, c + 2 * d, half, delta), kappa_max=cap, **life)
    st = FewExcState.nodes_excited(top, [0, 1])
    n = _end_step(grid, t_catch + 10 * sig)
    rec, _ = _evolve(cfg, top, [n1, n2], st, n, grid, side_step=grid.index_of(t_catch))
    return rec


def two_phonon_weights(phi, arm_phase: float) -> tuple[np.ndarray, np.ndarray]:
    """(|11> weight, |20>+|02> weight) after a round trip with scattering phase
    ``phi`` on one arm and ``arm_phase`` on the other."""
    x = np.asarray(phi, dtype=float) - arm_phase
    return np.cos(x) ** 2, np.sin(x) ** 2


def run_two_phonon_phase(cfg: ScenarioConfig) -> ScenarioResult:
    deltas_mhz = sweep_values(cfg.sweep.delta_MHz)
    deltas = mhz_to_rad_per_ns(deltas_mhz)
    arm_phase = cfg.topology.arm_phase if cfg.topology.arm_phase is not None else TWO_PHONON_ARM_PHASE
    k = cfg.scatter.kappa_max
    p_th = _p_th(cfg)
    recs = _map(_two_phonon_point, [(cfg, float(dl), k, arm_phase) for dl in deltas])
    single = _map(_mz_point, [(cfg, float(dl), arm_phase) for dl in deltas])
    grid = _grid(cfg)
    u = make_sech(cfg.pulse.sigma, 0.5 * grid.n * grid.dt, grid)
    phis = np.array([r.phase for r in detuning_sweep(u, k, deltas)])
    w11_th, w2_th = two_phonon_weights(phis, arm_phase)
    rows = []
    for i, (f, rec, srec) in enumerate(zip(deltas_mhz, recs, single)):
        P = measure(rec.final, cfg, 2, p_th)
        S = rec.side
        Q = measure(srec.final, cfg, 2, p_th)
        rows.append((f, P[1, 1], S[1, 1], S[2, 0] + S[0, 2], w11_th[i], w2_th[i], phis[i],
                     Q[1].sum(), Q[:, 1].sum()))
    p_ee = np.array([r[1] for r in rows])
    q1 = np.array([r[7] for r in rows])
    q2 = np.array([r[8] for r in rows])
    ee = readout.extrema(p_ee, deltas_mhz)
    ext = {
        "P_ee_max": ee.value_max, "P_ee_min": ee.value_min,
        "delta_MHz_at_P_ee_max": ee.at_max, "delta_MHz_at_P_ee_min": ee.at_min,
        "delta_MHz_at_P_Q1_min": readout.extrema(q1, deltas_mhz).at_min,
        "delta_MHz_at_P_Q2_min": readout.extrema(q2, deltas_mhz).at_min,
        "arm_phase": arm_phase, "p_th": p_th,
    }
    mid = int(np.argmin(np.abs(deltas_mhz)))
    return ScenarioResult(
        "two_phonon_phase", readout.Metrics(v_ee=readout.v_ee(p_ee)), ext, trace=recs[mid],
        sweep_header=["delta_MHz", "P_ee", "w11", "w20_02", "w11_theory", "w20_02_theory", "phi_rad",
                      "P_Q1_single", "P_Q2_single"],
        sweep_rows=rows,
    )


def run_two_phonon_coupling(cfg: ScenarioConfig) -> ScenarioResult:
    """Coupling-amplitude variant: fixed scatterer detuning, coupling scaled
    from 0 to ``scatter.coupling_max``."""
    scales = sweep_values(cfg.sweep.kappa_scale)
    delta = float(mhz_to_rad_per_ns(cfg.scatter.coupling_delta_MHz))
    arm_phase = cfg.topology.arm_phase if cfg.topology.arm_phase is not None else 0.0
    p_th = _p_th(cfg)
    kappas = scales * cfg.scatter.coupling_max
    recs = _map(_two_phonon_point, [(cfg, delta, float(k), arm_phase) for k in kappas])
    rows = []
    for s, k, rec in zip(scales, kappas, recs):
        P = measure(rec.final, cfg, 2, p_th)
        rows.append((s, k, P[1, 1], rec.side[1, 1]))
    p_ee = np.array([r[2] for r in rows])
    ee = readout.extrema(p_ee, scales)
    return ScenarioResult(
        "two_phonon_coupling", readout.Metrics(v_ee=readout.v_ee(p_ee)),
        {"P_ee_max": ee.value_max, "P_ee_min": ee.value_min, "scale_at_max": ee.at_max,
         "scale_at_min": ee.at_min, "monotone_drop": bool(np.all(np.diff(p_ee) <= 1e-12)),
         "arm_phase": arm_phase, "p_th": p_th},
        trace=recs[-1], sweep_header=["kappa_scale", "kappa", "P_ee", "w11"], sweep_rows=rows,
    )


# -- two-phonon catch --------------------------------------------------------------------

def _drive(cfg, ratio=None) -> ModulationDrive | None:
    m = cfg.modulation
    if not m.enabled:
        return None
    r = ratio if ratio is not None else (m.ratio if m.ratio is not None else bessel_balance_ratio())
    return ModulationDrive(cfg.node.chi, r * cfg.node.chi, m.phase)


def _catch_run(cfg, kappa_scale=None, ratio=None):
    grid = _grid(cfg)
    d = _equal_arms(cfg)
    top = _topology(cfg, 1, cfg.topology.arm_phase or 0.0)
    c = _t_emit(cfg)
    sig = cfg.pulse.sigma
    scale = cfg.modulation.kappa_scale if kappa_scale is None else kappa_scale
    drive = _drive(cfg, ratio)
    lad = ladder_coefficients(drive)
    # the drive slows the g-e coupling by |c_ge|^2; compensate so the packet keeps its shape
    boost = 1.0 / abs(lad.c_ge) ** 2
    cap = cfg.node.kappa_max
    rel = _release(cfg, grid, c, boost)
    catch = catch_schedule(rel, c + d).scaled(scale)
    catch = CouplerSchedule(grid, np.minimum(catch.kappa, cap), catch.residual)
    life = _lifetimes(cfg)
    nodes = [NodeParams(levels=3, chi=cfg.node.chi, kappa_max=cap, schedule=rel + catch,
                        modulation=drive, **life) for _ in range(2)]
    st = FewExcState.nodes_excited(top, [0, 1])
    rec, _ = _evolve(cfg, top, nodes, st, _end_step(grid, c + 2 * d + 10 * sig), grid)
    return rec


def run_two_phonon_catch(cfg: ScenarioConfig) -> ScenarioResult:
    rec = _catch_run(cfg)
    P = measure(rec.final, cfg, 3, _p_th_qutrit(cfg))
    n1 = readout.n_mean(P[1].sum(), P[2].sum())
    n2 = readout.n_mean(P[:, 1].sum(), P[:, 2].sum())
    ext = {"final": {lab: P["gef".index(lab[0]), "gef".index(lab[1])]
                     for lab in ("gg", "ge", "eg", "ee", "gf", "fg", "ef", "fe", "ff")}}
    return ScenarioResult("two_phonon_catch", readout.Metrics(n_mean=(float(n1), float(n2))), ext,
                          trace=rec, tables={"final": P})


def _p_th_qutrit(cfg) -> float:
    return float(cfg.loss.p_th) if cfg.loss.p_th is not None else 0.0


def golden_section(f: Callable[[float], float], lo: float, hi: float, x0: float | None = None,
                   tol: float = 1e-3, max_evals: int = 40) -> tuple[float, float, list]:
    """Maximize a unimodal ``f`` on [lo, hi].

    Returns (x_best, f_best, history) with one ``(x, f(x), best_so_far)``
    entry per evaluation; ``x0`` is evaluated first and seeds the best value.
    """
    inv = (math.sqrt(5) - 1) / 2
    hist = []
    best = [None, -math.inf]

    def ev(x):
        y = float(f(x))
        if not math.isfinite(y):
            raise FloatingPointError(f"objective is not finite at {x}")
        if y > best[1]:
            best[:] = [x, y]
        hist.append((x, y, best[1]))
        return y

    if x0 is not None:
        ev(x0)
    a, b = lo, hi
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = ev(c), ev(d)
    while b - a > tol and len(hist) < max_evals:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = ev(d)
    return best[0], best[1], hist


def optimize_catch(cfg: ScenarioConfig, tol: float = 0.01, max_evals: int = 16) -> ScenarioResult:
    """Tune the catch-coupling scale, then the modulation depth, for the
    largest P(gf) + P(fg)."""
    if not cfg.modulation.enabled:
        raise ConfigError("optimize_catch needs the modulation enabled")
    x_star = cfg.modulation.ratio if cfg.modulation.ratio is not None else bessel_balance_ratio()

    def objective(scale, ratio):
        P = _catch_run(cfg, scale, ratio).final
        return P[0, 2] + P[2, 0]

    s_best, f1, h1 = golden_section(lambda s: objective(s, x_star), 0.25, 2.0, x0=1.0, tol=tol, max_evals=max_evals)
    r_best, f2, h2 = golden_section(lambda r: objective(s_best, r), 0.5 * x_star, 1.5 * x_star, x0=x_star,
                                    tol=tol * x_star, max_evals=max_evals)
    rows = [(i, "kappa_scale", x, x_star, y, b) for i, (x, y, b) in enumerate(h1)]
    rows += [(len(h1) + i, "ratio", s_best, x, y, max(f1, b)) for i, (x, y, b) in enumerate(h2)]
    tuned = cfg.replace(**{"modulation.kappa_scale": s_best, "modulation.ratio": r_best})
    rec = _catch_run(tuned)
    P = rec.final
    ext = {"kappa_scale": s_best, "ratio": r_best, "ratio_balance": x_star, "objective": max(f1, f2),
           "final": {"gf": P[0, 2], "fg": P[2, 0], "ee": P[1, 1]}}
    n1 = readout.n_mean(P[1].sum(), P[2].sum())
    n2 = readout.n_mean(P[:, 1].sum(), P[:, 2].sum())
    return ScenarioResult(
        "optimize_catch", readout.Metrics(n_mean=(float(n1), float(n2))), ext, trace=rec,
        sweep_header=["eval", "stage", "kappa_scale", "ratio", "objective", "best"], sweep_rows=rows,
        tables={"final": P},
    )


def modulation_round_trip(full: bool, sigma: float = 120.0, chi: float = TWO_PI * 0.185,
                          steps_per_period: int = 40, delay_periods: int = 4,
                          kappa_max: float = 1.0) -> tuple[TraceRecord, FewExcState]:
    """Release |f> from node 1 down a straight channel and catch it at node 2
    with the time-reversed schedule and drive.

    ``full`` integrates the cos(Omega t) level modulation with the bare
    ladder; otherwise the effective harmonic ladder is used.  Times are
    whole modulation periods so the lab and sideband frames coincide at the
    end.
    """
    period = TWO_PI / chi
    dt = period / steps_per_period
    c = math.ceil(10 * sigma / period) * period
    d = delay_periods * period
    n_periods = math.floor((2 * c + d + 12 * sigma) / period)
    grid = TimeGrid(0.0, dt, n_periods * steps_per_period + 2)
    top = build(dt, d, d, bs_t=1.0, bs_r=0.0)
    drive = modulation_for(chi)
    rel = emission_schedule(make_sech(sigma, c, grid)).scaled(1 / abs(ladder_coefficients(drive).c_ge) ** 2)
    catch = catch_schedule(rel, c + d)
    kw = dict(levels=3, chi=chi, kappa_max=kappa_max, full_modulation=full)
    nodes = [NodeParams(schedule=rel, modulation=drive, **kw),
             NodeParams(schedule=catch, modulation=drive.conjugate(), **kw)]
    st = FewExcState.nodes_excited(top, [0, 0])
    return evolve(top, nodes, st, n_periods * steps_per_period, grid)


def state_fidelity(a: FewExcState, b: FewExcState) -> float:
    """|<a|b>| over the coherent two-excitation amplitudes."""
    x, y = a.pair, b.pair
    return float(abs(np.vdot(x, y)) / (np.linalg.norm(x) * np.linalg.norm(y)))


# -- frequency-domain curves ---------------------------------------------------------------

def run_scatter_theory(cfg: ScenarioConfig) -> ScenarioResult:
    deltas_mhz = sweep_values(cfg.sweep.delta_MHz)
    grid = _grid(cfg)
    u = make_sech(cfg.pulse.sigma, 0.5 * grid.n * grid.dt, grid)
    res = detuning_sweep(u, cfg.scatter.kappa_max, mhz_to_rad_per_ns(deltas_mhz))
    rows = [(f, r.phase, r.distortion) for f, r in zip(deltas_mhz, res)]
    dist = np.array([r.distortion for r in res])
    e = readout.extrema(dist, deltas_mhz)
    ext = {"distortion_max": e.value_max, "distortion_min": e.value_min,
           "delta_MHz_at_distortion_max": e.at_max, "crossings_MHz": scatter_crossings(cfg)}
    return ScenarioResult("scatter_theory", readout.Metrics(), ext,
                          sweep_header=["delta_MHz", "phase_rad", "distortion"], sweep_rows=rows, probe=u)


SCENARIOS: dict[str, Callable[[ScenarioConfig], ScenarioResult]] = {
    "single_split": run_single_split,
    "hom": run_hom_sweep,
    "mz_single": run_mz_single,
    "two_phonon_phase": run_two_phonon_phase,
    "two_phonon_coupling": run_two_phonon_coupling,
    "two_phonon_catch": run_two_phonon_catch,
    "optimize_catch": optimize_catch,
    "scatter_theory": run_scatter_theory,
}


def run(cfg: ScenarioConfig) -> ScenarioResult:
    validate(cfg)
    return SCENARIOS[cfg.scenario](cfg)

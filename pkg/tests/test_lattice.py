import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from phononsim.envelope import TimeGrid, make_sech
from phononsim.lattice import (
    FewExcState, NodeParams, TopologyError, build, evolve, exchange_angle, populations,
)
from phononsim.pulse import CouplerSchedule, catch_schedule, emission_schedule

GRID = TimeGrid(0.0, 0.5, 2400)
SIG = 20.0


def split_nodes(top):
    rel = emission_schedule(make_sech(SIG, 160.0, GRID))
    d = top.arm_delay_left
    return [NodeParams(schedule=rel + catch_schedule(rel, 160.0 + d), kappa_max=0.5),
            NodeParams(schedule=catch_schedule(rel, 160.0 + d), kappa_max=0.5)]


def test_build_validates():
    with pytest.raises(TopologyError):
        build(0.5, 250.0, 250.0, bs_t=0.9, bs_r=0.9)
    with pytest.raises(TopologyError):
        build(0.5, 250.2, 250.0)
    with pytest.raises(TopologyError):
        build(0.5, 250.0, 250.0, link_efficiency=1.5)
    top = build(0.5, 250.0, 250.0)
    U = top.bs_matrix()
    assert np.allclose(U @ U.conj().T, np.eye(2))


def test_exchange_angle_gives_exact_bare_decay():
    kappa, dt = 0.3, 0.5
    assert math.cos(exchange_angle(kappa, dt)) ** 2 == pytest.approx(math.exp(-kappa * dt))


def test_free_decay_of_a_node():
    top = build(0.5, 250.0, 250.0)
    sched = np.full(GRID.n, 0.05)
    nodes = [NodeParams(schedule=CouplerSchedule(GRID, sched)), NodeParams()]
    rec, _ = evolve(top, nodes, FewExcState.nodes_excited(top, [0]), 200, GRID)
    # nothing has returned yet, so the node decays at kappa
    assert rec.p_level(0, "e")[-1] == pytest.approx(math.exp(-0.05 * 100.0), rel=1e-9)


def test_balanced_split_and_norm():
    top = build(0.5, 250.0, 250.0)
    rec, st = evolve(top, split_nodes(top), FewExcState.nodes_excited(top, [0]), 1600, GRID)
    P = rec.final
    assert P[1, 0] == pytest.approx(0.5, abs=1e-4)
    assert P[0, 1] == pytest.approx(0.5, abs=1e-4)
    assert st.coherent_norm() == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=6, deadline=None)
@given(eta=st.floats(0.1, 1.0))
def test_leak_accounts_for_link_loss(eta):
    top = build(0.5, 250.0, 250.0, link_efficiency=eta)
    rec, st = evolve(top, split_nodes(top), FewExcState.nodes_excited(top, [0]), 1600, GRID)
    caught = rec.final[1, 0] + rec.final[0, 1]
    assert caught == pytest.approx(eta, abs=2e-4)
    assert st.coherent_norm() + st.leaked == pytest.approx(1.0, abs=1e-9)


def test_jump_mode_is_seeded():
    top = build(0.5, 250.0, 250.0, link_efficiency=0.5)
    runs = [evolve(top, split_nodes(top), FewExcState.nodes_excited(top, [0, 1]), 1600, GRID,
                   loss_mode="jump", seed=s, n_traj=64)[0].final for s in (3, 3)]
    assert np.array_equal(runs[0], runs[1])
    assert runs[0].sum() == pytest.approx(1.0, abs=1e-9)


def test_two_level_node_rejects_double_excitation():
    top = build(0.5, 250.0, 250.0)
    st = FewExcState.nodes_excited(top, [0, 0])
    with pytest.raises(ValueError):
        evolve(top, [NodeParams(), NodeParams()], st, 10, GRID)


def test_populations_of_initial_states():
    top = build(0.5, 250.0, 250.0)
    assert populations(FewExcState.nodes_excited(top, [0, 1]), top)[1, 1] == pytest.approx(1.0)
    assert populations(FewExcState.nodes_excited(top, [1, 1]), top)[0, 2] == pytest.approx(1.0)


def test_schedule_above_cap_rejected():
    rel = emission_schedule(make_sech(SIG, 160.0, GRID))
    with pytest.raises(ValueError):
        NodeParams(schedule=rel, kappa_max=0.05)


def test_trace_csv(tmp_path):
    top = build(0.5, 250.0, 250.0)
    rec, _ = evolve(top, split_nodes(top), FewExcState.nodes_excited(top, [0]), 20, GRID)
    rec.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("t_ns,P1_e") and len(lines) == 22

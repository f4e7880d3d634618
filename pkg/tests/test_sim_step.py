import numpy as np
import pytest

from clothbench.sim.config import SimConfig
from clothbench.sim.mesh import STRETCH, Spring, build_cloth, build_particle_system
from clothbench.sim.pbd import project_spring_groups, settle, step
from clothbench.sim.state import SimState, attach, flatten_reference, release


def free_particle_state(y=1.0):
    sys_ = build_particle_system(1, [])
    state = SimState(positions=np.array([[0.0, y, 0.0]]), velocities=np.zeros((1, 3)))
    return sys_, state


def test_free_fall_one_step_closed_form():
    sys_, state = free_particle_state(y=1.0)
    cfg = SimConfig(self_collision=False)
    out = step(state, sys_, dt=0.05, config=cfg)
    # semi-implicit Euler: v' = v - g dt, x' = x + v' dt
    assert np.allclose(out.velocities[0], [0.0, -0.4905, 0.0], atol=1e-12)
    assert np.allclose(out.positions[0] - state.positions[0], [0.0, -0.024525, 0.0], atol=1e-12)


def test_pbd_projection_one_iteration_closed_form():
    x = np.array([[0.0, 0.0, 0.0], [0.02, 0.0, 0.0]])
    w = np.ones(2)
    groups = [np.array([0])]
    project_spring_groups(
        x, w, groups,
        si=np.array([0]), sj=np.array([1]),
        rest=np.array([0.01]), stiff=np.array([1.0]),
    )
    # each endpoint moves 0.005 m toward the midpoint
    assert np.allclose(x[0], [0.005, 0.0, 0.0], atol=1e-12)
    assert np.allclose(x[1], [0.015, 0.0, 0.0], atol=1e-12)


def test_pbd_projection_respects_stiffness_and_mass():
    x = np.array([[0.0, 0.0, 0.0], [0.02, 0.0, 0.0]])
    w = np.array([0.0, 1.0])  # first particle pinned
    project_spring_groups(
        x, w, [np.array([0])],
        si=np.array([0]), sj=np.array([1]),
        rest=np.array([0.01]), stiff=np.array([0.5]),
    )
    assert np.allclose(x[0], [0.0, 0.0, 0.0])
    assert np.allclose(x[1], [0.015, 0.0, 0.0])  # half the full 0.01 correction


def test_picked_particle_is_kinematic():
    mesh = build_cloth(4, 4)
    state = flatten_reference(mesh)
    attach(state, state.positions[0])
    before = state.positions[0].copy()
    out = step(state, mesh, picker_delta=(0.01, 0.0, 0.0), dt=0.05)
    assert np.allclose(out.positions[0] - before, [0.01, 0.0, 0.0], atol=1e-15)
    assert np.allclose(out.velocities[0], [0.2, 0.0, 0.0], atol=1e-15)
    assert np.array_equal(out.positions[out.picked], out.picker_position)


def test_non_finite_state_rejected():
    sys_, state = free_particle_state()
    state.positions[0, 0] = np.nan
    with pytest.raises(ValueError):
        step(state, sys_, dt=0.05)


def test_dropped_flat_cloth_settles():
    mesh = build_cloth(8, 8)
    state = flatten_reference(mesh)
    state.positions[:, 1] += 0.03  # drop from 3 cm
    for _ in range(200):
        state = step(state, mesh)
    ke = 0.5 * np.sum(state.velocities**2, axis=1)
    assert ke.mean() < 1e-6  # total kinetic energy per particle
    # stretch springs within 10% of rest length after settling
    for s in mesh.springs:
        if s.kind != STRETCH:
            continue
        length = np.linalg.norm(state.positions[s.i] - state.positions[s.j])
        assert abs(length - s.rest_length) / s.rest_length < 0.10


def test_ground_plane_invariant():
    mesh = build_cloth(6, 6)
    state = flatten_reference(mesh)
    state.positions[:, 1] += 0.05
    floor = mesh.particle_radius  # table at y=0
    for _ in range(80):
        state = step(state, mesh)
        assert state.positions[:, 1].min() >= floor - 1e-9


def test_step_determinism():
    mesh = build_cloth(6, 6)

    def run():
        state = flatten_reference(mesh)
        attach(state, state.positions[14])
        traj = []
        for t in range(20):
            state = step(state, mesh, picker_delta=(0.001, 0.002, 0.0))
            traj.append(state.positions.copy())
        release(state)
        for t in range(10):
            state = step(state, mesh)
            traj.append(state.positions.copy())
        return np.stack(traj)

    a, b = run(), run()
    assert np.array_equal(a, b)


def test_settle_helper():
    mesh = build_cloth(4, 4)
    state = flatten_reference(mesh)
    out = settle(state, mesh, 3)
    assert out.time == pytest.approx(3 * 0.05)

import csv

import numpy as np
import pytest

from artifact.diagnostics import energy
from artifact.errors import InvalidArgument
from artifact.flow import FlowConfig, Trajectory, default_dt, rhs, run_flow, step, write_trajectory_csv
from artifact.gluing import NoiseSpec
from artifact.grid import SphereMapField, make_grid
from artifact.profiles import omega

from conftest import sup


def _constant(g):
    return SphereMapField(g, np.zeros(g.N), np.ones(g.N))


def _bubble(g):
    return SphereMapField.from_array(g, omega(g.x))


def _smooth_random_map(g, rng):
    x = g.x
    ang = sum(rng.uniform(-1, 1) * np.exp(-(((x - rng.uniform(-3, 3)) / rng.uniform(0.5, 2)) ** 2)) for _ in range(4))
    return SphereMapField(g, np.sin(ang), np.cos(ang))


def test_config_validation():
    with pytest.raises(InvalidArgument):
        FlowConfig(0.0, 1.0)
    with pytest.raises(InvalidArgument):
        FlowConfig(0.1, 1.0, scheme="rk45")
    with pytest.raises(InvalidArgument):
        FlowConfig(0.1, 1.0, stride=0)
    assert FlowConfig(0.1, 1.0).n_steps == 10
    assert default_dt(make_grid(100, 4001)) == pytest.approx(0.0125)


def test_rhs_vanishes_on_constant_map():
    g = make_grid(100, 2048)
    assert sup(rhs(_constant(g))) < 1e-14


@pytest.mark.parametrize("backend", ["spectral", "pv"])
def test_bubble_is_stationary(default_grid, backend):
    assert sup(rhs(_bubble(default_grid), backend)) <= 1e-4


def test_rhs_is_tangent(default_grid, rng):
    u = _smooth_random_map(default_grid, rng)
    assert sup(np.sum(rhs(u) * u.u, axis=0)) <= 1e-6


@pytest.mark.parametrize("scheme", ["semi-implicit-spectral", "etd1", "explicit-pv"])
def test_constant_map_is_unchanged(scheme):
    g = make_grid(50, 1024)
    u = _constant(g)
    v = step(u, FlowConfig(0.5 * g.h, 1.0, scheme))
    assert sup(v.u - u.u) < 1e-14


@pytest.mark.parametrize("scheme", ["semi-implicit-spectral", "etd1", "explicit-pv"])
def test_step_keeps_unit_length(scheme, rng):
    g = make_grid(50, 1024)
    v = step(_smooth_random_map(g, rng), FlowConfig(0.25 * g.h, 1.0, scheme))
    assert sup(np.hypot(v.u1, v.u2) - 1.0) <= 1e-15 * 2.5


def test_lie_drift_constant_stable_under_refinement():
    consts = []
    for N in (2**13, 2**14, 2**15):
        g = make_grid(200, N)
        dt = 0.25 * g.h
        u = _bubble(g)
        drift = sup(step(u, FlowConfig(dt, dt, "semi-implicit-spectral")).u - u.u)
        consts.append(drift / (dt * dt + dt * g.h**2))
    assert max(consts) < 1.0
    for a, b in zip(consts, consts[1:]):
        assert 0.5 < b / a < 2.0


def test_exponential_euler_keeps_bubble_fixed(default_grid):
    u = _bubble(default_grid)
    v = step(u, FlowConfig(0.05, 0.05, "etd1"))
    assert sup(v.u - u.u) < 1e-12


def test_schemes_agree_to_second_order():
    g = make_grid(100, 4096)
    u = SphereMapField.from_array(g, omega(g.x) + NoiseSpec(0.1).initial(g.x), renormalize=True)
    gaps = []
    for dt in (0.02, 0.01):
        a = step(u, FlowConfig(dt, dt, "semi-implicit-spectral"))
        b = step(u, FlowConfig(dt, dt, "etd1"))
        gaps.append(sup(a.u - b.u))
    assert gaps[1] < 0.3 * gaps[0]


def test_explicit_pv_follows_spectral_scheme():
    g = make_grid(40, 801)
    u = SphereMapField.from_array(g, omega(g.x) + NoiseSpec(0.1).initial(g.x), renormalize=True)
    dt = 0.1 * g.h
    a = step(u, FlowConfig(dt, dt, "explicit-pv"))
    b = step(u, FlowConfig(dt, dt, "etd1"))
    assert sup(a.u - b.u) < 1e-4


def test_constant_trajectory():
    g = make_grid(50, 1024)
    traj = run_flow(_constant(g), FlowConfig(0.05, 0.5, "etd1", stride=2))
    assert traj.times == pytest.approx([0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    assert np.all(traj.column("energy") == traj.column("energy")[0])
    assert np.all(traj.column("sup_norm_deviation") == 0.0)
    assert np.all(np.isnan(traj.column("mu")))


def test_bubble_energy_conserved_over_unit_time(default_grid):
    g = default_grid
    traj = run_flow(_bubble(g), FlowConfig(0.25 * g.h, 1.0, "semi-implicit-spectral", stride=40), keep_states=False)
    assert np.max(np.abs(traj.column("energy") - np.pi)) <= 1e-3


def test_energy_dissipated_for_perturbed_bubble():
    g = make_grid(200, 8192)
    u = SphereMapField.from_array(g, omega(g.x) + NoiseSpec(0.1).initial(g.x), renormalize=True)
    cfg = FlowConfig(0.25 * g.h, 1.0, "semi-implicit-spectral")
    e = [energy(u)]
    for _ in range(50):
        u = step(u, cfg)
        e.append(energy(u))
    assert np.max(np.diff(e)) <= 1e-6


def test_trajectory_times_must_increase():
    g = make_grid(10, 101)
    traj = Trajectory()
    from artifact.flow import sample_diagnostics

    rec = sample_diagnostics(0.0, _constant(g))
    traj.append(0.0, None, rec)
    with pytest.raises(InvalidArgument):
        traj.append(0.0, None, rec)


def test_trajectory_csv_and_dumps(tmp_path):
    g = make_grid(50, 1024)
    traj = run_flow(_bubble(g), FlowConfig(0.1, 0.3, "etd1", dump_every=1), dump_dir=tmp_path / "f")
    write_trajectory_csv(tmp_path / "t.csv", traj)
    rows = list(csv.reader(open(tmp_path / "t.csv")))
    assert rows[0] == ["t", "energy", "mu", "xi", "sup_norm_deviation"]
    assert len(rows) == 1 + len(traj.times) == 5
    assert sorted(p.name for p in (tmp_path / "f").iterdir()) == [f"field_{k:06d}.csv" for k in range(4)]

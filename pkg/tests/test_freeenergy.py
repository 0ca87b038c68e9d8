import math

import numpy as np
import pytest

import radial_oracle as oracle
from gelfand.errors import (InvalidDelta, InvalidDensity, NoConvergence,
                            UnsupportedRegime)
from gelfand.freeenergy import (collar_density, free_energy_of,
                                interaction_energy, minimize_free_energy,
                                verify_energy_bound)
from gelfand.geometry import (DomainSpec, SingularitySpec, build_mesh,
                              build_weight, uniform_weight)
from gelfand.meanfield import MeanFieldProblem


def uniform_density(mesh):
    return np.full(mesh.n_vertices, 1.0 / mesh.area())


def test_uniform_density_terms(disk_problem):
    mesh = disk_problem.mesh
    state = free_energy_of(disk_problem, uniform_density(mesh), lam=-1.0)
    assert state.entropy_term == pytest.approx(-math.log(mesh.area()), abs=1e-12)
    assert state.energy == pytest.approx(oracle.E0, rel=5e-3)
    assert state.linear_term == pytest.approx(0.0, abs=1e-12)
    assert state.free_energy == pytest.approx(
        state.entropy_term - state.lam * state.energy - state.linear_term, abs=1e-12)


def test_collar_oracle(disk_problem):
    for delta in (0.2, 0.1):
        rho = collar_density(disk_problem.mesh, delta)
        e = interaction_energy(disk_problem, rho)
        assert e == pytest.approx(oracle.collar_energy(delta), rel=0.03), delta


def test_collar_oracle_thin_needs_resolved_boundary():
    # delta below the bulk cell size needs a boundary-refined mesh
    dom = DomainSpec.unit_disk(boundary_size=0.02)
    mesh = build_mesh(dom, SingularitySpec.none(), h_max=0.1)
    problem = MeanFieldProblem(mesh, uniform_weight(mesh))
    rho = collar_density(mesh, 0.05)
    e = interaction_energy(problem, rho)
    assert e == pytest.approx(oracle.collar_energy(0.05), rel=0.03)


def test_collar_energy_decreases(disk_problem):
    es = [interaction_energy(disk_problem, collar_density(disk_problem.mesh, d))
          for d in (0.2, 0.1, 0.05)]
    assert es[0] > es[1] > es[2] > 0


def test_collar_guards(disk_problem):
    mesh = disk_problem.mesh
    for delta in (0.0, -0.1, 1.0, 2.0):
        with pytest.raises(InvalidDelta):
            collar_density(mesh, delta)


def test_density_guards(disk_problem):
    n = disk_problem.mesh.n_vertices
    with pytest.raises(InvalidDensity):
        free_energy_of(disk_problem, np.full(n, -1.0), -1.0)
    with pytest.raises(InvalidDensity):
        free_energy_of(disk_problem, 3.0 * uniform_density(disk_problem.mesh), -1.0)


def test_minimizer_matches_newton(disk_problem):
    state = minimize_free_energy(disk_problem, -1.0)
    mp = disk_problem.solve_mp(-1.0)
    assert np.max(np.abs(state.potential - mp.psi)) < 1e-6
    assert state.energy == pytest.approx(mp.energy, rel=1e-8)
    assert state.el_residual <= 1e-8
    assert state.iterations > 0


def test_minimizer_beats_competitors(disk_problem):
    lam = -20.0
    best = minimize_free_energy(disk_problem, lam)
    uni = free_energy_of(disk_problem, uniform_density(disk_problem.mesh), lam)
    col = free_energy_of(disk_problem, collar_density(disk_problem.mesh, 0.1), lam)
    assert best.free_energy < uni.free_energy < col.free_energy


def test_minimizer_energy_decreases_with_lambda(disk_problem):
    es = [minimize_free_energy(disk_problem, lam).energy
          for lam in (-2.0, -20.0, -200.0)]
    assert es[0] > es[1] > es[2] > 0


def test_floor_invariance_for_constant_weight(disk_problem):
    # h constant: the floor rescales h_n uniformly and cancels from rho
    mesh = disk_problem.mesh
    outs = []
    for n in (10, 1000):
        problem = MeanFieldProblem(mesh, uniform_weight(mesh).with_floor(n))
        outs.append(minimize_free_energy(problem, -20.0, n=n))
    assert np.max(np.abs(outs[0].rho - outs[1].rho)) < 1e-8
    assert outs[0].energy == pytest.approx(outs[1].energy, abs=1e-10)
    assert outs[0].n == 10 and outs[1].n == 1000


def test_unsupported_regime(disk_problem):
    for lam in (0.0, 1.0):
        with pytest.raises(UnsupportedRegime):
            minimize_free_energy(disk_problem, lam)


def test_descent_cap_raises(disk_problem):
    with pytest.raises(NoConvergence):
        minimize_free_energy(disk_problem, -20.0, max_iter=2)


def test_energy_bound_chain(disk_problem):
    report = verify_energy_bound(disk_problem, -20.0, 0.1)
    for name, slack in report.slacks.items():
        assert slack >= -1e-9, name
    assert report.energy_value <= report.energy_bound
    assert report.jensen_slack >= 0.0


def test_energy_bound_chain_singular():
    sing = SingularitySpec.of((0.5, 0.0, 0.05))
    mesh = build_mesh(DomainSpec.unit_disk(), sing, h_max=0.12)
    problem = MeanFieldProblem(mesh, build_weight(mesh, sing).with_floor(100))
    report = verify_energy_bound(problem, -20.0, 0.1)
    for name, slack in report.slacks.items():
        assert slack >= -1e-9, name


def test_quad_state_consistency(disk_problem):
    # the minimizer state reports a unit-mass density and coherent terms
    state = minimize_free_energy(disk_problem, -2.0)
    m = disk_problem.plain.assemble_load(None)
    assert float(m @ state.rho) == pytest.approx(1.0, abs=1e-12)
    assert state.free_energy == pytest.approx(
        state.entropy_term - state.lam * state.energy - state.linear_term,
        abs=1e-12)
    assert state.jensen_min_slack >= 0.0

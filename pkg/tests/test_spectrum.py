import math

import numpy as np
import pytest

import radial_oracle as oracle
from gelfand.branch import solve_eta
from gelfand.meanfield import Linearization
from gelfand.spectrum import (dense_sigma_oracle, expand_modes,
                              poincare_constant, standard_tau1, weighted_eigs)


@pytest.fixture(scope="module")
def coarse_states(coarse_problem):
    return {lam: coarse_problem.solve_mp(lam) for lam in (0.0, -20.0, 4.0 * math.pi)}


def test_bessel_oracles_at_lambda_zero(coarse_problem, coarse_states):
    report = weighted_eigs(coarse_problem, coarse_states[0.0], k=5)
    # discrete eigenvalues approach the Bessel values from above
    assert report.tau1 == pytest.approx(oracle.TAU1_DISK, rel=0.02)
    assert report.poincare == pytest.approx(oracle.POINCARE_DISK, rel=0.02)
    assert report.tau1 >= oracle.TAU1_DISK
    assert report.poincare >= oracle.POINCARE_DISK
    assert report.sigmas[0] == pytest.approx(math.pi * oracle.J1_1 ** 2, rel=0.03)


def test_orderings(coarse_problem, coarse_states):
    for lam, state in coarse_states.items():
        report = weighted_eigs(coarse_problem, state, k=3)
        assert report.sigmas[0] >= report.tau1 > 0.0
        assert report.sigmas[0] + lam >= report.poincare > 0.0
        assert np.all(np.diff(report.sigmas) >= -1e-10)


def test_dense_matches_sparse(coarse_problem, coarse_states):
    state = coarse_states[0.0]
    assert len(coarse_problem.interior) <= 500
    dense = weighted_eigs(coarse_problem, state, k=5, dense_cutoff=10 ** 9)
    sparse = weighted_eigs(coarse_problem, state, k=5, dense_cutoff=0)
    assert dense.method == "dense" and sparse.method == "sparse"
    assert np.max(np.abs(dense.sigmas - sparse.sigmas)) < 1e-8
    ref = dense_sigma_oracle(coarse_problem, state, k=5)
    assert np.max(np.abs(ref - dense.sigmas[:5])) < 1e-10


def test_vectors_clean(coarse_problem, coarse_states):
    report = weighted_eigs(coarse_problem, coarse_states[0.0], k=6)
    assert report.ortho_error < 1e-8
    assert report.mean_error < 1e-9
    # eigenvectors vanish on the boundary
    mask = coarse_problem.mesh.boundary_mask
    assert np.max(np.abs(report.phis[mask])) == 0.0


def test_rayleigh_upper_bound(coarse_problem, coarse_states):
    # any mean-free Dirichlet trial field bounds sigma1 from above
    state = coarse_states[0.0]
    report = weighted_eigs(coarse_problem, state, k=1)
    lin = Linearization.at_state(coarse_problem, state)
    mesh = coarse_problem.mesh
    trial = (1.0 - np.sum(mesh.vertices ** 2, axis=1)) * mesh.vertices[:, 0]
    trial[mesh.boundary_mask] = 0.0
    num = float(trial @ (coarse_problem.A @ trial))
    mhat = float(trial @ (lin.M_rho @ trial)) - float(lin.b @ trial) ** 2
    assert report.sigmas[0] <= num / mhat + 1e-9


def test_mode_coefficient_identity(coarse_problem):
    # a_j = sigma_j b_j ties the state, its derivative and the modes together
    state = coarse_problem.solve_mp(2.0)
    eta = solve_eta(coarse_problem, state)
    report = weighted_eigs(coarse_problem, state, k=8)
    modes = expand_modes(coarse_problem, state, eta, report)
    scale = np.max(np.abs(modes.a)) + 1e-30
    assert np.max(np.abs(modes.a - report.sigmas[:8] * modes.b)) < 1e-6 * scale


def test_spectral_eta_reconstruction_improves(coarse_problem):
    state = coarse_problem.solve_mp(3.0)
    eta = solve_eta(coarse_problem, state)
    errs = []
    for k in (5, 20):
        eta_k = solve_eta(coarse_problem, state, spectrum_free=False, k=k)
        errs.append(np.max(np.abs(eta_k - eta)))
    assert errs[1] < errs[0]


def test_tau1_and_poincare_standalone(coarse_problem, coarse_states):
    state = coarse_states[-20.0]
    t = standard_tau1(coarse_problem, state)
    c = poincare_constant(coarse_problem, state)
    assert t > 0 and c > 0
    report = weighted_eigs(coarse_problem, state, k=1)
    assert t == pytest.approx(report.tau1, rel=1e-10)
    assert c == pytest.approx(report.poincare, rel=1e-10)

import math

import numpy as np
import pytest

import radial_oracle as oracle
from gelfand.branch import (CSV_HEADER, BranchDiagram, BranchPoint,
                            TraceConfig, classify_kind, dE_dlambda,
                            emit_diagram, find_fold, g_of, plot_csv, read_csv,
                            solve_eta, write_csv)
from gelfand.errors import NoFoldInRange
from gelfand.meanfield import EIGHT_PI
from gelfand.spectrum import expand_modes, weighted_eigs


def test_g_at_zero_is_one(disk_problem):
    state = disk_problem.solve_mp(0.0)
    diag = g_of(disk_problem, state)
    assert diag.g == pytest.approx(1.0, abs=1e-12)
    assert diag.identity_error < 1e-12


def test_g_identity_form(disk_problem):
    # <z> assembled as 2E + lambda <eta> must agree with the direct average
    for lam in (-5.0, 2.0, 9.0):
        state = disk_problem.solve_mp(lam)
        diag = g_of(disk_problem, state)
        assert diag.identity_error < 1e-6


def test_derivative_direct_vs_finite_difference(disk_problem):
    lam, dl = 1.0, 1e-3
    state = disk_problem.solve_mp(lam)
    eta = solve_eta(disk_problem, state)
    pair = dE_dlambda(disk_problem, state, eta)
    e_plus = disk_problem.solve_mp(lam + dl, initial_guess=state.psi).energy
    e_minus = disk_problem.solve_mp(lam - dl, initial_guess=state.psi).energy
    fd = (e_plus - e_minus) / (2.0 * dl)
    assert pair.direct == pytest.approx(fd, abs=1e-6)


def test_spectral_sum_from_below(disk_problem):
    state = disk_problem.solve_mp(6.0)
    eta = solve_eta(disk_problem, state)
    direct = dE_dlambda(disk_problem, state, eta).direct
    report = weighted_eigs(disk_problem, state, k=20)
    modes = expand_modes(disk_problem, state, eta, report)
    terms = (state.lam + report.sigmas) * report.sigmas * modes.b ** 2
    assert np.all(terms >= -1e-12)
    s5, s20 = float(np.sum(terms[:5])), float(np.sum(terms[:20]))
    assert s5 <= s20 <= direct + 1e-10
    assert direct - s20 < direct - s5


def test_fold_matches_radial_family(disk_trace):
    fold = disk_trace["diagram"].fold
    assert fold is not None
    lam_star, e_star, mu_star = fold
    assert lam_star == pytest.approx(oracle.FOLD_LAM, rel=0.01)
    assert mu_star == pytest.approx(oracle.FOLD_MU, rel=0.01)
    assert e_star == pytest.approx(oracle.energy_of_c(1.0), rel=0.01)


def test_g_sign_structure(disk_trace):
    diagram = disk_trace["diagram"]
    lam_star = diagram.fold[0]
    rows = diagram.points
    assert all(r.g_value > 0 for r in rows if r.lam <= 0)
    pos = diagram.positive_rows()
    flips = sum(1 for a, b in zip(pos, pos[1:])
                if (a.g_value > 0) != (b.g_value > 0))
    assert flips == 1
    for r in pos:
        if r.lam < lam_star - 1e-6:
            assert r.g_value > 0
        elif r.lam > lam_star + 1e-6:
            assert r.g_value < 0


def test_fold_state_diagnostics(disk_trace):
    # at the fold: positive skewness of z and no negative dip beyond roundoff
    problem = disk_trace["problem"]
    lam_star = disk_trace["diagram"].fold[0]
    state = problem.solve_mp(lam_star)
    diag = g_of(problem, state)
    assert abs(diag.g) < 1e-6
    assert diag.z3_avg > 0.0
    assert diag.z_min >= -1e-6


def test_energy_monotone(disk_trace):
    rows = disk_trace["diagram"].points
    lams = [r.lam for r in rows]
    assert lams == sorted(lams)
    energies = np.array([r.energy for r in rows])
    assert np.all(np.diff(energies) > 0)
    assert all(r.dE_dlambda > 0 for r in rows)


def test_markers_and_kind(disk_trace):
    diagram = disk_trace["diagram"]
    assert diagram.kind == "first"
    assert diagram.termination in ("completed", "blowup")
    assert diagram.mu_at_min < 0
    assert diagram.mu1_estimate is not None
    assert diagram.mu1_estimate < diagram.fold[2]


def test_csv_roundtrip(tmp_path, disk_trace):
    rows = disk_trace["diagram"].points
    path = tmp_path / "branch.csv"
    write_csv(rows, path)
    back = read_csv(path)
    assert len(back) == len(rows)
    for a, b in zip(rows, back):
        for field in ("lam", "mu", "energy", "dE_dlambda", "g_value",
                      "sigma1", "tau1", "poincare", "sup_norm", "residual"):
            assert getattr(a, field) == getattr(b, field), field


def test_csv_header_contract(tmp_path, disk_trace):
    path = tmp_path / "branch.csv"
    write_csv(disk_trace["diagram"].points[:2], path)
    first = path.read_text().splitlines()[0]
    assert first == "lambda,mu,E,dEdlambda,g,sigma1,tau1,CP,sup_psi,residual"
    assert first == CSV_HEADER


def test_read_csv_rejects_other_headers(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        read_csv(bad)


def _row(lam, g):
    return BranchPoint(lam=lam, mu=lam / 10.0, energy=0.01 * lam,
                       dE_dlambda=0.01, g_value=g, sigma1=1.0, tau1=0.5,
                       poincare=0.4, sup_norm=0.1, residual=1e-10)


def test_no_fold_without_sign_change(disk_problem):
    diagram = BranchDiagram(points=[_row(1.0, 0.9), _row(2.0, 0.8)])
    with pytest.raises(NoFoldInRange):
        find_fold(disk_problem, diagram)


def test_fold_rejects_multiple_crossings(disk_problem):
    points = [_row(1.0, 0.5), _row(2.0, -0.1), _row(3.0, 0.2), _row(4.0, -0.3)]
    with pytest.raises(NoFoldInRange):
        find_fold(disk_problem, BranchDiagram(points=points))


def test_classify_requires_rows():
    assert classify_kind(BranchDiagram(points=[])) == "undetermined"


def test_classify_short_run_undetermined():
    # a branch that never reaches the sampling edge stays undetermined
    points = [_row(l, 0.9) for l in np.linspace(0.5, 12.0, 8)]
    assert classify_kind(BranchDiagram(points=points)) == "undetermined"


def test_emit_diagram_files(tmp_path, disk_trace):
    paths = emit_diagram(disk_trace["diagram"], tmp_path)
    names = sorted(p.rsplit("/", 1)[-1] for p in paths)
    assert names == ["branch.csv", "branch.json", "branch_E_mu.svg",
                     "branch_lambda_E.svg", "branch_lambda_g.svg",
                     "branch_mu_E.svg"]
    again = plot_csv(tmp_path / "branch.csv", tmp_path / "again")
    for p in again:
        name = p.rsplit("/", 1)[-1]
        assert (tmp_path / name).read_bytes() == (tmp_path / "again" / name).read_bytes()


def test_z_average_rises_along_first_kind_tail(disk_trace):
    # <z> = (1 - g)/lambda keeps growing where the branch approaches 8 pi
    pts = [p for p in disk_trace["diagram"].points if p.lam > 0]
    z = [(1.0 - p.g_value) / p.lam for p in pts[-3:]]
    assert z[0] < z[1] < z[2]


def test_mu_slope_sign_locks_to_g(disk_trace):
    pts = disk_trace["diagram"].points
    checked = 0
    for prev, cur, nxt in zip(pts, pts[1:], pts[2:]):
        if abs(cur.g_value) <= 1e-3:
            continue
        if (prev.g_value > 0) != (nxt.g_value > 0):
            continue  # the difference quotient would straddle the fold
        fd = (nxt.mu - prev.mu) / (nxt.lam - prev.lam)
        assert (fd > 0) == (cur.g_value > 0), cur.lam
        checked += 1
    assert checked > 20

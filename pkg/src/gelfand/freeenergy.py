"""Free-energy minimization over probability densities for lambda < 0.

The functional splits into entropy, interaction and weight terms,

    F(rho) = int rho log rho - (lambda/2) int rho (G*rho) - int rho log h,

and is strictly convex for negative lambda, with a unique minimizer whose
Euler-Lagrange equation is exactly the mean-field equation: the minimizer's
potential G*rho solves it.  The minimizer is computed by the fixed-point
update

    psi_{k+1} = G*( h e^(lambda psi_k) / Z_k ),

damped so the free energy never increases.  The update reuses the Newton
solver's assembly path verbatim, so the fixed point agrees with the Newton
solution of the same discrete system to solver tolerance.

Two evaluation paths coexist on purpose.  Arbitrary vertex densities (collar
densities, test inputs) are evaluated as P1 fields with their own potential
solve; the minimizer's state is evaluated at the quadrature level where its
density is exact.  Both are faithful evaluations of the same discrete
functional and may be compared, as the proof-chain checks do.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (InvalidDelta, InvalidDensity, NoConvergence, SolverError,
                     UnsupportedRegime)
from .fem import assemble_mass
from .geometry import Mesh
from .meanfield import MeanFieldProblem

L1_TOL = 1e-10
MAX_ITER = 5000


@dataclass
class DensityState:
    rho: np.ndarray             # P1 probability density (unit lumped mass)
    potential: np.ndarray       # psi = G*rho, zero on the boundary
    free_energy: float
    entropy_term: float         # int rho log rho (the negative entropy)
    energy: float               # interaction energy E(rho)
    linear_term: float          # int rho log h
    lam: float
    n: float                    # weight approximation index (inf: no floor)
    iterations: int = 0
    el_residual: float = 0.0    # dual-norm Euler-Lagrange defect
    jensen_min_slack: float = np.inf


@dataclass
class EnergyBoundReport:
    """Both sides of every inequality in the lambda -> -inf proof chain."""

    lam: float
    n: float
    delta: float
    entropy_bound: float        # log|Omega|
    entropy_value: float        # S(rho) = -int rho log rho
    linear_bound: float         # log(1 + sup h)
    linear_value: float         # int rho log h
    f_minimizer: float
    f_collar: float
    energy_value: float         # E(rho_min)
    energy_bound: float         # (F + log|Omega| + log(1+sup h)) / |lambda|
    jensen_slack: float

    @property
    def slacks(self):
        return {
            "entropy": float(self.entropy_bound - self.entropy_value),
            "linear": float(self.linear_bound - self.linear_value),
            "collar": float(self.f_collar - self.f_minimizer),
            "energy": float(self.energy_bound - self.energy_value),
            "jensen": float(self.jensen_slack),
        }


def _lumped_mass(problem: MeanFieldProblem):
    return problem.plain.assemble_load(None)


def _weight_index(problem):
    floor = problem.weight.floor
    return 1.0 / floor if floor > 0 else np.inf


def free_energy_of(problem: MeanFieldProblem, rho, lam, n=None) -> DensityState:
    """Evaluate the functional at a P1 probability density.

    The density must be nonnegative with unit lumped mass to 1e-8; the
    entropy uses the 0 log 0 = 0 convention, and the weight term integrates
    log h against the density with the singularity-adapted quadrature.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < -1e-12):
        raise InvalidDensity("density has negative entries")
    rho = np.maximum(rho, 0.0)
    m = _lumped_mass(problem)
    mass = float(m @ rho)
    if abs(mass - 1.0) > 1e-8:
        raise InvalidDensity(f"density mass {mass!r} is not 1")
    M = assemble_mass(problem.mesh)
    potential = problem.dirichlet.solve(M @ rho)
    e_pair = 0.5 * float(rho @ (M @ potential))
    e_grad = 0.5 * float(potential @ (problem.A @ potential))
    if abs(e_pair - e_grad) > 1e-6 * max(abs(e_pair), 1e-12):
        raise SolverError(f"interaction energy duality violated: {e_pair!r} vs {e_grad!r}")
    vals = problem.plain.eval(rho)
    entropy_term = sum(
        float(np.sum(blk.w * np.where(v > 0, v * np.log(np.where(v > 0, v, 1.0)), 0.0)))
        for blk, v in zip(problem.plain.blocks, vals))
    linear_term = _linear_term(problem, problem.quad.eval(rho))
    free_energy = entropy_term - lam * e_pair - linear_term
    return DensityState(
        rho=rho, potential=potential, free_energy=free_energy,
        entropy_term=entropy_term, energy=e_pair, linear_term=linear_term,
        lam=lam, n=n if n is not None else _weight_index(problem))


def _linear_term(problem, rho_vals):
    """int rho log h with rho sampled at the weighted quadrature points."""
    total = 0.0
    for blk, v in zip(problem.quad.blocks, rho_vals):
        positive = blk.hval > 0
        measure = np.where(positive, blk.w / np.where(positive, blk.hval, 1.0), 0.0)
        total += float(np.sum(measure * v * np.where(positive, np.log(
            np.where(positive, blk.hval, 1.0)), 0.0)))
    return total


def interaction_energy(problem: MeanFieldProblem, rho) -> float:
    """E(rho) = (1/2) int rho (G*rho) for a P1 density."""
    M = assemble_mass(problem.mesh)
    potential = problem.dirichlet.solve(M @ np.asarray(rho, dtype=float))
    return 0.5 * float(np.asarray(rho) @ (M @ potential))


def collar_density(mesh: Mesh, delta: float) -> np.ndarray:
    """Uniform probability density on the inner delta-collar of the boundary.

    The exact indicator of {dist < delta} is sampled at the quadrature points
    and projected onto hat functions against the lumped mass, so the inner
    edge of the collar is located below the cell size in every weak pairing
    that consumes the density.  A plain vertex indicator would smear the edge
    by a full cell, which dominates the energy error once delta is only a few
    cells wide.
    """
    dist = mesh.boundary_distance()
    inradius = float(dist.max())
    if not (0.0 < delta < inradius):
        raise InvalidDelta(f"delta must lie in (0, {inradius:.4g}), got {delta}")
    from .fem import plain_quadrature
    from .geometry import _point_segment_distance
    quad = plain_quadrature(mesh)
    edges = mesh.boundary_edges()
    seg_a = mesh.vertices[edges[:, 0]]
    seg_b = mesh.vertices[edges[:, 1]]
    factors = []
    for blk in quad.blocks:
        d = _point_segment_distance(blk.pos.reshape(-1, 2), seg_a, seg_b)
        factors.append((d.reshape(blk.w.shape) < delta).astype(float))
    m = quad.assemble_load(None)
    rho = quad.assemble_load(factors) / m
    mass = float(m @ rho)
    if mass <= 0.0:
        raise InvalidDelta("collar contains no quadrature mass; refine the boundary")
    return rho / mass


# ---------------------------------------------------------------------------
# minimization


def _quad_level_state(problem, lam, psi, n, iterations, el_residual, jensen_slack):
    """Assemble a DensityState for the fixed point, at quadrature accuracy."""
    factors, log_z = problem._exp_factors(lam, psi)
    psi_vals = problem.quad.eval(psi)
    entropy = linear = avg_psi = jens = 0.0
    for blk, fac, pv in zip(problem.quad.blocks, factors, psi_vals):
        positive = blk.hval > 0
        log_h = np.where(positive, np.log(np.where(positive, blk.hval, 1.0)), 0.0)
        entropy += float(np.sum(blk.w * fac * (log_h + lam * pv - log_z)))
        linear += float(np.sum(blk.w * fac * log_h))
        avg_psi += float(np.sum(blk.w * fac * pv))
    energy = 0.5 * float(psi @ (problem.A @ psi))
    e_dual = 0.5 * avg_psi
    if abs(energy - e_dual) > 1e-6 * max(abs(energy), 1e-12):
        raise SolverError(f"interaction energy duality violated: {energy!r} vs {e_dual!r}")
    w = problem.weight.vertex_values()
    rho = w * np.exp(np.minimum(lam * psi - log_z, 700.0))
    m = _lumped_mass(problem)
    rho = rho / float(m @ rho)
    return DensityState(
        rho=rho, potential=psi, free_energy=entropy - lam * energy - linear,
        entropy_term=entropy, energy=energy, linear_term=linear,
        lam=lam, n=n, iterations=iterations, el_residual=el_residual,
        jensen_min_slack=jensen_slack)


def _jensen_slack(problem, lam, psi, log_z):
    """log of int h e^(lam psi) over its Jensen lower bound (nonnegative)."""
    h_mass = problem.weight_mass
    h_avg_psi = 0.0
    for blk, pv in zip(problem.quad.blocks, problem.quad.eval(psi)):
        h_avg_psi += float(np.sum(blk.w * pv))
    return log_z - (np.log(h_mass) + lam * h_avg_psi / h_mass)


def minimize_free_energy(problem: MeanFieldProblem, lam, tol=L1_TOL,
                         max_iter=MAX_ITER, n=None) -> DensityState:
    """Minimize the functional by the damped Euler-Lagrange fixed point.

    The step size persists between iterations.  Two monitors control it: the
    step is halved until the free energy stops increasing, and halved again
    whenever the L1 density change grows between iterations.  The second
    monitor matters close to the minimum, where F is flat to roundoff and
    cannot distinguish a contraction from the mild divergence an undamped
    update exhibits at strongly negative lambda.  The step regrows only
    after a sustained run of shrinking updates.  Convergence is declared on
    the L1 change of the vertex density.
    """
    if lam >= 0:
        raise UnsupportedRegime("free-energy minimization requires lambda < 0")
    n = n if n is not None else _weight_index(problem)
    m = _lumped_mass(problem)
    w = problem.weight.vertex_values()

    def density(psi, log_z):
        return w * np.exp(lam * psi - log_z)

    def f_value(psi):
        """F at the density generated by psi, and the next fixed-point target."""
        b, factors, log_z = problem._load(lam, psi)
        target = np.zeros_like(psi)
        target[problem.interior] = problem.dirichlet.solve_interior(b[problem.interior])
        energy = 0.5 * float(b @ target)
        entropy = linear = 0.0
        psi_vals = problem.quad.eval(psi)
        for blk, fac, pv in zip(problem.quad.blocks, factors, psi_vals):
            positive = blk.hval > 0
            log_h = np.where(positive, np.log(np.where(positive, blk.hval, 1.0)), 0.0)
            entropy += float(np.sum(blk.w * fac * (log_h + lam * pv - log_z)))
            linear += float(np.sum(blk.w * fac * log_h))
        return entropy - lam * energy - linear, target, log_z

    psi = np.zeros(problem.mesh.n_vertices)
    f_cur, target, log_z = f_value(psi)
    jensen_min = np.inf  # tracked over the visited iterates, not the zero start
    step, prev_l1, shrinking = 1.0, np.inf, 0
    for it in range(1, max_iter + 1):
        direction = target - psi
        while True:
            trial = psi + step * direction
            f_trial, target_trial, log_z_trial = f_value(trial)
            if f_trial <= f_cur + 1e-13 * max(1.0, abs(f_cur)):
                break
            step *= 0.5
            if step < 1e-8:
                raise NoConvergence(
                    f"free-energy descent stalled at lambda={lam:.6g}",
                    iterations=it, residual=f_trial - f_cur)
        l1_change = float(m @ np.abs(density(trial, log_z_trial) - density(psi, log_z)))
        psi, f_cur, target, log_z = trial, f_trial, target_trial, log_z_trial
        jensen_min = min(jensen_min, _jensen_slack(problem, lam, psi, log_z))
        if l1_change > prev_l1:
            step, shrinking = max(step * 0.5, 1e-8), 0
        else:
            shrinking += 1
            if shrinking >= 25:
                step, shrinking = min(1.0, step * 1.2), 0
        prev_l1 = l1_change
        if l1_change < tol:
            # dual-norm Euler-Lagrange defect; equals the energy norm of
            # psi - G*rho(psi), which the loop has already computed
            d = (psi - target)[problem.interior]
            el_residual = float(np.sqrt(max(d @ (problem.dirichlet.A_ii @ d), 0.0)))
            if el_residual <= 1e-8:
                return _quad_level_state(problem, lam, psi, n, it, el_residual,
                                         jensen_min)
    raise NoConvergence(f"free-energy iteration cap at lambda={lam:.6g}",
                        iterations=max_iter)


def verify_energy_bound(problem: MeanFieldProblem, lam, delta,
                        minimizer: DensityState | None = None) -> EnergyBoundReport:
    """Evaluate every inequality of the vanishing-energy proof chain.

    Raises SolverError if any recorded slack is negative beyond roundoff;
    otherwise returns the report with all sides and slacks.
    """
    if minimizer is None:
        minimizer = minimize_free_energy(problem, lam)
    collar = free_energy_of(problem, collar_density(problem.mesh, delta), lam)
    area = problem.area
    sup_h = problem.weight.sup()
    report = EnergyBoundReport(
        lam=lam, n=minimizer.n, delta=delta,
        entropy_bound=float(np.log(area)),
        entropy_value=-minimizer.entropy_term,
        linear_bound=float(np.log1p(sup_h)),
        linear_value=minimizer.linear_term,
        f_minimizer=minimizer.free_energy,
        f_collar=collar.free_energy,
        energy_value=minimizer.energy,
        energy_bound=float(
            (minimizer.free_energy + np.log(area) + np.log1p(sup_h)) / abs(lam)),
        jensen_slack=float(minimizer.jensen_min_slack),
    )
    bad = {k: s for k, s in report.slacks.items() if s < -1e-9}
    if bad:
        raise SolverError(f"proof-chain inequality violated: {bad}")
    return report

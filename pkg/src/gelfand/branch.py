"""Branch tracing, fold location and domain classification.

The branch lambda -> psi_lambda is smooth on (-inf, 8 pi): the linearized
operator stays invertible there, so plain warm-started continuation in lambda
suffices and no arclength parametrization is needed.  The fold of the
(mu, E) diagram appears as the zero of

    g(lambda) = 1 - lambda <z_lambda>,   z_lambda = psi + lambda eta,

where eta = d psi / d lambda solves the linearized equation with load
rho (psi - <psi>), and <z> is evaluated through the identity
<z> = 2 E + lambda <eta> rather than by differencing.  sign(g) tracks
sign(d mu / d lambda), so a first-kind domain shows exactly one sign change
on (0, 8 pi) and the fold is located by bisection on g.

Classification at the 8 pi end reads the computed asymptotics: on first-kind
domains sup|u| and E diverge, with E growing like log(1/(8 pi - lambda))
at slope about 1/(8 pi); on second-kind domains both stay bounded and the
slope vanishes.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import BlowupDetected, FoldSingularity, NoConvergence, NoFoldInRange
from .meanfield import (EIGHT_PI, NEWTON_TOL, Linearization, MeanFieldProblem,
                        MeanFieldState)
from .spectrum import SpectrumReport, expand_modes, weighted_eigs
from .svg import line_plot

CSV_HEADER = "lambda,mu,E,dEdlambda,g,sigma1,tau1,CP,sup_psi,residual"


@dataclass
class BranchPoint:
    lam: float
    mu: float
    energy: float
    dE_dlambda: float
    g_value: float
    sigma1: float
    tau1: float
    poincare: float
    sup_norm: float
    residual: float

    def csv_row(self):
        vals = (self.lam, self.mu, self.energy, self.dE_dlambda, self.g_value,
                self.sigma1, self.tau1, self.poincare, self.sup_norm, self.residual)
        return ",".join(repr(float(v)) for v in vals)

    @staticmethod
    def from_csv_row(line):
        parts = line.strip().split(",")
        if len(parts) != 10:
            raise ValueError(f"expected 10 columns, got {len(parts)}")
        v = [float(p) for p in parts]
        return BranchPoint(*v)


@dataclass
class BranchDiagram:
    points: list
    fold: tuple | None = None          # (lambda*, E*, mu*)
    kind: str = "undetermined"
    mu_at_min: float = math.nan        # mu at lambda_min (to -inf trend)
    mu1_estimate: float | None = None  # mu at the last row (to 0 on first kind)
    termination: str = "completed"     # completed | blowup | stalled

    def positive_rows(self):
        return [p for p in self.points if p.lam > 0]


@dataclass
class TraceConfig:
    lam_min: float = -200.0
    eps_stop: float = EIGHT_PI * 1e-3
    eps_classify: float = EIGHT_PI * 5e-3
    neg_ratio: float = 0.7             # geometric spacing on (lam_min, 0]
    neg_cut: float = 0.05              # smallest |lambda| before hitting 0
    pos_step: float = math.pi / 4      # uniform spacing on (0, tail_start]
    tail_start: float = 6 * math.pi
    tail_ratio: float = 0.65           # geometric approach to 8 pi
    spectrum_k: int = 1
    newton_budget: int = 8             # iterations above which the step halves
    sup_jump: float = 2.0              # sup-norm ratio above which the step halves
    min_gap: float = 1e-4
    max_rows: int = 500
    sup_diverged: float = 5.0          # threshold on sup|u| = lambda sup|psi|
    energy_diverged: float = 0.05
    slope_diverged: float = 0.01
    mu_collapse: float = 0.25          # mu_last / mu_max below this => blowup trend
    mu_flat: float = 0.5               # mu_last / mu_max above this => bounded


@dataclass
class GDiagnostics:
    g: float
    z_avg: float
    z3_avg: float
    z_min: float
    eta_avg: float
    identity_error: float
    eta: np.ndarray


@dataclass
class DerivativePair:
    direct: float
    spectral: float
    remainder: float


# ---------------------------------------------------------------------------
# pointwise branch quantities


def solve_eta(problem: MeanFieldProblem, state: MeanFieldState,
              lin: Linearization | None = None, spectrum_free: bool = True,
              k: int = 10) -> np.ndarray:
    """The branch derivative d psi / d lambda as a Dirichlet field.

    Solves the linearized equation with load rho (psi - <psi>).  With
    spectrum_free=False the field is instead reconstructed from the first k
    eigenmodes (a truncation, used for cross-checks).
    """
    if lin is None:
        lin = Linearization.at_state(problem, state)
    if not spectrum_free:
        report = weighted_eigs(problem, state, k=k, lin=lin)
        coeffs = expand_modes(problem, state, np.zeros_like(state.psi), report, lin=lin)
        return report.phis @ (coeffs.a / report.sigmas)
    rhs = (lin.M_rho @ state.psi - lin.rho_average(state.psi) * lin.b)[problem.interior]
    eta = np.zeros(problem.mesh.n_vertices)
    eta[problem.interior] = lin.solve(rhs, rtol=1e-10)
    return eta


def g_of(problem: MeanFieldProblem, state: MeanFieldState,
         lin: Linearization | None = None,
         eta: np.ndarray | None = None) -> GDiagnostics:
    """The fold indicator g = 1 - lambda <z> and the related z diagnostics."""
    if lin is None:
        lin = Linearization.at_state(problem, state)
    if eta is None:
        eta = solve_eta(problem, state, lin=lin)
    eta_avg = lin.rho_average(eta)
    z = state.psi + state.lam * eta
    z_avg = 2.0 * state.energy + state.lam * eta_avg
    identity_error = abs(lin.rho_average(z) - z_avg)
    factors, _ = problem._exp_factors(state.lam, state.psi)
    z_vals = problem.quad.eval(z)
    z3 = sum(float(np.sum(problem.quad.blocks[i].w * factors[i] * z_vals[i] ** 3))
             for i in range(len(z_vals)))
    return GDiagnostics(
        g=1.0 - state.lam * z_avg, z_avg=z_avg, z3_avg=z3,
        z_min=float(z.min()), eta_avg=eta_avg,
        identity_error=identity_error, eta=eta)


def dE_dlambda(problem: MeanFieldProblem, state: MeanFieldState,
               eta: np.ndarray, report: SpectrumReport | None = None,
               lin: Linearization | None = None) -> DerivativePair:
    """Energy derivative along the branch, direct and spectrally truncated.

    The direct value pairs eta with the state through the stiffness form and
    is authoritative; the truncated sum over modes approaches it from below
    since every term (lambda + sigma_j) sigma_j b_j^2 is positive.
    """
    direct = float(eta @ (problem.A @ state.psi))
    if report is None:
        return DerivativePair(direct=direct, spectral=math.nan, remainder=math.nan)
    coeffs = expand_modes(problem, state, eta, report, lin=lin)
    terms = (state.lam + report.sigmas) * report.sigmas * coeffs.b ** 2
    spectral = float(np.sum(terms))
    return DerivativePair(direct=direct, spectral=spectral,
                          remainder=direct - spectral)


def _branch_point(problem, state, cfg) -> BranchPoint:
    lin = Linearization.at_state(problem, state)
    diag = g_of(problem, state, lin=lin)
    deriv = dE_dlambda(problem, state, diag.eta, lin=lin)
    report = weighted_eigs(problem, state, k=cfg.spectrum_k, lin=lin)
    return BranchPoint(
        lam=state.lam, mu=state.mu, energy=state.energy,
        dE_dlambda=deriv.direct, g_value=diag.g,
        sigma1=float(report.sigmas[0]), tau1=report.tau1,
        poincare=report.poincare, sup_norm=float(np.abs(state.psi).max()),
        residual=state.residual)


# ---------------------------------------------------------------------------
# tracing


def _negative_targets(cfg):
    mags = []
    m = abs(cfg.lam_min)
    while m > cfg.neg_cut:
        mags.append(m)
        m *= cfg.neg_ratio
    return [-m for m in reversed(mags)]          # march 0 -> lam_min reversed later


def _positive_targets(cfg):
    out = []
    lam = cfg.pos_step
    while lam < cfg.tail_start + 1e-12 and lam < EIGHT_PI - cfg.eps_stop:
        out.append(min(lam, EIGHT_PI - cfg.eps_stop))
        lam += cfg.pos_step
    gap = (EIGHT_PI - cfg.eps_stop) - out[-1] if out else EIGHT_PI - cfg.eps_stop
    lam = out[-1] if out else 0.0
    g = (EIGHT_PI - lam) * (1 - cfg.tail_ratio)
    while EIGHT_PI - lam > cfg.eps_stop * (1 + 1e-9):
        lam = min(lam + g, EIGHT_PI - cfg.eps_stop)
        out.append(lam)
        g = (EIGHT_PI - lam) * (1 - cfg.tail_ratio)
        if g < cfg.eps_stop * 0.5:
            out.append(EIGHT_PI - cfg.eps_stop)
            break
    # dedupe while preserving order
    seen, targets = set(), []
    for t in out:
        key = round(t, 12)
        if key not in seen:
            seen.add(key)
            targets.append(t)
    return targets


def _march(problem, state0, targets, cfg, on_row):
    """Warm-started continuation through the target list with step halving.

    Returns the termination tag.  A solve is retried at the midpoint when
    Newton works too hard or the iterate jumps; failures below the minimum
    gap end the march gracefully.
    """
    state = state0
    stack = list(reversed(targets))
    rows = 0
    while stack:
        target = stack[-1]
        gap = abs(target - state.lam)
        try:
            nxt = problem._newton(target, state.psi.copy(), NEWTON_TOL, 40)
            jumped = (np.abs(nxt.psi).max()
                      > cfg.sup_jump * max(np.abs(state.psi).max(), 0.05))
            trouble = nxt.iterations > cfg.newton_budget or jumped
            failed = was_blowup = False
        except BlowupDetected:
            trouble = failed = was_blowup = True
        except (NoConvergence, FoldSingularity):
            trouble, failed, was_blowup = True, True, False
        if trouble and gap > cfg.min_gap:
            stack.append(state.lam + 0.5 * (target - state.lam))
            continue
        if failed:
            return state, "blowup" if was_blowup else "stalled"
        state = nxt
        stack.pop()
        on_row(state)
        rows += 1
        if rows >= cfg.max_rows:
            return state, "stalled"
    return state, "completed"


def trace_branch(problem: MeanFieldProblem, cfg: TraceConfig | None = None,
                 keep_states: bool = False, on_row=None):
    """Trace the full branch and assemble the bifurcation diagram.

    Two warm-started passes run from the exactly-known lambda = 0 state:
    downward to lam_min and upward toward 8 pi.  Solver failures near 8 pi
    terminate the upward pass gracefully with a partial diagram (that is the
    expected first-kind behavior once the blowup scale falls below the mesh).
    The optional on_row callback sees every finished row in marching order,
    so callers can persist partial results across a hard failure.
    """
    cfg = cfg or TraceConfig()
    state0 = problem.solve_mp(0.0)
    rows_neg, rows_pos = [], []
    states = {}

    def collect(bucket):
        def add(state):
            row = _branch_point(problem, state, cfg)
            bucket.append(row)
            if on_row is not None:
                on_row(row)
            if keep_states:
                states[round(state.lam, 12)] = state
        return add

    _, term_neg = _march(problem, state0, _negative_targets(cfg), cfg,
                         collect(rows_neg))
    row0 = _branch_point(problem, state0, cfg)
    if on_row is not None:
        on_row(row0)
    if keep_states:
        states[0.0] = state0
    _, term_pos = _march(problem, state0, _positive_targets(cfg), cfg,
                         collect(rows_pos))

    points = rows_neg[::-1] + [row0] + rows_pos
    diagram = BranchDiagram(points=points, termination=term_pos)
    if rows_neg:
        diagram.mu_at_min = rows_neg[-1].mu
    if rows_pos:
        diagram.mu1_estimate = rows_pos[-1].mu
    if term_neg != "completed":
        diagram.termination = "stalled"
    try:
        diagram.fold = find_fold(problem, diagram)
    except NoFoldInRange:
        diagram.fold = None
    diagram.kind = classify_kind(diagram, cfg)
    if keep_states:
        return diagram, states
    return diagram


def find_fold(problem: MeanFieldProblem, diagram: BranchDiagram,
              tol: float = 1e-8):
    """Locate the fold (lambda*, E*, mu*) by bisecting g between grid rows.

    Raises NoFoldInRange when g does not change sign on the positive rows
    (the legitimate outcome for second-kind runs or negative-only data), and
    rejects diagrams whose sampled g changes sign more than once.
    """
    rows = diagram.positive_rows()
    rows = [r for r in rows if r.lam < EIGHT_PI]
    crossings = [(a, b) for a, b in zip(rows, rows[1:])
                 if a.g_value > 0 >= b.g_value or a.g_value <= 0 < b.g_value]
    if not crossings:
        raise NoFoldInRange("g does not change sign on the sampled grid")
    if len(crossings) > 1:
        raise NoFoldInRange(f"g changes sign {len(crossings)} times; grid too coarse")
    lo_row, hi_row = crossings[0]
    state = problem.solve_mp(lo_row.lam)
    lo, hi = lo_row.lam, hi_row.lam
    g_lo = g_of(problem, state).g
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        state = problem._newton(mid, state.psi.copy(), NEWTON_TOL, 40)
        g_mid = g_of(problem, state).g
        if abs(g_mid) < tol:
            return (state.lam, state.energy, state.mu)
        if (g_mid > 0) == (g_lo > 0):
            lo = mid
        else:
            hi = mid
    raise NoFoldInRange("bisection on g failed to converge")


def classify_kind(diagram: BranchDiagram, cfg: TraceConfig | None = None) -> str:
    """First kind: the branch blows up as lambda -> 8 pi; second: it stays bounded.

    Divergence is read from sup|u| = lambda sup|psi| (psi itself stays small;
    u is what blows up) together with the mu trend: one-point blowup forces
    mu proportional to (8 pi - lambda), so mu at the last rows collapses
    relative to its maximum.  The collapse ratio is the mesh-robust signal; a
    fixed sup threshold alone saturates once the bubble width falls below the
    mesh scale.  Bounded branches keep mu near its running maximum and show a
    vanishing slope of E against log(1/(8 pi - lambda)).
    """
    cfg = cfg or TraceConfig()
    rows = diagram.positive_rows()
    if not rows:
        return "undetermined"
    last = rows[-1]
    sup_u = last.lam * last.sup_norm
    reached = last.lam >= EIGHT_PI - cfg.eps_classify
    mu_max = max(r.mu for r in rows)
    mu_ratio = last.mu / mu_max if mu_max > 0 else math.inf
    tail = [r for r in rows if r.lam > cfg.tail_start][-5:]
    if len(tail) >= 3:
        x = [math.log(1.0 / (EIGHT_PI - r.lam)) for r in tail]
        y = [r.energy for r in tail]
        slope = float(np.polyfit(x, y, 1)[0])
    else:
        slope = math.nan
    diverged = sup_u > cfg.sup_diverged and last.energy > cfg.energy_diverged
    if diagram.termination == "blowup" and diverged:
        return "first"
    if not reached:
        return "undetermined"
    if diverged and mu_ratio < cfg.mu_collapse:
        return "first"
    if sup_u <= cfg.sup_diverged and last.energy <= cfg.energy_diverged \
            and mu_ratio > cfg.mu_flat and abs(slope) < cfg.slope_diverged:
        return "second"
    return "undetermined"


# ---------------------------------------------------------------------------
# emission


def write_csv(points, path):
    with open(path, "w") as f:
        f.write(CSV_HEADER + "\n")
        for p in points:
            f.write(p.csv_row() + "\n")
    return path


def read_csv(path):
    with open(path) as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header: {header}")
        return [BranchPoint.from_csv_row(line) for line in f if line.strip()]


def emit_diagram(diagram: BranchDiagram, out_dir, stem="branch"):
    """CSV + summary JSON + the four standard SVG views of the diagram."""
    if not diagram.points:
        raise ValueError("empty diagram")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    paths.append(write_csv(diagram.points, csv_path))
    summary = {
        "kind": diagram.kind,
        "termination": diagram.termination,
        "fold": None if diagram.fold is None else
            {"lambda": diagram.fold[0], "E": diagram.fold[1], "mu": diagram.fold[2]},
        "mu_at_min": diagram.mu_at_min,
        "mu1_estimate": diagram.mu1_estimate,
        "rows": len(diagram.points),
    }
    json_path = os.path.join(out_dir, f"{stem}.json")
    with open(json_path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    paths.append(json_path)
    paths.extend(plot_csv(csv_path, out_dir, stem=stem))
    return paths


def plot_csv(csv_path, out_dir, stem="branch"):
    """The four standard views from a branch CSV."""
    points = read_csv(csv_path)
    if not points:
        raise ValueError("empty branch CSV")
    os.makedirs(out_dir, exist_ok=True)
    lam = [p.lam for p in points]
    e_vals = [p.energy for p in points]
    g_vals = [p.g_value for p in points]
    mu = [p.mu for p in points]
    pos = [p for p in points if p.lam > 0]
    out = []
    out.append(line_plot(
        os.path.join(out_dir, f"{stem}_lambda_E.svg"),
        [(lam, e_vals, "E")], xlabel="lambda", ylabel="E",
        title="energy along the branch", vlines=(EIGHT_PI,)))
    out.append(line_plot(
        os.path.join(out_dir, f"{stem}_lambda_g.svg"),
        [(lam, g_vals, "g")], xlabel="lambda", ylabel="g",
        title="fold indicator", vlines=(EIGHT_PI,)))
    if pos:
        out.append(line_plot(
            os.path.join(out_dir, f"{stem}_E_mu.svg"),
            [([p.energy for p in pos], [p.mu for p in pos], "mu")],
            xlabel="E", ylabel="mu", title="bifurcation diagram"))
    out.append(line_plot(
        os.path.join(out_dir, f"{stem}_mu_E.svg"),
        [(mu, e_vals, "E")], xlabel="mu", ylabel="E",
        title="energy against mu"))
    return out

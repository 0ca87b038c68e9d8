"""Spectral quantities attached to a solved branch state.

Three related eigenvalue problems drive the branch analysis, all built from
the stiffness matrix A, the density mass matrix M_rho and the density load
vector b (so <v> = b'v is the rho-weighted average):

  sigma_j : (A - lam Mhat) phi = sigma Mhat phi   on the Dirichlet space,
  tau_1   : (A - lam Mhat) phi = tau  M_rho phi   on the Dirichlet space,
  C_P     :           A phi    = c    M_rho phi   on the full space,

where Mhat = M_rho - b b' pairs oscillations: v' Mhat v is the rho-variance
of v.  The constant field is the kernel of the full-space pencil, so C_P is
its second eigenvalue; sigma and tau exclude it by the boundary condition.
sigma_1 > 0 expresses invertibility of the linearized operator along the
branch, and the orderings sigma_1 >= tau_1 and sigma_j + lam >= C_P hold at
the discrete level by Rayleigh-quotient comparison.

The sparse paths run Lanczos iterations on inverted pencils so only SPD
matrices are factorized (A itself, or the bordered linearization); a dense
full-spectrum path covers small meshes and serves as the oracle the sparse
solver is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse.linalg import ArpackError, LinearOperator, eigsh

from .errors import DegenerateWeight, SolverError
from .meanfield import Linearization, MeanFieldProblem, MeanFieldState

DENSE_CUTOFF = 400  # interior unknowns below which the dense path is used


@dataclass
class SpectrumReport:
    lam: float
    sigmas: np.ndarray          # ascending, k smallest
    phis: np.ndarray            # (n_vertices, k), zero on the boundary
    phi_hats: np.ndarray        # mean-free versions, variance-normalized
    tau1: float
    poincare: float
    ortho_error: float          # max deviation of the Gram matrix from I
    mean_error: float           # max |<phi_hat_j>|
    method: str = "sparse"


@dataclass
class ModeCoefficients:
    a: np.ndarray               # projections of the oscillation of psi
    b: np.ndarray               # projections of the oscillation of eta


def _fixed_start(n):
    return np.random.default_rng(1729).standard_normal(n)


def _mhat_full(lin: Linearization):
    def apply(v):
        return lin.M_rho @ v - lin.b * (lin.b @ v)
    return apply


def weighted_eigs(problem: MeanFieldProblem, state: MeanFieldState, k: int = 10,
                  dense_cutoff: int = DENSE_CUTOFF,
                  lin: Linearization | None = None) -> SpectrumReport:
    """The k smallest eigenpairs of the oscillation-paired linearization.

    Eigenfields are returned both as Dirichlet fields and as their mean-free
    oscillations, normalized so the rho-weighted Gram matrix of the
    oscillations is the identity.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if lin is None:
        lin = Linearization.at_state(problem, state)
    idx = problem.interior
    n_i = len(idx)
    k = min(k, n_i)
    lam = state.lam
    if n_i <= dense_cutoff or k >= n_i - 1:
        sig, vecs, method = _sigma_dense(problem, lin, lam, k)
    else:
        sig, vecs, method = _sigma_sparse(problem, lin, lam, k)
    phis = np.zeros((problem.mesh.n_vertices, k))
    phis[idx] = vecs
    averages = lin.b @ phis
    phi_hats = phis - averages[None, :]
    mhat = _mhat_full(lin)
    gram = phis.T @ np.column_stack([mhat(phis[:, j]) for j in range(k)])
    ortho_error = float(np.abs(gram - np.eye(k)).max())
    mean_error = float(np.abs(lin.b @ phi_hats).max()) if k else 0.0
    return SpectrumReport(
        lam=lam, sigmas=sig, phis=phis, phi_hats=phi_hats,
        tau1=standard_tau1(problem, state, lin=lin, dense_cutoff=dense_cutoff),
        poincare=poincare_constant(problem, state, lin=lin, dense_cutoff=dense_cutoff),
        ortho_error=ortho_error, mean_error=mean_error, method=method,
    )


def _sigma_dense(problem, lin, lam, k):
    A_d = problem.dirichlet.A_ii.toarray()
    Mhat_d = lin.M_ii.toarray() - np.outer(lin.b_i, lin.b_i)
    try:
        w, V = scipy.linalg.eigh(A_d, Mhat_d)
    except np.linalg.LinAlgError as e:
        raise DegenerateWeight(f"oscillation mass not positive definite: {e}") from e
    return w[:k] - lam, V[:, :k], "dense"


def _sigma_sparse(problem, lin, lam, k):
    """Largest-theta Lanczos on Mhat v = theta A v; sigma = 1/theta - lam."""
    n_i = len(problem.interior)
    M_ii, b_i = lin.M_ii, lin.b_i
    mhat = LinearOperator((n_i, n_i), matvec=lambda x: M_ii @ x - b_i * (b_i @ x))
    a_inv = LinearOperator((n_i, n_i), matvec=problem.dirichlet.lu.solve)
    try:
        theta, vecs = eigsh(mhat, k=k, M=problem.dirichlet.A_ii, Minv=a_inv,
                            which="LA", v0=_fixed_start(n_i), tol=0)
    except ArpackError as e:
        raise SolverError(f"sigma eigensolver failed: {e}") from e
    if theta.min() <= 1e-14 * theta.max():
        raise DegenerateWeight("oscillation mass is rank-deficient beyond the constant")
    # vectors come back A-orthonormal; phi' Mhat phi = theta rescales them
    vecs = vecs / np.sqrt(theta)[None, :]
    sig = 1.0 / theta - lam
    order = np.argsort(sig)
    return sig[order], vecs[:, order], "sparse"


def dense_sigma_oracle(problem, state, k=5):
    """Brute-force full eigensolve of the same pencil, for cross-checking."""
    lin = Linearization.at_state(problem, state)
    sig, _, _ = _sigma_dense(problem, lin, state.lam, k)
    return sig


def standard_tau1(problem: MeanFieldProblem, state: MeanFieldState,
                  lin: Linearization | None = None,
                  dense_cutoff: int = DENSE_CUTOFF) -> float:
    """Smallest eigenvalue of the linearization against the full density mass."""
    if lin is None:
        lin = Linearization.at_state(problem, state)
    n_i = len(problem.interior)
    if n_i <= dense_cutoff:
        A_d = problem.dirichlet.A_ii.toarray()
        Mhat_d = lin.M_ii.toarray() - np.outer(lin.b_i, lin.b_i)
        w = scipy.linalg.eigh(A_d - state.lam * Mhat_d, lin.M_ii.toarray(),
                              eigvals_only=True)
        return float(w[0])
    # inverted pencil: M_rho v = theta (A - lam Mhat) v, largest theta
    op_m = LinearOperator((n_i, n_i), matvec=lambda x: lin.M_ii @ x)
    op_j = LinearOperator((n_i, n_i), matvec=lin.apply)
    j_inv = LinearOperator((n_i, n_i), matvec=lambda r: lin.solve(r, rtol=1e-12))
    try:
        theta, _ = eigsh(op_m, k=1, M=op_j, Minv=j_inv, which="LA",
                         v0=_fixed_start(n_i), tol=0)
    except ArpackError as e:
        raise SolverError(f"tau eigensolver failed: {e}") from e
    return float(1.0 / theta[0])


def poincare_constant(problem: MeanFieldProblem, state: MeanFieldState,
                      lin: Linearization | None = None,
                      dense_cutoff: int = DENSE_CUTOFF) -> float:
    """Second eigenvalue of the full-space stiffness/density pencil.

    The first eigenvalue is zero with constant eigenfield; every other
    eigenfield is automatically mean-free in the rho pairing, so this is the
    infimum of the Dirichlet-to-weighted-variance quotient.
    """
    if lin is None:
        lin = Linearization.at_state(problem, state)
    n = problem.mesh.n_vertices
    A_full = problem.A.tocsc()
    M_full = lin.M_rho.tocsc()
    if n <= dense_cutoff:
        w = scipy.linalg.eigh(A_full.toarray(), M_full.toarray(), eigvals_only=True)
        return float(w[1])
    try:
        vals = eigsh(A_full, k=2, M=M_full, sigma=-1.0, which="LM",
                     v0=_fixed_start(n), mode="normal",
                     return_eigenvectors=False)
    except ArpackError as e:
        raise SolverError(f"Poincare eigensolver failed: {e}") from e
    return float(np.max(vals))


def expand_modes(problem: MeanFieldProblem, state: MeanFieldState, eta,
                 report: SpectrumReport,
                 lin: Linearization | None = None) -> ModeCoefficients:
    """Coefficients of psi and eta oscillations in the eigenfield basis.

    a_j pairs the oscillation of psi with mode j, b_j that of eta; the
    eigenvalue relation makes sigma_j b_j = a_j for resolved modes.
    """
    if lin is None:
        lin = Linearization.at_state(problem, state)
    mhat = _mhat_full(lin)
    a = report.phis.T @ mhat(state.psi)
    b = report.phis.T @ mhat(np.asarray(eta, dtype=float))
    return ModeCoefficients(a=a, b=b)

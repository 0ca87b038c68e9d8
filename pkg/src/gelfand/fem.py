"""P1 finite elements with weight-aware quadrature.

Stiffness and plain mass use exact per-triangle formulas.  Integrals against
the singular weight split the mesh into two groups: triangles touching a
singular vertex get a tensorized polar rule (Gauss-Jacobi in the radial
coordinate, so the r^(2 alpha) factor is integrated exactly against
polynomials; Gauss-Legendre in the angular sweep), everything else gets a
symmetric degree-4 rule with the weight interpolated linearly.  The measure
weights stored per quadrature point already include the weight-field value,
so downstream code only ever supplies smooth point factors such as
exp(lambda psi) / Z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.special import roots_jacobi

from .errors import InvalidWeight, SolverError
from .geometry import Mesh, WeightField

# symmetric degree-4 rule on the reference triangle (6 points, weights sum 1)
_A1, _W1 = 0.445948490915965, 0.223381589678011
_A2, _W2 = 0.091576213509771, 0.109951743655322
DEG4_BARY = np.array([
    [_A1, _A1, 1 - 2 * _A1], [_A1, 1 - 2 * _A1, _A1], [1 - 2 * _A1, _A1, _A1],
    [_A2, _A2, 1 - 2 * _A2], [_A2, 1 - 2 * _A2, _A2], [1 - 2 * _A2, _A2, _A2],
])
DEG4_W = np.array([_W1, _W1, _W1, _W2, _W2, _W2])

POLAR_RADIAL_POINTS = 6
POLAR_ANGULAR_POINTS = 10


@dataclass
class QuadBlock:
    """One homogeneous group of triangles sharing a point layout.

    w holds measure weights including the weight-field value; hval the bare
    weight-field value at each point (needed for logarithms of the weight).
    """

    verts: np.ndarray   # (T, 3)
    shp: np.ndarray     # (T, Q, 3) P1 shape values at the points
    pos: np.ndarray     # (T, Q, 2)
    w: np.ndarray       # (T, Q)
    hval: np.ndarray    # (T, Q)

    def eval(self, field):
        """P1 field values at the block's quadrature points."""
        return np.einsum("tqi,ti->tq", self.shp, field[self.verts])


class Quadrature:
    """A family of quadrature points covering the mesh."""

    def __init__(self, n_vertices, blocks):
        self.n = n_vertices
        self.blocks = blocks

    def eval(self, field):
        return [b.eval(field) for b in self.blocks]

    def integrate(self, factors=None):
        """Integral of the stored weight times the optional point factors."""
        total = 0.0
        for k, b in enumerate(self.blocks):
            if factors is None:
                total += b.w.sum()
            else:
                total += float(np.sum(b.w * factors[k]))
        return total

    def assemble_load(self, factors=None):
        """Vector of integrals against each hat function."""
        out = np.zeros(self.n)
        for k, b in enumerate(self.blocks):
            wq = b.w if factors is None else b.w * factors[k]
            contrib = np.einsum("tq,tqi->ti", wq, b.shp)
            np.add.at(out, b.verts, contrib)
        return out

    def assemble_mass(self, factors=None):
        """Weighted mass matrix sum_q w_q f_q phi_i phi_j, sparse CSR."""
        rows, cols, vals = [], [], []
        for k, b in enumerate(self.blocks):
            wq = b.w if factors is None else b.w * factors[k]
            local = np.einsum("tq,tqi,tqj->tij", wq, b.shp, b.shp)
            r = np.repeat(b.verts, 3, axis=1).reshape(-1, 3, 3)
            c = np.tile(b.verts[:, None, :], (1, 3, 1))
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(local.ravel())
        m = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n, self.n),
        )
        return m.tocsr()


def _deg4_block(mesh, tris, point_values):
    """Degree-4 block over the given triangles with given vertex values.

    point_values: (n,) vertex field whose P1 interpolation is the stored
    weight value (use ones for plain Lebesgue measure).
    """
    verts = mesh.triangles[tris]
    p = mesh.vertices[verts]                      # (T, 3, 2)
    pos = np.einsum("qi,tid->tqd", DEG4_BARY, p)
    areas = mesh.areas()[tris]
    shp = np.broadcast_to(DEG4_BARY[None, :, :], (len(tris), 6, 3)).copy()
    hval = np.einsum("qi,ti->tq", DEG4_BARY, point_values[verts])
    w = areas[:, None] * DEG4_W[None, :] * hval
    return QuadBlock(verts=verts, shp=shp, pos=pos, w=w, hval=hval)


def plain_quadrature(mesh: Mesh) -> Quadrature:
    """Degree-4 rule on every triangle, plain Lebesgue measure."""
    ones = np.ones(mesh.n_vertices)
    block = _deg4_block(mesh, np.arange(mesh.n_triangles), ones)
    block.hval = np.ones_like(block.w)
    block.w = mesh.areas()[:, None] * DEG4_W[None, :]
    return Quadrature(mesh.n_vertices, [block])


def _polar_block(mesh, tris, pole_vertex, coeff, exponent, values, floor):
    """Polar rule on triangles sharing the singular vertex.

    Local model: weight = coeff * r^exponent * corr(x) + floor, where corr is
    the linear correction matching the stored vertex values at the two
    non-singular corners (corr == 1 at the pole).
    """
    tri_v = mesh.triangles[tris]
    # rotate each triangle so the pole comes first
    order = np.zeros((len(tris), 3), dtype=int)
    for t, verts in enumerate(tri_v):
        k = int(np.where(verts == pole_vertex)[0][0])
        order[t] = [verts[k], verts[(k + 1) % 3], verts[(k + 2) % 3]]
    P = mesh.vertices[order[:, 0]]
    A = mesh.vertices[order[:, 1]]
    B = mesh.vertices[order[:, 2]]
    area = 0.5 * np.abs(
        (A - P)[:, 0] * (B - P)[:, 1] - (A - P)[:, 1] * (B - P)[:, 0]
    )

    beta = exponent + 1.0  # radial measure s^(1+exponent)
    xj, wj = roots_jacobi(POLAR_RADIAL_POINTS, 0.0, beta)
    s = (1.0 + xj) / 2.0
    ws = wj * 2.0 ** (-beta - 1.0)
    xg, wg = np.polynomial.legendre.leggauss(POLAR_ANGULAR_POINTS)
    t = (1.0 + xg) / 2.0
    wt = wg / 2.0

    # e(t) spans the far edge; r = s |e(t)|
    e = (1 - t)[None, :, None] * (A - P)[:, None, :] + t[None, :, None] * (B - P)[:, None, :]
    enorm = np.linalg.norm(e, axis=2)                      # (T, nt)
    pos = P[:, None, None, :] + s[None, :, None, None] * e[:, None, :, :]

    # shape functions in (s, t): pole 1-s, far corners s(1-t), s t
    shp = np.empty((len(tris), POLAR_RADIAL_POINTS, POLAR_ANGULAR_POINTS, 3))
    shp[..., 0] = (1 - s)[None, :, None]
    shp[..., 1] = (s[:, None] * (1 - t)[None, :])[None, :, :]
    shp[..., 2] = (s[:, None] * t[None, :])[None, :, :]

    # linear correction so the model matches the vertex values at A and B
    with np.errstate(divide="ignore", invalid="ignore"):
        ra = np.linalg.norm(A - P, axis=1)
        rb = np.linalg.norm(B - P, axis=1)
        ca = values[order[:, 1]] / (coeff * ra ** exponent)
        cb = values[order[:, 2]] / (coeff * rb ** exponent)
    corr = (shp[..., 0] + ca[:, None, None] * shp[..., 1]
            + cb[:, None, None] * shp[..., 2])

    # measure weight: 2 area coeff |e|^exp ws wt, times the correction
    w = (2.0 * area[:, None, None] * coeff
         * enorm[:, None, :] ** exponent
         * ws[None, :, None] * wt[None, None, :]) * corr
    hval = coeff * (s[None, :, None] * enorm[:, None, :]) ** exponent * corr + floor

    Q = POLAR_RADIAL_POINTS * POLAR_ANGULAR_POINTS
    return QuadBlock(
        verts=order,
        shp=shp.reshape(len(tris), Q, 3),
        pos=pos.reshape(len(tris), Q, 2),
        w=w.reshape(len(tris), Q),
        hval=hval.reshape(len(tris), Q),
    )


def weighted_quadrature(mesh: Mesh, weight: WeightField) -> Quadrature:
    """Quadrature whose measure is weight (including its floor) times dx."""
    weight.validate()
    blocks = []
    singular_tris = np.zeros(mesh.n_triangles, dtype=bool)
    for j, v in enumerate(weight.sing_vertices):
        mask = np.any(mesh.triangles == v, axis=1)
        if not mask.any():
            raise InvalidWeight("singular vertex not referenced by any triangle")
        if (singular_tris & mask).any():
            raise InvalidWeight("two singular points share a triangle; refine the mesh")
        singular_tris |= mask
        blocks.append(_polar_block(
            mesh, np.nonzero(mask)[0], v,
            weight.coefficients[j], weight.exponents[j],
            weight.values, weight.floor,
        ))

    regular = np.nonzero(~singular_tris)[0]
    if len(regular):
        blocks.insert(0, _deg4_block(mesh, regular, weight.values + weight.floor))
    if weight.floor > 0 and singular_tris.any():
        # the polar blocks carry only the singular model; add the floor part
        tris = np.nonzero(singular_tris)[0]
        fb = _deg4_block(mesh, tris, np.full(mesh.n_vertices, weight.floor))
        # report the full weight value at these points, not just the floor
        fb.hval = fb.hval + np.einsum(
            "qi,ti->tq", DEG4_BARY, weight.values[mesh.triangles[tris]])
        blocks.append(fb)
    return Quadrature(mesh.n_vertices, blocks)


# ---------------------------------------------------------------------------
# assembly


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """P1 stiffness matrix of -Laplace (exact per-triangle formula)."""
    p = mesh.vertices[mesh.triangles]
    t0 = p[:, 2] - p[:, 1]
    t1 = p[:, 0] - p[:, 2]
    t2 = p[:, 1] - p[:, 0]
    edges = np.stack([t0, t1, t2], axis=1)        # (T, 3, 2)
    areas = mesh.areas()
    local = np.einsum("tid,tjd->tij", edges, edges) / (4.0 * areas)[:, None, None]
    r = np.repeat(mesh.triangles, 3, axis=1).reshape(-1, 3, 3)
    c = np.tile(mesh.triangles[:, None, :], (1, 3, 1))
    A = sp.coo_matrix(
        (local.ravel(), (r.ravel(), c.ravel())),
        shape=(mesh.n_vertices, mesh.n_vertices),
    )
    return A.tocsr()


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Plain P1 mass matrix (exact)."""
    areas = mesh.areas()
    local = (areas[:, None, None] / 12.0) * (np.ones((3, 3)) + np.eye(3))[None]
    r = np.repeat(mesh.triangles, 3, axis=1).reshape(-1, 3, 3)
    c = np.tile(mesh.triangles[:, None, :], (1, 3, 1))
    M = sp.coo_matrix(
        (local.ravel(), (r.ravel(), c.ravel())),
        shape=(mesh.n_vertices, mesh.n_vertices),
    )
    return M.tocsr()


def assemble_weighted_mass(mesh: Mesh, w) -> sp.csr_matrix:
    """Mass matrix against a weight: WeightField or plain vertex values."""
    if isinstance(w, WeightField):
        return weighted_quadrature(mesh, w).assemble_mass()
    w = np.asarray(w, dtype=float)
    if np.any(~np.isfinite(w)) or np.any(w < -1e-14):
        raise InvalidWeight("negative or non-finite weight values")
    block = _deg4_block(mesh, np.arange(mesh.n_triangles), np.maximum(w, 0.0))
    return Quadrature(mesh.n_vertices, [block]).assemble_mass()


def gradient_p_integral(mesh: Mesh, field, p=2.0):
    """Integral of |grad field|^p (the gradient is constant per triangle)."""
    pts = mesh.vertices[mesh.triangles]
    vals = field[mesh.triangles]
    d1 = pts[:, 1] - pts[:, 0]
    d2 = pts[:, 2] - pts[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    f1 = vals[:, 1] - vals[:, 0]
    f2 = vals[:, 2] - vals[:, 0]
    gx = (f1 * d2[:, 1] - f2 * d1[:, 1]) / det
    gy = (f2 * d1[:, 0] - f1 * d2[:, 0]) / det
    g = np.sqrt(gx ** 2 + gy ** 2)
    return float(np.sum(mesh.areas() * g ** p))


# ---------------------------------------------------------------------------
# Dirichlet solves


class DirichletSolver:
    """Factorized interior block of a fixed operator, reused across solves."""

    def __init__(self, A, boundary_mask):
        self.boundary_mask = np.asarray(boundary_mask, dtype=bool)
        self.interior = np.nonzero(~self.boundary_mask)[0]
        self.boundary = np.nonzero(self.boundary_mask)[0]
        A = A.tocsr()
        self.A = A
        self.A_ii = A[self.interior][:, self.interior].tocsc()
        self.A_ib = A[self.interior][:, self.boundary].tocsr()
        try:
            self.lu = splu(self.A_ii)
        except RuntimeError as e:
            raise SolverError(f"interior factorization failed: {e}") from e

    def solve_interior(self, rhs_interior):
        return self.lu.solve(rhs_interior)

    def solve(self, rhs_full, boundary_values=None):
        """Solve A u = rhs with the given (default zero) boundary trace."""
        rhs_i = np.asarray(rhs_full, dtype=float)[self.interior]
        u = np.zeros(len(self.boundary_mask))
        if boundary_values is not None:
            u[self.boundary] = boundary_values[self.boundary]
            rhs_i = rhs_i - self.A_ib @ u[self.boundary]
        u[self.interior] = self.lu.solve(rhs_i)
        res = self.A_ii @ u[self.interior] - rhs_i
        scale = max(np.linalg.norm(rhs_i), 1e-300)
        if np.linalg.norm(res) > 1e-8 * scale:
            raise SolverError("Dirichlet solve residual too large")
        return u

    def dual_norm(self, r_interior):
        """H^-1-type norm sqrt(r' A_ii^-1 r) of an interior residual."""
        return float(np.sqrt(abs(r_interior @ self.lu.solve(r_interior))))


def solve_dirichlet(A, rhs, boundary_mask, boundary_values=None):
    """One-off Dirichlet solve; prefer DirichletSolver for repeated use."""
    return DirichletSolver(A, boundary_mask).solve(rhs, boundary_values)


def dump_matrix(A, path):
    """Write a sparse matrix as 'row col value' text, row-major order."""
    coo = A.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as f:
        f.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i in order:
            f.write(f"{coo.row[i]} {coo.col[i]} {coo.data[i]!r}\n")

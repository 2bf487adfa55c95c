"""2-D acoustic eigenproblems with generalized impedance boundary conditions.

The pressure form of the acoustic system on a polygonal domain G is

    -div(alpha^-1 grad p) = lambda^2 beta p         in G,
    gamma_n(alpha^-1 grad p) = i lambda Z gamma_0(p)  on dG,

discretized with P1 elements.  The boundary operator acts through the
spectral projector onto the first N_b boundary eigenmodes, so distributional
and nonlocal Z enter exactly as their Y-basis matrices:

    P(lambda) = K - i lambda B_Z - lambda^2 M,      B_Z = T^t Zhat T,

with T[n, dof] = integral(Y_n phi_dof dSigma) over the boundary.  The
quadratic pencil is linearized as

    [[K, 0], [0, M]] y = lambda [[i B_Z, M], [M, 0]] y,     y = (p, lambda p),

which stays generalized-symmetric when Z = 0, and is solved by shift-invert
Arnoldi with residual certification on the original pencil.

The scalar model lambda^2 m + i lambda b - k = 0 with m > 0, k >= 0 and
Re b >= 0 has both roots in the closed lower half-plane; accretive Z pushes
the whole certified spectrum there, which is what verify_mdissipativity
asserts, together with the first-order resolvent bound
||(A_h - z)^-1|| <= 1 / Im z rendered in energy coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import Delaunay

from .boundary import BoundaryGeometry, SpectrumError, build_curve_spectrum
from .fgf import impedance_coefficients, sample_random_impedance
from .impedance import ImpedanceOperator, is_accretive, multiplier_impedance
from .multipliers import TripleProductTensor

RESIDUAL_TOL = 1e-8
HALFPLANE_TOL = 1e-8     # scaled by (1 + |lambda|)


class MeshError(ValueError):
    """Invalid mesh or mesh/spectrum mismatch."""


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

@dataclass
class DomainMesh:
    """P1 triangulation of a polygonal domain, possibly with holes.

    ``boundary_loops`` lists the vertex indices of every boundary component
    in traversal order; the polyline of a loop is the reference geometry for
    the matching boundary spectrum.  Material fields are per triangle:
    ``alpha`` is None (identity), a scalar array (isotropic), or (m, 2, 2);
    ``beta`` is None (unity) or a scalar array.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loops: list
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None

    def __post_init__(self):
        v, t = self.vertices, self.triangles
        areas = _signed_areas(v, t)
        flip = areas < 0
        if np.any(flip):
            t = t.copy()
            t[flip] = t[flip][:, [0, 2, 1]]
            self.triangles = t
        if np.any(np.abs(_signed_areas(v, t)) < 1e-14):
            raise MeshError("mesh contains degenerate triangles")
        if self.alpha is not None:
            a = np.asarray(self.alpha, dtype=float)
            if a.ndim == 3:
                eigs = np.linalg.eigvalsh(a)
                if eigs.min() <= 0:
                    raise MeshError("alpha must be uniformly positive definite")
            elif np.any(a <= 0):
                raise MeshError("alpha must be uniformly positive")
            self.alpha = a
        if self.beta is not None:
            b = np.asarray(self.beta, dtype=float)
            if np.any(b <= 0):
                raise MeshError("beta must be uniformly positive")
            self.beta = b

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    def boundary_geometry(self):
        comps = tuple(self.vertices[np.asarray(loop)] for loop in self.boundary_loops)
        return BoundaryGeometry(dim_ambient=2, components=comps)

    def to_dict(self):
        return {"vertices": self.vertices.tolist(),
                "triangles": self.triangles.tolist(),
                "boundary_loops": [list(map(int, l)) for l in self.boundary_loops],
                "alpha": None if self.alpha is None else self.alpha.tolist(),
                "beta": None if self.beta is None else self.beta.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(vertices=np.asarray(d["vertices"], dtype=float),
                   triangles=np.asarray(d["triangles"], dtype=int),
                   boundary_loops=[np.asarray(l, dtype=int) for l in d["boundary_loops"]],
                   alpha=None if d.get("alpha") is None else np.asarray(d["alpha"]),
                   beta=None if d.get("beta") is None else np.asarray(d["beta"]))

    def save_json(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _signed_areas(v, t):
    a = v[t[:, 1]] - v[t[:, 0]]
    b = v[t[:, 2]] - v[t[:, 0]]
    return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


def disk_mesh(h, radius=1.0, center=(0.0, 0.0)):
    """Unstructured disk mesh: staggered concentric rings + Delaunay.

    The boundary is the inscribed regular n-gon with n ~ 2 pi R / h; the
    same polyline is the reference curve for the boundary spectrum.
    """
    n_b = max(12, int(round(2 * np.pi * radius / h)))
    n_r = max(2, int(round(radius / h)))
    pts = [np.array(center, dtype=float)[None, :]]
    for j in range(1, n_r + 1):
        r = radius * j / n_r
        n_j = n_b if j == n_r else max(6, int(round(n_b * j / n_r)))
        th = 2 * np.pi * (np.arange(n_j) + 0.5 * (j % 2)) / n_j
        pts.append(np.column_stack([center[0] + r * np.cos(th),
                                    center[1] + r * np.sin(th)]))
    v = np.vstack(pts)
    tri = Delaunay(v)
    outer_start = v.shape[0] - n_b
    loop = np.arange(outer_start, v.shape[0])
    return DomainMesh(vertices=v, triangles=tri.simplices.copy(),
                      boundary_loops=[loop])


def annulus_mesh(h, r_inner=0.5, r_outer=1.0, center=(0.0, 0.0)):
    """Structured annulus mesh; boundary components: outer loop then inner."""
    if not 0 < r_inner < r_outer:
        raise MeshError("need 0 < r_inner < r_outer")
    n_t = max(12, int(round(2 * np.pi * r_outer / h)))
    n_r = max(2, int(round((r_outer - r_inner) / h)))
    radii = np.linspace(r_inner, r_outer, n_r + 1)
    th = 2 * np.pi * np.arange(n_t) / n_t
    rings = [np.column_stack([center[0] + r * np.cos(th),
                              center[1] + r * np.sin(th)]) for r in radii]
    v = np.vstack(rings)
    tris = []
    for j in range(n_r):
        base0, base1 = j * n_t, (j + 1) * n_t
        for i in range(n_t):
            ip = (i + 1) % n_t
            tris.append([base0 + i, base0 + ip, base1 + i])
            tris.append([base0 + ip, base1 + ip, base1 + i])
    outer = np.arange(n_r * n_t, (n_r + 1) * n_t)
    inner = np.arange(0, n_t)
    return DomainMesh(vertices=v, triangles=np.array(tris, dtype=int),
                      boundary_loops=[outer, inner])


def convex_polygon_mesh(corners, h):
    """Delaunay mesh of a convex polygon with ~h boundary spacing."""
    corners = np.asarray(corners, dtype=float)
    bpts = []
    n_c = corners.shape[0]
    for i in range(n_c):
        a, b = corners[i], corners[(i + 1) % n_c]
        n_seg = max(1, int(round(np.linalg.norm(b - a) / h)))
        for j in range(n_seg):
            bpts.append(a + (b - a) * j / n_seg)
    bpts = np.array(bpts)
    lo, hi = corners.min(0), corners.max(0)
    xs = np.arange(lo[0] + 0.5 * h, hi[0], h)
    ys = np.arange(lo[1] + 0.5 * h * np.sqrt(3) / 2, hi[1], h * np.sqrt(3) / 2)
    gx, gy = np.meshgrid(xs, ys)
    gx = gx + (np.arange(gy.shape[0]) % 2)[:, None] * 0.5 * h
    grid = np.column_stack([gx.ravel(), gy.ravel()])
    keep = _inside_convex(grid, corners, margin=0.55 * h)
    v = np.vstack([bpts, grid[keep]])
    tri = Delaunay(v)
    loop = np.arange(bpts.shape[0])
    return DomainMesh(vertices=v, triangles=tri.simplices.copy(),
                      boundary_loops=[loop])


def _inside_convex(pts, corners, margin):
    n_c = corners.shape[0]
    ok = np.ones(pts.shape[0], dtype=bool)
    for i in range(n_c):
        a, b = corners[i], corners[(i + 1) % n_c]
        e = b - a
        nrm = np.array([-e[1], e[0]]) / np.linalg.norm(e)   # inward for CCW
        ok &= (pts - a) @ nrm >= margin
    return ok


def uniform_refine(mesh, boundary_project=None):
    """Midpoint refinement (triangle -> 4).

    Boundary-edge midpoints are appended to the loops; ``boundary_project``
    (e.g. a snap onto the circumscribing circle) may relocate them so the
    refined family converges to a curved domain.  Material fields are
    inherited by the four children.
    """
    v = list(mesh.vertices)
    t = mesh.triangles
    boundary_mid = {}
    midpoint = {}

    bedges = set()
    for loop in mesh.boundary_loops:
        for i in range(len(loop)):
            a, b = int(loop[i]), int(loop[(i + 1) % len(loop)])
            bedges.add((min(a, b), max(a, b)))

    def mid(a, b):
        key = (min(a, b), max(a, b))
        if key not in midpoint:
            p = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
            if key in bedges and boundary_project is not None:
                p = boundary_project(p)
            midpoint[key] = len(v)
            v.append(p)
            if key in bedges:
                boundary_mid[key] = midpoint[key]
        return midpoint[key]

    new_t, parent = [], []
    for idx, (a, b, c) in enumerate(t):
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        new_t += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        parent += [idx] * 4

    loops = []
    for loop in mesh.boundary_loops:
        newloop = []
        for i in range(len(loop)):
            a, b = int(loop[i]), int(loop[(i + 1) % len(loop)])
            newloop.append(a)
            newloop.append(boundary_mid[(min(a, b), max(a, b))])
        loops.append(np.array(newloop, dtype=int))

    parent = np.array(parent)
    alpha = None if mesh.alpha is None else np.asarray(mesh.alpha)[parent]
    beta = None if mesh.beta is None else np.asarray(mesh.beta)[parent]
    return DomainMesh(vertices=np.array(v), triangles=np.array(new_t, dtype=int),
                      boundary_loops=loops, alpha=alpha, beta=beta)


def circle_projector(radius=1.0, center=(0.0, 0.0)):
    c = np.asarray(center, dtype=float)

    def proj(p):
        d = p - c
        return c + d * (radius / np.linalg.norm(d))
    return proj


def disk_mesh_family(h, levels, radius=1.0):
    """Nested-vertex disk meshes whose boundary snaps to the circle.

    Domain and FEM error both shrink at second order, so eigenvalues
    converge to the true disk values along the family.
    """
    out = [disk_mesh(h, radius=radius)]
    proj = circle_projector(radius)
    for _ in range(levels - 1):
        out.append(uniform_refine(out[-1], boundary_project=proj))
    return out


# ---------------------------------------------------------------------------
# FEM assembly
# ---------------------------------------------------------------------------

def stiffness_matrix(mesh):
    """K[i, j] = integral(alpha^-1 grad phi_i . grad phi_j)."""
    v, t = mesh.vertices, mesh.triangles
    m = t.shape[0]
    areas = np.abs(_signed_areas(v, t))
    p0, p1, p2 = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
    # grad of barycentric functions: rotated opposite edges / (2A)
    g = np.stack([p1 - p2, p2 - p0, p0 - p1], axis=1)       # (m, 3, 2)
    grads = np.stack([g[:, :, 1], -g[:, :, 0]], axis=2) / (2 * areas)[:, None, None]

    if mesh.alpha is None:
        ainv = None
    else:
        a = mesh.alpha
        if a.ndim == 1:
            ainv = 1.0 / a
        else:
            ainv = np.linalg.inv(a)

    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            gi, gj = grads[:, i, :], grads[:, j, :]
            if ainv is None:
                prod = np.einsum("mk,mk->m", gi, gj)
            elif ainv.ndim == 1:
                prod = ainv * np.einsum("mk,mk->m", gi, gj)
            else:
                prod = np.einsum("mk,mkl,ml->m", gi, ainv, gj)
            rows.append(t[:, i])
            cols.append(t[:, j])
            vals.append(areas * prod)
    n = mesh.n_vertices
    return sp.coo_matrix((np.concatenate(vals),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


def mass_matrix_2d(mesh):
    """Consistent mass M[i, j] = integral(beta phi_i phi_j)."""
    v, t = mesh.vertices, mesh.triangles
    areas = np.abs(_signed_areas(v, t))
    b = np.ones(t.shape[0]) if mesh.beta is None else mesh.beta
    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(t[:, i])
            cols.append(t[:, j])
            vals.append(b * areas / (6.0 if i == j else 12.0))
    n = mesh.n_vertices
    return sp.coo_matrix((np.concatenate(vals),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n)).tocsr()


def boundary_mass_matrix(mesh):
    """Lumped-free 1-D mass of the boundary trace space (dense, bdof order)."""
    bdofs, _ = _boundary_dofs(mesh)
    nb = len(bdofs)
    pos = {d: i for i, d in enumerate(bdofs)}
    Mb = np.zeros((nb, nb))
    for loop in mesh.boundary_loops:
        L = len(loop)
        for i in range(L):
            a, b = int(loop[i]), int(loop[(i + 1) % L])
            ell = np.linalg.norm(mesh.vertices[b] - mesh.vertices[a])
            ia, ib = pos[a], pos[b]
            Mb[ia, ia] += ell / 3.0
            Mb[ib, ib] += ell / 3.0
            Mb[ia, ib] += ell / 6.0
            Mb[ib, ia] += ell / 6.0
    return Mb, bdofs


def _boundary_dofs(mesh):
    bdofs = []
    offsets = []
    for loop in mesh.boundary_loops:
        offsets.append(len(bdofs))
        bdofs.extend(int(x) for x in loop)
    return bdofs, offsets


_GL8_X, _GL8_W = np.polynomial.legendre.leggauss(8)


def moment_matrix(mesh, spec, N_b):
    """T[n, k] = integral(Y_n phi_k dSigma) over boundary dofs k.

    Gauss-Legendre per boundary edge against the analytic arclength modes,
    so the moment matrix carries no grid error beyond quadrature decay.
    """
    if N_b > spec.count:
        raise SpectrumError(f"N_b={N_b} exceeds the boundary spectrum ({spec.count})")
    bdofs, _ = _boundary_dofs(mesh)
    pos = {d: i for i, d in enumerate(bdofs)}
    T = np.zeros((N_b, len(bdofs)))
    for comp, loop in enumerate(mesh.boundary_loops):
        L = len(loop)
        pts = mesh.vertices[np.asarray(loop)]
        seg = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        scum = np.concatenate([[0.0], np.cumsum(seg)])
        for i in range(L):
            a, b = int(loop[i]), int(loop[(i + 1) % L])
            s0, ell = scum[i], seg[i]
            sq = s0 + 0.5 * ell * (_GL8_X + 1.0)
            wq = 0.5 * ell * _GL8_W
            Y = spec.evaluate_curve_modes(comp, sq)[:N_b]
            lam_b = (sq - s0) / ell
            T[:, pos[a]] += Y @ (wq * (1.0 - lam_b))
            T[:, pos[b]] += Y @ (wq * lam_b)
    return T, bdofs


def trace_projection(mesh, spec, N_b):
    """P = G^(-1/2) T: traces onto orthonormalized discrete boundary modes.

    T is the moment matrix and G = T Mb^-1 T^t the Gram of the boundary
    eigenmodes represented in the FEM trace space (Mb the boundary mass).
    The mass-inverse normalization makes P^t P converge to Mb cleanly: at
    N_b equal to the boundary dof count, P^t Zhat P with Zhat = z0 I is
    z0 Mb exactly.  Since G^(-1/2) is Hermitian positive, P^t Zhat P
    inherits the accretivity of Zhat.
    """
    if N_b > spec.count:
        raise SpectrumError(f"N_b={N_b} exceeds the boundary spectrum ({spec.count})")
    T, bdofs = moment_matrix(mesh, spec, N_b)
    if N_b > len(bdofs):
        raise MeshError(f"N_b={N_b} exceeds the {len(bdofs)} boundary dofs")
    Mb, _ = boundary_mass_matrix(mesh)
    G = T @ np.linalg.solve(Mb, T.T)
    gvals, gvecs = np.linalg.eigh(G)
    if gvals.min() <= 1e-12 * gvals.max():
        raise MeshError("boundary modes degenerate in the trace space "
                        "(N_b too large for this mesh)")
    G_isqrt = (gvecs / np.sqrt(gvals)) @ gvecs.T
    return G_isqrt @ T, bdofs


# ---------------------------------------------------------------------------
# pencil assembly and solve
# ---------------------------------------------------------------------------

@dataclass
class AcousticPencil:
    """Matrices of P(lambda) = K - i lambda B_Z - lambda^2 M."""

    mesh: DomainMesh
    spectrum: object
    K: sp.csr_matrix
    M: sp.csr_matrix
    B: sp.csr_matrix            # complex; zero when Z = 0
    N_b: int
    Zhat: np.ndarray | None
    trace: np.ndarray           # T, (N_b, n_bdofs)
    bdofs: list

    @property
    def n(self):
        return self.K.shape[0]

    def boundary_block(self):
        """Dense B_Z restricted to boundary dofs (T^t Zhat T)."""
        if self.Zhat is None:
            return np.zeros((len(self.bdofs), len(self.bdofs)), dtype=complex)
        return self.trace.T @ self.Zhat @ self.trace

    def evaluate(self, lam, x):
        return self.K @ x - 1j * lam * (self.B @ x) - lam ** 2 * (self.M @ x)


def check_geometry_match(mesh, spec, tol=1e-10):
    comps = spec.geometry.components
    if len(comps) != len(mesh.boundary_loops):
        raise MeshError("boundary component count differs between mesh and spectrum")
    for c, loop in zip(comps, mesh.boundary_loops):
        pts = mesh.vertices[np.asarray(loop)]
        if c.shape != pts.shape or not np.allclose(c, pts, atol=tol, rtol=0.0):
            raise MeshError("mesh boundary and spectrum geometry disagree "
                            "(vertices or arclengths differ)")


def assemble_pencil(mesh, spec, Z=None, N_b=None):
    """Build (K, M, B_Z) for the impedance operator Z on the given mesh.

    Z = None or a zero operator gives the Neumann pencil K - lambda^2 M.
    """
    check_geometry_match(mesh, spec)
    bdofs, _ = _boundary_dofs(mesh)
    if N_b is None:
        N_b = min(64, max(4, len(bdofs) // 2), spec.count)
    K = stiffness_matrix(mesh)
    M = mass_matrix_2d(mesh)
    n = mesh.n_vertices

    if Z is not None and Z.N_trunc < N_b:
        raise SpectrumError(f"impedance truncation {Z.N_trunc} below N_b={N_b}")
    if Z is None or not np.any(Z.matrix):
        B = sp.csr_matrix((n, n), dtype=complex)
        Zhat = None
        T = np.zeros((0, len(bdofs)))
    else:
        T, bdofs = trace_projection(mesh, spec, N_b)
        Zhat = Z.matrix[:N_b, :N_b]
        Bb = T.T @ Zhat @ T
        idx = np.asarray(bdofs)
        B = sp.coo_matrix((Bb.ravel(),
                           (np.repeat(idx, len(idx)), np.tile(idx, len(idx)))),
                          shape=(n, n)).tocsr()
    return AcousticPencil(mesh=mesh, spectrum=spec, K=K, M=M, B=B, N_b=N_b,
                          Zhat=Zhat, trace=T, bdofs=bdofs)


@dataclass
class EigenReport:
    """Certified eigenvalues of one pencil solve."""

    eigenvalues: np.ndarray
    residuals: np.ndarray
    converged: np.ndarray
    vectors: np.ndarray | None
    shift: complex
    zero_tol: float
    residual_tol: float = RESIDUAL_TOL
    halfplane_tol: float = HALFPLANE_TOL

    def __post_init__(self):
        order = np.argsort(np.abs(self.eigenvalues), kind="stable")
        self.eigenvalues = self.eigenvalues[order]
        self.residuals = self.residuals[order]
        self.converged = self.converged[order]
        if self.vectors is not None:
            self.vectors = self.vectors[:, order]

    @property
    def zero_cluster_size(self):
        return int(np.sum(np.abs(self.eigenvalues) <= self.zero_tol))

    def nonzero(self):
        return self.eigenvalues[np.abs(self.eigenvalues) > self.zero_tol]

    def certified(self):
        keep = (np.abs(self.eigenvalues) > self.zero_tol) & self.converged \
            & (self.residuals <= self.residual_tol)
        return self.eigenvalues[keep]

    def in_lower_halfplane(self):
        lam = self.certified()
        return bool(np.all(lam.imag <= self.halfplane_tol * (1 + np.abs(lam))))

    def real_within_tol(self):
        lam = self.certified()
        return bool(np.all(np.abs(lam.imag) <= self.halfplane_tol * (1 + np.abs(lam))))

    def q_factors(self):
        lam = self.certified()
        decaying = lam[lam.imag < -self.halfplane_tol * (1 + np.abs(lam))]
        return np.abs(decaying.real) / (-2.0 * decaying.imag)

    def rows(self, sample_id=0):
        out = []
        for lam, res in zip(self.eigenvalues, self.residuals):
            q = abs(lam.real) / (-2 * lam.imag) if lam.imag < 0 else math.inf
            out.append((lam.real, lam.imag, res, q, sample_id))
        return out


def neumann_scale(pencil):
    """Magnitude of the smallest nonzero Neumann eigenvalue, sqrt scale."""
    k = min(6, pencil.n - 2)
    sigma = -1e-3 * (pencil.K.diagonal().mean() / pencil.M.diagonal().mean())
    nu = spla.eigsh(pencil.K, k=k, M=pencil.M, sigma=sigma, which="LM",
                    return_eigenvectors=False)
    nu = np.sort(nu)
    pos = nu[nu > 1e-8 * max(nu.max(), 1.0)]
    return float(np.sqrt(pos[0])) if pos.size else 1.0


def solve_pencil(pencil, n_wanted=12, shift=None, tol=1e-10, zero_tol=None):
    """Eigenvalues of P(lambda) nearest the shift, residual-certified.

    Neumann pencils go through the symmetric (K, M) eigensolve with
    lambda = +-sqrt(nu); everything else through the block linearization.
    Non-converged Ritz values are reported with ``converged=False``, never
    dropped.
    """
    lam_scale = neumann_scale(pencil)
    if zero_tol is None:
        zero_tol = 1e-7 * lam_scale

    if pencil.Zhat is None:
        k = min(max(2, n_wanted // 2 + 2), pencil.n - 2)
        sigma = -1e-3 * lam_scale ** 2
        nu, X = spla.eigsh(pencil.K, k=k, M=pencil.M, sigma=sigma, which="LM")
        lams, vecs = [], []
        for j, v in enumerate(nu):
            v = max(v, 0.0)
            root = math.sqrt(v)
            lams.append(root)
            vecs.append(X[:, j])
            if root > zero_tol:
                lams.append(-root)
                vecs.append(X[:, j])
        lam = np.array(lams, dtype=complex)
        V = np.array(vecs).T
        res = np.array([np.linalg.norm(pencil.evaluate(l, V[:, j]))
                        / np.linalg.norm(V[:, j]) for j, l in enumerate(lam)])
        conv = np.ones(lam.size, dtype=bool)
        order = np.argsort(np.abs(lam), kind="stable")[:n_wanted]
        return EigenReport(eigenvalues=lam[order], residuals=res[order],
                           converged=conv[order], vectors=V[:, order],
                           shift=complex(sigma), zero_tol=zero_tol)

    n = pencil.n
    if shift is None:
        shift = 0.6j * lam_scale
    A_blk = sp.bmat([[pencil.K, None], [None, pencil.M]], format="csc").astype(complex)
    B_blk = sp.bmat([[1j * pencil.B, pencil.M], [pencil.M, None]], format="csc").astype(complex)
    k = min(n_wanted, 2 * n - 2)
    lu = spla.splu((A_blk - shift * B_blk).tocsc())
    op = spla.LinearOperator(dtype=complex, shape=(2 * n, 2 * n),
                             matvec=lambda x: lu.solve(B_blk @ x))
    converged = True
    try:
        w, Y = spla.eigs(op, k=k, which="LM", tol=tol)
    except spla.ArpackNoConvergence as err:
        w, Y = err.eigenvalues, err.eigenvectors
        converged = False
        if w.size == 0:
            raise SpectrumError("eigen-solver returned no converged pairs") from err
    lam = shift + 1.0 / w
    X = Y[:n, :]
    res = np.empty(lam.size)
    for j, l in enumerate(lam):
        x = X[:, j]
        nrm = np.linalg.norm(x)
        if nrm < 1e-13:           # pure (0, q) mode: use the second block
            x = Y[n:, j]
            nrm = np.linalg.norm(x)
        res[j] = np.linalg.norm(pencil.evaluate(l, x)) / nrm
    conv = np.full(lam.size, converged)
    return EigenReport(eigenvalues=lam, residuals=res, converged=conv,
                       vectors=X, shift=complex(shift), zero_tol=zero_tol)


# ---------------------------------------------------------------------------
# m-dissipativity verification
# ---------------------------------------------------------------------------

def _energy_reduction(pencil, kernel_tol=1e-10):
    """A_h in energy coordinates, kernel of K deflated.

    With K = U diag(kappa) U^t (kappa > 0 kept), M = L L^t, the state
    (a, b) = (sqrt(kappa) U^t p, L^t q) renders the linearization as

        A_hat = [[0, C], [C^H, -i L^-1 B L^-t]],  C = sqrt(kappa) U^t L^-t,

    whose imaginary part is -Herm(B) conjugated: dissipative exactly when
    Herm(B_Z) is PSD, giving ||(A_hat - z)^-1|| <= 1/Im z on the nose.
    """
    K = pencil.K.toarray()
    M = pencil.M.toarray()
    kappa, U = np.linalg.eigh(K)
    keep = kappa > kernel_tol * max(kappa.max(), 1.0)
    Uk = U[:, keep]
    sq = np.sqrt(kappa[keep])
    L = np.linalg.cholesky(M)
    Linv = sla.solve_triangular(L, np.eye(L.shape[0]), lower=True)
    C = (sq[:, None] * Uk.T) @ Linv.T
    Bt = Linv @ pencil.B.toarray() @ Linv.T
    n1, n2 = C.shape
    A = np.zeros((n1 + n2, n1 + n2), dtype=complex)
    A[:n1, n1:] = C
    A[n1:, :n1] = C.conj().T
    A[n1:, n1:] = -1j * Bt
    return A


def verify_mdissipativity(pencil, report, n_grid_points=9, resolvent=True):
    """Half-plane and resolvent-bound diagnostics for a solved pencil.

    ``herm_check``: smallest eigenvalue of Herm(B_Z) on the trace block
    (>= -tol when the impedance is accretive).  ``halfplane_check``: largest
    Im(lambda) over certified eigenvalues (<= +tol then).  When
    ``resolvent`` is on, the first-order bound ||(A_h - z)^-1|| <= 1/Im z is
    checked at a grid of z in the upper half-plane in the energy norm;
    ``resolvent_violation`` is the largest positive excess.
    """
    Bb = pencil.boundary_block()
    herm = 0.5 * (Bb + Bb.conj().T)
    herm_check = float(np.linalg.eigvalsh(herm)[0]) if Bb.size else 0.0
    lam = report.certified()
    halfplane_check = float(lam.imag.max()) if lam.size else 0.0

    out = {"herm_check": herm_check, "halfplane_check": halfplane_check,
           "halfplane_ok": report.in_lower_halfplane()}
    if resolvent:
        A = _energy_reduction(pencil)
        scale = max(np.linalg.norm(A, 2), 1.0)
        side = int(round(math.sqrt(n_grid_points)))
        res = []
        I = np.eye(A.shape[0])
        for re in np.linspace(0.0, 1.0, side) * scale:
            for im in np.geomspace(0.25, 1.0, side) * scale:
                z = re + 1j * im
                smin = np.linalg.svd(A - z * I, compute_uv=False)[-1]
                res.append({"z_re": re, "z_im": im,
                            "bound": 1.0 / im,
                            "norm": 1.0 / smin,
                            "violation": max(0.0, 1.0 / smin - 1.0 / im)})
        out["resolvent_grid"] = res
        out["resolvent_violation"] = max(r["violation"] for r in res)
    return out


# ---------------------------------------------------------------------------
# refinement and Monte Carlo
# ---------------------------------------------------------------------------

def _match_eigen(prev, curr, gap_ratio=0.5):
    """Match prev eigenvalues to nearest in curr with a gap-ratio guard."""
    matched, flags = [], []
    for lam in prev:
        d = np.abs(curr - lam)
        j = int(np.argmin(d))
        d_sorted = np.sort(d)
        ambiguous = d_sorted.size > 1 and d_sorted[0] > gap_ratio * d_sorted[1]
        matched.append(curr[j])
        flags.append(bool(ambiguous))
    return np.array(matched), flags


def refinement_study(levels, z_maker=None, n_track=5, n_wanted=18, N_b=None,
                     oracle=None):
    """Track eigenvalues across a mesh family and estimate convergence order.

    ``levels`` is a list of (mesh, spectrum) pairs (at least 3);
    ``z_maker(spec)`` builds the impedance operator per level (None for
    Neumann).  Tracked eigenvalues are the n_track smallest nonzero ones
    with nonnegative real part on the coarsest level, followed through the
    family by nearest-neighbor matching with a gap-ratio guard of 0.5.
    Observed order against ``oracle`` (if given) or by self-convergence.
    """
    if len(levels) < 3:
        raise MeshError("refinement study needs at least 3 mesh levels")
    tracks, flags = None, []
    per_level = []
    for mesh, spec in levels:
        Z = z_maker(spec) if z_maker is not None else None
        pencil = assemble_pencil(mesh, spec, Z, N_b=N_b)
        report = solve_pencil(pencil, n_wanted=n_wanted)
        lam = report.certified()
        lam = lam[lam.real >= -report.zero_tol]
        lam = lam[np.argsort(np.abs(lam), kind="stable")]
        per_level.append(lam)
    tracks = [per_level[0][:n_track]]
    for lv in range(1, len(per_level)):
        matched, amb = _match_eigen(tracks[-1], per_level[lv])
        tracks.append(matched)
        flags.append(amb)
    tracks = np.array(tracks)       # (levels, n_track)

    table = {"tracked": tracks, "ambiguous": flags}
    if oracle is not None:
        oracle = np.asarray(oracle, dtype=complex)[:n_track]
        err = np.abs(tracks - oracle[None, :])
        with np.errstate(divide="ignore"):
            orders = np.log2(err[:-1] / err[1:])
        table["errors"] = err
        table["orders"] = orders
    diffs = np.abs(np.diff(tracks, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        table["self_orders"] = np.log2(diffs[:-1] / diffs[1:])
    table["last_rel_change"] = np.abs(tracks[-1] - tracks[-2]) / np.abs(tracks[-1])
    gaps = []
    for row in tracks:
        d = np.abs(row[:, None] - row[None, :])
        d[np.diag_indices(row.size)] = np.inf
        gaps.append(float(d.min()))
    table["min_pairwise_gap"] = min(gaps)
    return table


def monte_carlo_spectrum(mesh, spec, rspec, n_samples=50, seed0=0, N_b=None,
                         n_wanted=14, workers=1):
    """Ensemble of pencil solves over sampled random impedances.

    Per sample: zeta drawn by the counter-based sampler, mapped to boundary
    operator coefficients (field part skew, kernel part nonnegative),
    compressed to N_b modes, solved, classified.  Failures are counted and
    the run continues; reports merge in sample order regardless of worker
    scheduling.
    """
    check_geometry_match(mesh, spec)
    bdofs, _ = _boundary_dofs(mesh)
    if N_b is None:
        N_b = min(64, max(4, len(bdofs) // 2), spec.count)
    tensor = TripleProductTensor(spec)
    K = stiffness_matrix(mesh)
    M = mass_matrix_2d(mesh)
    T, bdofs = trace_projection(mesh, spec, N_b)
    lam_scale = neumann_scale(AcousticPencil(
        mesh=mesh, spectrum=spec, K=K, M=M,
        B=sp.csr_matrix(M.shape, dtype=complex), N_b=N_b, Zhat=None,
        trace=T, bdofs=bdofs))
    idx = np.asarray(bdofs)
    n = mesh.n_vertices

    def one(i):
        seed = seed0 + i
        zeta = sample_random_impedance(spec, rspec, spec.count, seed)
        phi = impedance_coefficients(zeta)
        Z = multiplier_impedance(phi, N_b, tensor=tensor)
        Bb = T.T @ Z.matrix @ T
        B = sp.coo_matrix((Bb.ravel(),
                           (np.repeat(idx, len(idx)), np.tile(idx, len(idx)))),
                          shape=(n, n)).tocsr()
        pencil = AcousticPencil(mesh=mesh, spectrum=spec, K=K,
                                M=M, B=B, N_b=N_b, Zhat=Z.matrix,
                                trace=T, bdofs=bdofs)
        report = solve_pencil(pencil, n_wanted=n_wanted, shift=0.6j * lam_scale)
        return {"seed": seed,
                "eigenvalues": report.eigenvalues,
                "rows": report.rows(sample_id=i),
                "halfplane": report.in_lower_halfplane(),
                "real_spectrum": report.real_within_tol(),
                "zero_cluster": report.zero_cluster_size,
                "accretive": is_accretive(Z)["verdict"]}

    results = [None] * n_samples
    failures = []
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as ex:
            futs = {ex.submit(one, i): i for i in range(n_samples)}
            for fut in futs:
                i = futs[fut]
                try:
                    results[i] = fut.result()
                except Exception as err:   # per-sample failure: count, go on
                    failures.append({"sample": i, "error": str(err)})
    else:
        for i in range(n_samples):
            try:
                results[i] = one(i)
            except Exception as err:
                failures.append({"sample": i, "error": str(err)})
    done = [r for r in results if r is not None]
    n_done = len(done)
    summary = {
        "n_samples": n_samples,
        "n_solved": n_done,
        "failures": failures,
        "fraction_halfplane": (sum(r["halfplane"] for r in done) / n_done) if n_done else 0.0,
        "fraction_real_spectrum": (sum(r["real_spectrum"] for r in done) / n_done) if n_done else 0.0,
        "fraction_accretive": (sum(r["accretive"] for r in done) / n_done) if n_done else 0.0,
        "min_zero_cluster": min((r["zero_cluster"] for r in done), default=0),
    }
    return {"summary": summary, "samples": done}

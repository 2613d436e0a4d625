"""P1 finite element assembly and sparse linear algebra.

Assembly returns scipy CSR matrices; variable coefficients are sampled at
element centroids (one-point quadrature, second order for P1).  Linear
systems are solved by Jacobi-preconditioned conjugate gradients with
Dirichlet conditions eliminated symmetrically, so every assembled operator
stays symmetric positive definite.

Volume L2 inner products used by the inversion machinery are taken with the
lumped (diagonal) mass, i.e. nodal quadrature.  This choice is what makes
the closed-form local minimizers in the Schwarz loops exact at the discrete
level.  Boundary (1D) mass matrices are kept consistent, which integrates
products of P1 traces exactly.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class SolverError(RuntimeError):
    """Raised when an iterative solve fails to reach its tolerance."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


def _coefficient_values(coef, cx, cy):
    if callable(coef):
        vals = np.asarray(coef(cx, cy), dtype=float)
        if vals.shape != cx.shape:
            vals = np.broadcast_to(vals, cx.shape).astype(float)
        return vals
    return np.full(cx.shape, float(coef))


def assemble(mesh, diffusion, reaction, elements=None):
    """Assemble the operator and mass matrices over a set of elements.

    Parameters
    ----------
    mesh : TriMesh
    diffusion, reaction : scalar or callable (x, y) -> value
        Coefficients of the -div(a grad u) + c u form, sampled at centroids.
    elements : optional int or bool array selecting elements (default: all).

    Returns
    -------
    (K, M) : CSR matrices of size n_nodes x n_nodes
        K is the discrete operator (diffusion stiffness plus reaction mass),
        M the consistent mass over the selected elements.
    """
    elems = mesh.elements if elements is None else mesh.elements[elements]
    if elems.shape[0] == 0:
        raise ValueError("element selection is empty")
    p = mesh.nodes[elems]  # (m, 3, 2)
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
                  - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    if np.any(area <= 0):
        raise ValueError("mesh contains non-positively oriented elements")

    cx = x.mean(axis=1)
    cy = y.mean(axis=1)
    a_vals = _coefficient_values(diffusion, cx, cy)
    c_vals = _coefficient_values(reaction, cx, cy)
    if np.any(a_vals <= 0):
        raise ValueError("diffusion coefficient must be positive at every centroid")

    # Constant P1 gradients: grad phi_k = (bx_k, by_k).
    bx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    by = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    bx /= (2 * area)[:, None]
    by /= (2 * area)[:, None]

    mass_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    stiff = (a_vals * area)[:, None, None] * (
        bx[:, :, None] * bx[:, None, :] + by[:, :, None] * by[:, None, :]
    )
    mass = area[:, None, None] * mass_ref[None, :, :]
    kloc = stiff + c_vals[:, None, None] * mass

    rows = np.repeat(elems, 3, axis=1).ravel()
    cols = np.tile(elems, (1, 3)).ravel()
    n = mesh.n_nodes
    K = sp.coo_matrix((kloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((mass.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return K, M


def lumped_mass(mesh, elements=None) -> np.ndarray:
    """Diagonal (lumped) mass over a set of elements: area/3 per vertex."""
    elems = mesh.elements if elements is None else mesh.elements[elements]
    p = mesh.nodes[elems]
    x, y = p[..., 0], p[..., 1]
    area = 0.5 * ((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
                  - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    m = np.zeros(mesh.n_nodes)
    np.add.at(m, elems.ravel(), np.repeat(area / 3.0, 3))
    return m


def assemble_boundary_mass(mesh, edges) -> sp.csr_matrix:
    """Consistent 1D P1 mass matrix over a list of boundary edges.

    Each edge of length L contributes L/6 * [[2, 1], [1, 2]] to its two
    endpoint nodes.  Rejects an empty edge list.
    """
    edges = np.asarray(edges, dtype=np.int64)
    if edges.size == 0:
        raise ValueError("boundary segment contains no complete edge")
    p0 = mesh.nodes[edges[:, 0]]
    p1 = mesh.nodes[edges[:, 1]]
    length = np.linalg.norm(p1 - p0, axis=1)
    loc = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    vals = length[:, None, None] * loc[None, :, :]
    rows = np.repeat(edges, 2, axis=1).ravel()
    cols = np.tile(edges, (1, 2)).ravel()
    n = mesh.n_nodes
    return sp.coo_matrix((vals.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def inner_product(u, v, mass) -> float:
    """Discrete L2 product u' M v; mass may be a CSR matrix or a diagonal
    given as a 1-D array.  Evaluated symmetrically, so swapping the
    arguments reproduces the value bit for bit."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"field shapes differ: {u.shape} vs {v.shape}")
    if isinstance(mass, np.ndarray):
        if mass.shape[0] != u.shape[0]:
            raise ValueError("mass diagonal does not match field length")
        return float(np.dot(u * v, mass))
    if mass.shape[0] != u.shape[0]:
        raise ValueError("mass matrix does not match field length")
    return float(0.5 * (np.dot(u, mass @ v) + np.dot(v, mass @ u)))


def pcg(A, b, *, diag=None, tol=1e-10, max_iter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients for SPD A.

    Stops when ||b - A x|| <= tol * ||b||; returns (x, relative residual,
    iterations).  Raises SolverError when max_iter is exhausted.
    """
    n = b.shape[0]
    if max_iter is None:
        max_iter = 40 * n + 200
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0.0, 0
    if diag is None:
        diag = A.diagonal()
    inv_diag = 1.0 / diag

    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - A @ x if x0 is not None else b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = np.dot(r, z)
    rnorm = np.linalg.norm(r)
    it = 0
    while rnorm > tol * bnorm:
        if it >= max_iter:
            raise SolverError(
                f"conjugate gradients stalled at relative residual "
                f"{rnorm / bnorm:.3e} after {it} iterations (target {tol:.1e})",
                residual=rnorm / bnorm,
                iterations=it,
            )
        Ap = A @ p
        alpha = rz / np.dot(p, Ap)
        x += alpha * p
        r -= alpha * Ap
        z = inv_diag * r
        rz_new = np.dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        rnorm = np.linalg.norm(r)
        it += 1
    return x, rnorm / bnorm, it


class DirichletSystem:
    """An SPD operator with a fixed Dirichlet node set eliminated symmetrically.

    Splits K into the free-free block and the free-fixed coupling once, so
    repeated solves with different right-hand sides and boundary values stay
    cheap.  Solutions are returned on the full index set with the boundary
    values imposed exactly.
    """

    def __init__(self, K: sp.csr_matrix, fixed: np.ndarray):
        n = K.shape[0]
        fixed = np.unique(np.asarray(fixed, dtype=np.int64))
        free_mask = np.ones(n, dtype=bool)
        free_mask[fixed] = False
        self.n = n
        self.fixed = fixed
        self.free = np.flatnonzero(free_mask)
        self.K_ff = K[np.ix_(self.free, self.free)].tocsr()
        self.K_fd = K[np.ix_(self.free, fixed)].tocsr() if fixed.size else None
        self.diag = self.K_ff.diagonal()
        if np.any(self.diag <= 0):
            raise ValueError("operator is not positive definite on free nodes")

    def solve(self, rhs, fixed_values=None, *, tol=1e-10, max_iter=None, x0=None):
        """Solve K x = rhs with x = fixed_values on the fixed set.

        rhs is the full-length load vector; fixed_values is a vector over the
        fixed set (or None for homogeneous).  x0, when given, is a full-length
        warm start.
        """
        b = rhs[self.free]
        if self.K_fd is not None and fixed_values is not None:
            vals = np.asarray(fixed_values, dtype=float)
            if vals.ndim == 0:
                vals = np.full(self.fixed.size, float(vals))
            b = b - self.K_fd @ vals
        else:
            vals = None
        guess = x0[self.free] if x0 is not None else None
        xf, _, _ = pcg(self.K_ff, b, diag=self.diag, tol=tol,
                       max_iter=max_iter, x0=guess)
        x = np.zeros(self.n)
        x[self.free] = xf
        if vals is not None:
            x[self.fixed] = vals
        return x


def solve(K, rhs, dirichlet_nodes=None, dirichlet_values=None, *,
          tol=1e-10, max_iter=None, x0=None):
    """One-shot solve of K x = rhs with optional Dirichlet data.

    Convenience wrapper over DirichletSystem; prefer constructing the system
    once when solving repeatedly with the same matrix and boundary set.
    """
    if dirichlet_nodes is None or len(dirichlet_nodes) == 0:
        x, _, _ = pcg(K.tocsr(), rhs, tol=tol, max_iter=max_iter, x0=x0)
        return x
    system = DirichletSystem(K.tocsr(), dirichlet_nodes)
    return system.solve(rhs, dirichlet_values, tol=tol, max_iter=max_iter, x0=x0)


def export_coo(A) -> str:
    """Matrix in coordinate text format, one 'row col value' line per nonzero."""
    coo = A.tocoo()
    return "\n".join(
        f"{r} {c} {v:.17g}" for r, c, v in zip(coo.row, coo.col, coo.data)
    ) + "\n"

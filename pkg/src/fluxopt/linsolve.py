"""Deterministic linear solves and discrete stability constants.

The workhorse is a Jacobi-preconditioned conjugate gradient loop with a fixed
summation order, so repeated runs reproduce results bitwise.  Multi-right-hand
side work (the dense reduced operator, eigen iterations) goes through a cached
sparse LU factorization instead.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import assembly
from .mesh import BoundaryTag, Mesh, dof_partition


class ConvergenceError(RuntimeError):
    """An iterative solve failed to reach its tolerance."""


def solve_spd(matrix, rhs, tol=1e-12, max_iter=None):
    """Solve a symmetric positive definite system by preconditioned CG.

    Parameters
    ----------
    matrix : sparse matrix, already restricted to the active index set.
    rhs : right-hand side vector.
    tol : relative residual target |A x - b| / |b|.
    max_iter : iteration cap, default scales with the system size.

    The residual of any computed solution cannot drop below the roundoff
    floor eps * |A| * |x| / |b|; a solve that stalls there is accepted once
    the true residual is within max(100 * tol, 1e-10) relative, otherwise a
    ConvergenceError is raised.
    """
    rhs = np.asarray(rhs, dtype=float)
    size = matrix.shape[0]
    if matrix.shape != (size, size) or rhs.shape != (size,):
        raise ValueError("matrix and right-hand side dimensions do not match")
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros(size)
    diag = matrix.diagonal()
    if np.any(diag <= 0):
        raise ConvergenceError("matrix has a nonpositive diagonal entry: not positive definite")
    if max_iter is None:
        max_iter = max(1000, 5 * size)

    x = np.zeros(size)
    r = rhs.copy()
    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    best_x = x.copy()
    best_res = bnorm
    last_improve = 0
    reseeds = 0
    target = tol * bnorm
    accept = max(100.0 * tol, 1e-10) * bnorm

    for it in range(1, max_iter + 1):
        ap = matrix @ p
        pap = float(p @ ap)
        if pap <= 0.0:
            raise ConvergenceError("matrix is not positive definite on the given index set")
        step = rz / pap
        x += step * p
        r -= step * ap
        rn = float(np.linalg.norm(r))
        if rn < best_res:
            best_res = rn
            best_x = x.copy()
            last_improve = it
        if rn <= target:
            true_r = rhs - matrix @ x
            tn = float(np.linalg.norm(true_r))
            if tn <= target:
                return x
            # recursion drifted from the true residual: reseed and continue
            reseeds += 1
            if tn < best_res:
                best_res = tn
                best_x = x.copy()
            if reseeds > 5:
                break
            r = true_r
            z = r / diag
            p = z.copy()
            rz = float(r @ z)
            continue
        if it - last_improve > 500:
            break
        z = r / diag
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new

    true_best = float(np.linalg.norm(rhs - matrix @ best_x))
    if true_best <= accept:
        return best_x
    raise ConvergenceError(
        f"CG did not converge: relative residual {true_best / bnorm:.3e} after cap/stall"
    )


def factorize(matrix):
    """Sparse LU factorization; returns a solve callable for repeated right sides."""
    lu = spla.splu(sp.csc_matrix(matrix))
    return lu.solve


@dataclass(frozen=True)
class DiscreteConstants:
    """Extremal constants of the discrete spaces on one mesh.

    lambda_h : coercivity floor of the gradient form over the clamped subspace,
        against the full first-order norm.
    lambda1_h : coercivity floor of the gradient form augmented by the clamped
        boundary mass, over the whole space.
    gamma0_norm_h : operator norm of the flux-boundary trace map from the
        first-order norm to the boundary L2 norm.
    mesh_n : cells per side of the mesh the constants were estimated on.
    """

    lambda_h: float
    lambda1_h: float
    gamma0_norm_h: float
    mesh_n: int

    def contraction_bound(self, alpha=None) -> float:
        """Smallest penalty weight at which the control update map contracts.

        For the Robin-type family the coercivity floor scales like
        lambda1_h * min(1, alpha).
        """
        if alpha is None:
            floor = self.lambda_h
        else:
            floor = self.lambda1_h * min(1.0, float(alpha))
        return self.gamma0_norm_h**2 / floor**2


def _pencil_largest(num_mat, den_mat, den_solve, start, rtol, max_iter=50000) -> float:
    """Largest generalized eigenvalue of (num, den) by power iteration on den^-1 num."""
    x = start / np.linalg.norm(start)
    mu = 0.0
    for _ in range(max_iter):
        y = den_solve(num_mat @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            raise ConvergenceError("power iteration collapsed to the null space")
        y /= ny
        mu_new = float((y @ (num_mat @ y)) / (y @ (den_mat @ y)))
        if abs(mu_new - mu) <= rtol * abs(mu_new):
            return mu_new
        mu = mu_new
        x = y
    raise ConvergenceError("power iteration for a generalized eigenvalue did not converge")


_constants_cache = weakref.WeakKeyDictionary()


def estimate_constants(mesh: Mesh, tol=1e-8) -> DiscreteConstants:
    """Estimate the discrete stability constants by inverse power iterations.

    Each constant is an extremal generalized Rayleigh quotient; smallest
    eigenvalues are obtained as reciprocals of the largest ones of the swapped
    pencil, iterated to a relative tolerance well below tol.
    """
    cached = _constants_cache.get(mesh)
    if cached is not None:
        return cached

    part = dof_partition(mesh)
    stiff = assembly.assemble_stiffness(mesh)
    mass = assembly.assemble_mass(mesh)
    b1 = assembly.assemble_boundary_mass(mesh, BoundaryTag.GAMMA1)
    b2 = assembly.assemble_boundary_mass(mesh, BoundaryTag.GAMMA2)
    v_gram = (stiff + mass).tocsr()
    rng = np.random.default_rng(0)
    rtol = min(tol * 1e-2, 1e-10)

    free = part.free_dofs
    stiff_ff = stiff[free][:, free].tocsr()
    v_ff = v_gram[free][:, free].tocsr()
    inv_lambda = _pencil_largest(
        v_ff, stiff_ff, factorize(stiff_ff), rng.standard_normal(len(free)), rtol
    )
    lambda_h = 1.0 / inv_lambda

    robin1 = (stiff + b1).tocsr()
    inv_lambda1 = _pencil_largest(
        v_gram, robin1, factorize(robin1), rng.standard_normal(v_gram.shape[0]), rtol
    )
    lambda1_h = 1.0 / inv_lambda1

    gamma_sq = _pencil_largest(
        b2, v_gram, factorize(v_gram), rng.standard_normal(v_gram.shape[0]), rtol
    )
    constants = DiscreteConstants(
        lambda_h=lambda_h,
        lambda1_h=lambda1_h,
        gamma0_norm_h=float(np.sqrt(gamma_sq)),
        mesh_n=mesh.n,
    )
    _constants_cache[mesh] = constants
    return constants

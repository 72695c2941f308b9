"""Truncated-SVD pseudoinverse factors, rigid-body matrices and projectors,
rotation reuse of factorizations, and a non-restarted GMRES.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DegenerateGeometryError, InvalidArgumentError, NumericalError
from .geometry import NodeSet


@dataclass
class OneBodyFactor:
    """Economy SVD of a one-body block with relative truncation threshold.

    All singular values are retained; those below ``sigma_1 * trunc_eps``
    are flagged and inverted as zero (values exactly at the threshold are
    kept).  Application must go through :func:`apply_pinv`: the explicit
    pseudoinverse matrix is never formed, which would be unstable for the
    exponentially ill-conditioned MFS blocks.
    """

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray
    trunc_eps: float
    inv_singular: np.ndarray = field(init=False)

    def __post_init__(self):
        s = self.singular_values
        if np.any(np.diff(s) > 0):
            raise InvalidArgumentError("singular values must be non-increasing")
        keep = s >= s[0] * self.trunc_eps if s.size else np.zeros(0, bool)
        with np.errstate(divide="ignore"):
            inv = np.where(keep, 1.0 / s, 0.0)
        self.inv_singular = inv

    @property
    def truncated_count(self):
        return int(np.count_nonzero(self.inv_singular == 0.0))

    @property
    def shape(self):
        return (self.left.shape[0], self.right.shape[0])


def factorize(block, trunc_eps=1e-14, overwrite=False):
    """Economy SVD of a dense block, with truncation threshold recorded.

    ``trunc_eps`` must lie in [machine epsilon, 1e-2]; the default keeps
    every direction representable in double precision while guarding
    against exact-zero inversion.
    """
    eps = np.finfo(float).eps
    if not (eps <= trunc_eps <= 1e-2):
        raise InvalidArgumentError("trunc_eps must lie in [machine eps, 1e-2]")
    block = np.asarray(block, dtype=float)
    if not np.all(np.isfinite(block)):
        raise InvalidArgumentError("block entries must be finite")
    try:
        u, s, vt = scipy.linalg.svd(
            block, full_matrices=False, overwrite_a=overwrite, lapack_driver="gesdd"
        )
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        try:
            u, s, vt = scipy.linalg.svd(
                block, full_matrices=False, overwrite_a=overwrite, lapack_driver="gesvd"
            )
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
            raise NumericalError(f"SVD failed to converge: {exc}") from exc
    return OneBodyFactor(u, s, np.ascontiguousarray(vt.T), trunc_eps)


def apply_pinv(factor, rhs):
    """Pseudoinverse application V . Sigma^+ . (U^T rhs), strictly two-step.

    The intermediate ``U^T rhs`` is materialized and truncated directions
    are inverted as zero.  ``rhs`` may be a vector or a matrix of stacked
    right-hand-side columns.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != factor.left.shape[0]:
        raise InvalidArgumentError(
            f"rhs length {rhs.shape[0]} != factor row dimension {factor.left.shape[0]}"
        )
    coeffs = factor.left.T @ rhs
    if rhs.ndim == 1:
        coeffs *= factor.inv_singular
    else:
        coeffs *= factor.inv_singular[:, None]
    return factor.right @ coeffs


def rotate_stacked(rotation, stacked):
    """Apply a 3x3 rotation to each 3-vector block of a stacked vector."""
    v = np.asarray(stacked, dtype=float)
    return (v.reshape(-1, 3) @ rotation.T).reshape(v.shape)


def rotated_pinv_apply(factor, rotation, rhs, scale=1.0):
    """Pseudoinverse of a rotated (and optionally rescaled) body's block.

    For vector kernels, a body posed by rotation R has block
    R_M S0 R_N^T, so its pseudoinverse action is
    R_N . V . Sigma^+ . (U^T . (R_M^T rhs)); spatial rescaling of the body
    multiplies the pseudoinverse by the scale factor.  Only meaningful for
    Stokes blocks; scalar Laplace blocks are rotation invariant, so callers
    use :func:`apply_pinv` directly there.
    """
    if factor.left.shape[0] % 3 or factor.right.shape[0] % 3:
        raise InvalidArgumentError(
            "rotated application requires 3-vector blocks (Stokes kernels only)"
        )
    rotation = np.asarray(rotation, dtype=float)
    out = apply_pinv(factor, rotate_stacked(rotation.T, rhs))
    return scale * rotate_stacked(rotation, out)


def cross_matrix(d):
    """Skew matrix with cross_matrix(d) @ w == w x d."""
    return np.array(
        [
            [0.0, d[2], -d[1]],
            [-d[2], 0.0, d[0]],
            [d[1], -d[0], 0.0],
        ]
    )


@dataclass(frozen=True)
class RigidMatrix:
    """Stacked per-node [I3 | (x - c)x] blocks mapping (v, w) to nodal
    rigid velocities; the transpose extracts net force and torque."""

    matrix: np.ndarray
    center: np.ndarray

    @property
    def node_count(self):
        return self.matrix.shape[0] // 3

    def apply(self, motion):
        return self.matrix @ np.asarray(motion, dtype=float)

    def apply_transpose(self, strengths):
        return self.matrix.T @ np.asarray(strengths, dtype=float)

    def gram(self):
        return self.matrix.T @ self.matrix


def rigid_matrix(nodes, center):
    """Rigid-body matrix of a node set about ``center`` (shape (3n, 6))."""
    pts = nodes.points if isinstance(nodes, NodeSet) else np.asarray(nodes, dtype=float)
    if pts.shape[0] == 0:
        raise InvalidArgumentError("rigid matrix needs at least one node")
    center = np.asarray(center, dtype=float).reshape(3)
    n = pts.shape[0]
    K = np.zeros((3 * n, 6))
    d = pts - center
    K[:, :3] = np.tile(np.eye(3), (n, 1))
    K[0::3, 4], K[0::3, 5] = d[:, 2], -d[:, 1]
    K[1::3, 3], K[1::3, 5] = -d[:, 2], d[:, 0]
    K[2::3, 3], K[2::3, 4] = d[:, 1], -d[:, 0]
    return RigidMatrix(K, center)


class MeanProjector:
    """Orthogonal projector onto constant vectors (Laplace strength space)."""

    def __init__(self, n):
        if n < 1:
            raise InvalidArgumentError("projector needs at least one node")
        self.n = n

    def apply(self, v):
        return np.full_like(v, np.mean(v))

    def complement(self, v):
        return v - np.mean(v)


class RigidProjector:
    """Orthogonal projector onto rigid-body nodal velocity vectors.

    Applies L = K (K^T K)^{-1} K^T through thin products; the 6x6 Gram
    matrix is inverted via Cholesky (it is SPD whenever the nodes are not
    collinear).
    """

    def __init__(self, rigid):
        gram = rigid.gram()
        eigs = np.linalg.eigvalsh(gram)
        if eigs[0] <= 0 or eigs[-1] / eigs[0] > 1e12:
            raise DegenerateGeometryError(
                "rigid-body Gram matrix is singular or too ill-conditioned"
            )
        self.rigid = rigid
        self._cho = scipy.linalg.cho_factor(gram)

    def solve_gram(self, rhs):
        return scipy.linalg.cho_solve(self._cho, rhs)

    def apply(self, v):
        return self.rigid.apply(self.solve_gram(self.rigid.apply_transpose(v)))

    def complement(self, v):
        return v - self.apply(v)


def projector(nodes_or_rigid, stokes=False, center=None):
    """Build the mean (Laplace) or rigid-body (Stokes) projector applier."""
    if not stokes:
        n = nodes_or_rigid if isinstance(nodes_or_rigid, int) else nodes_or_rigid.count
        return MeanProjector(n)
    rigid = nodes_or_rigid
    if not isinstance(rigid, RigidMatrix):
        rigid = rigid_matrix(rigid, center)
    return RigidProjector(rigid)


class MeanCoupling:
    """Rectangular all-entries-1/N coupling for the Laplace ansatz."""

    def __init__(self, m, n):
        self.m, self.n = m, n

    def apply(self, strengths):
        return np.full(self.m, np.sum(strengths) / self.n)


class RigidCoupling:
    """Rank-6 coupling L_r = K_M K_N^T applied as two thin products."""

    def __init__(self, K_M, K_N):
        if not np.allclose(K_M.center, K_N.center, atol=1e-12):
            raise InvalidArgumentError("rigid coupling requires matching centers")
        self.K_M = K_M
        self.K_N = K_N

    def apply(self, strengths):
        return self.K_M.apply(self.K_N.apply_transpose(strengths))

    def dense(self):
        return self.K_M.matrix @ self.K_N.matrix.T


def coupling_Lr(K_M, K_N):
    return RigidCoupling(K_M, K_N)


@dataclass
class SolveStats:
    iterations: int
    residual_history: list
    converged: bool

    def __post_init__(self):
        if len(self.residual_history) != self.iterations + 1:
            raise InvalidArgumentError("residual history must have iterations+1 entries")


def gmres(matvec, b, rel_tol=1e-8, max_iters=300):
    """Non-restarted GMRES with modified Gram-Schmidt orthogonalization.

    Stops when ||b - A x|| / ||b|| <= rel_tol; returns the best iterate with
    ``converged=False`` if ``max_iters`` is reached first.  The residual
    history (one entry per Krylov dimension, starting at 1) is
    non-increasing by construction of the Givens recurrence.
    """
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise InvalidArgumentError("right-hand side must be finite")
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros_like(b), SolveStats(0, [0.0], True)

    n = b.size
    max_iters = min(max_iters, n)
    V = np.empty((max_iters + 1, n))
    H = np.zeros((max_iters + 1, max_iters))
    cs = np.zeros(max_iters)
    sn = np.zeros(max_iters)
    g = np.zeros(max_iters + 1)
    g[0] = bnorm
    V[0] = b / bnorm
    history = [1.0]
    converged = False
    columns = 0
    k = 0
    for k in range(max_iters):
        # copy: the orthogonalization below must not alias the Krylov basis
        w = np.array(matvec(V[k]), dtype=float, copy=True)
        for i in range(k + 1):
            H[i, k] = V[i] @ w
            w -= H[i, k] * V[i]
        hsub = float(np.linalg.norm(w))
        H[k + 1, k] = hsub
        for i in range(k):
            hi = cs[i] * H[i, k] + sn[i] * H[i + 1, k]
            H[i + 1, k] = -sn[i] * H[i, k] + cs[i] * H[i + 1, k]
            H[i, k] = hi
        denom = float(np.hypot(H[k, k], H[k + 1, k]))
        if denom == 0.0:
            # dead column: this Krylov direction cannot reduce the residual
            history.append(history[-1])
            break
        cs[k] = H[k, k] / denom
        sn[k] = H[k + 1, k] / denom
        H[k, k] = denom
        H[k + 1, k] = 0.0
        g[k + 1] = -sn[k] * g[k]
        g[k] = cs[k] * g[k]
        columns = k + 1
        res = min(abs(g[k + 1]) / bnorm, history[-1])
        history.append(res)
        if res <= rel_tol:
            converged = True
            break
        if hsub == 0.0:
            # invariant Krylov subspace: the projected solution is exact
            break
        V[k + 1] = w / hsub
    iters = k + 1
    if columns:
        y = scipy.linalg.solve_triangular(H[:columns, :columns], g[:columns], lower=False)
        x = V[:columns].T @ y
    else:
        x = np.zeros_like(b)
    return x, SolveStats(iters, history, converged)

"""Fundamental solutions and dense target-from-source block assembly.

Unknown ordering everywhere is node-major with Cartesian components (x,y,z)
innermost, so a Stokes block from N sources to M targets is a dense
(3M, 3N) array whose (i, j) 3x3 sub-block couples target i to source j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, SingularPairError
from .geometry import NodeSet

INV_4PI = 1.0 / (4.0 * np.pi)
INV_8PI = 1.0 / (8.0 * np.pi)

_ASSEMBLY_CHUNK = 4_000_000  # kernel pair evaluations per target chunk


@dataclass(frozen=True)
class LaplaceSingle:
    """Scalar Laplace monopole kernel 1/(4 pi r)."""

    @property
    def source_dim(self):
        return 1

    @property
    def target_dim(self):
        return 1


@dataclass(frozen=True)
class Stokeslet:
    mu: float = 1.0

    def __post_init__(self):
        if self.mu <= 0:
            raise InvalidArgumentError("viscosity must be positive")

    @property
    def source_dim(self):
        return 3

    @property
    def target_dim(self):
        return 3


@dataclass(frozen=True)
class StokesPressure:
    """Pressure of a Stokeslet: p = (1/8pi) Pi . lambda, Pi = 2 r / |r|^3."""

    @property
    def source_dim(self):
        return 3

    @property
    def target_dim(self):
        return 1


@dataclass(frozen=True)
class StokesTraction:
    """Traction sigma(G lambda, p) . n at a target with unit normal n."""

    mu: float = 1.0

    def __post_init__(self):
        if self.mu <= 0:
            raise InvalidArgumentError("viscosity must be positive")

    @property
    def source_dim(self):
        return 3

    @property
    def target_dim(self):
        return 3


KernelKind = LaplaceSingle | Stokeslet | StokesPressure | StokesTraction


def laplace_green(x, y):
    """Laplace fundamental solution 1/(4 pi |x - y|)."""
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    if r == 0.0:
        raise SingularPairError("laplace_green at coincident points")
    return INV_4PI / r


def stokeslet(x, y, mu=1.0):
    """Stokeslet tensor (1/(8 pi mu r)) (I + rhat rhat^T)."""
    if mu <= 0:
        raise InvalidArgumentError("viscosity must be positive")
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(d)
    if r == 0.0:
        raise SingularPairError("stokeslet at coincident points")
    rhat = d / r
    return (INV_8PI / (mu * r)) * (np.eye(3) + np.outer(rhat, rhat))


def stokes_pressure(x, y):
    """Vector pressure kernel Pi(x, y) = 2 (x - y)/|x - y|^3.

    The pressure of a Stokeslet of strength lambda is (1/8 pi) Pi . lambda.
    """
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(d)
    if r == 0.0:
        raise SingularPairError("stokes_pressure at coincident points")
    return 2.0 * d / r**3


def stokes_traction_kernel(x, n, y):
    """Traction tensor T with T . lambda = sigma(G lambda, p) . n.

    Closed form -(3/(4 pi)) (rhat . n) rhat rhat^T / r^2; independent of
    viscosity since sigma scales with mu while the Stokeslet scales with
    1/mu.
    """
    n = np.asarray(n, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > 1e-12:
        raise InvalidArgumentError("traction normal must be a unit vector")
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    r = np.linalg.norm(d)
    if r == 0.0:
        raise SingularPairError("stokes_traction_kernel at coincident points")
    rhat = d / r
    return (-3.0 * INV_4PI) * (rhat @ n) / r**2 * np.outer(rhat, rhat)


def _points(node_set):
    if isinstance(node_set, NodeSet):
        return node_set.points
    return np.ascontiguousarray(np.asarray(node_set, dtype=float))


def _check_coincidence(r2, row_offset):
    hits = np.argwhere(r2 == 0.0)
    if hits.size:
        i, j = hits[0]
        raise SingularPairError(
            f"target {row_offset + i} coincides with source {j}",
            target_index=int(row_offset + i),
            source_index=int(j),
        )


def assemble_block(targets, sources, kind, normals=None):
    """Dense kernel matrix from all sources to all targets.

    Laplace blocks are (M, N); Stokeslet and traction blocks are (3M, 3N)
    with 3x3 sub-blocks; pressure blocks are (M, 3N) and include the 1/(8 pi)
    prefactor so that ``block @ strengths`` is the pressure field.  Raises
    :class:`SingularPairError` identifying the indices of any coincident
    target/source pair.
    """
    tgt = _points(targets)
    src = _points(sources)
    m, n = tgt.shape[0], src.shape[0]
    if isinstance(kind, StokesTraction):
        if normals is None:
            raise InvalidArgumentError("traction assembly requires target normals")
        normals = np.asarray(normals, dtype=float)
        if normals.shape != tgt.shape:
            raise InvalidArgumentError("need one unit normal per target")
        if np.max(np.abs(np.linalg.norm(normals, axis=1) - 1.0)) > 1e-12:
            raise InvalidArgumentError("traction normals must be unit vectors")
    elif normals is not None:
        raise InvalidArgumentError("normals are only meaningful for traction blocks")

    out = np.empty((kind.target_dim * m, kind.source_dim * n))
    chunk = max(1, _ASSEMBLY_CHUNK // max(n, 1))
    for lo in range(0, m, chunk):
        hi = min(lo + chunk, m)
        d = tgt[lo:hi, None, :] - src[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", d, d)
        _check_coincidence(r2, lo)
        inv_r = 1.0 / np.sqrt(r2)
        if isinstance(kind, LaplaceSingle):
            out[lo:hi] = INV_4PI * inv_r
        elif isinstance(kind, Stokeslet):
            c = INV_8PI / kind.mu
            rr = np.einsum("ija,ijb->ijab", d, d) * (inv_r * inv_r)[..., None, None]
            rr += np.eye(3)
            rr *= (c * inv_r)[..., None, None]
            out[3 * lo : 3 * hi] = rr.transpose(0, 2, 1, 3).reshape(3 * (hi - lo), 3 * n)
        elif isinstance(kind, StokesPressure):
            out[lo:hi] = (2.0 * INV_8PI * d * (inv_r**3)[..., None]).reshape(hi - lo, 3 * n)
        else:
            rn = np.einsum("ijk,ik->ij", d, normals[lo:hi])
            coeff = (-3.0 * INV_4PI) * rn * inv_r**5
            rr = np.einsum("ija,ijb->ijab", d, d) * coeff[..., None, None]
            out[3 * lo : 3 * hi] = rr.transpose(0, 2, 1, 3).reshape(3 * (hi - lo), 3 * n)
    return out

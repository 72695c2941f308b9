"""Bulk kernel summation from all sources to all targets.

This is the performance-critical engine behind every matrix-vector product
and field evaluation.  The direct backend is an exact pairwise sum compiled
with numba, parallelized over targets with a fixed per-target accumulation
order (source index order), so results are independent of the thread count.
The accelerated backend runs the same sums over target tiles and carries a
relative-accuracy contract for drop-in replacement by a treecode or FMM.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import InvalidArgumentError, SingularPairError
from .kernels import INV_4PI, INV_8PI, LaplaceSingle, StokesPressure, Stokeslet, StokesTraction

_ACCEL_TILE = 2048


@dataclass(frozen=True)
class EvaluatorConfig:
    backend: str = "direct"
    tolerance: float | None = None
    thread_count: int | None = None

    def __post_init__(self):
        if self.backend not in ("direct", "accelerated"):
            raise InvalidArgumentError(f"unknown evaluator backend {self.backend!r}")
        if self.backend == "accelerated":
            if self.tolerance is None or not (1e-14 <= self.tolerance <= 1e-2):
                raise InvalidArgumentError(
                    "accelerated backend needs a tolerance in [1e-14, 1e-2]"
                )
        if self.thread_count is not None and self.thread_count < 1:
            raise InvalidArgumentError("thread_count must be positive")


@numba.njit(parallel=True, cache=True)
def _laplace_sum(src, q, tgt, out, bad):
    for t in numba.prange(tgt.shape[0]):
        acc = 0.0
        for s in range(src.shape[0]):
            dx = tgt[t, 0] - src[s, 0]
            dy = tgt[t, 1] - src[s, 1]
            dz = tgt[t, 2] - src[s, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 == 0.0:
                bad[t] = s
                continue
            acc += q[s] / np.sqrt(r2)
        out[t] = acc


@numba.njit(parallel=True, cache=True)
def _stokeslet_sum(src, lam, tgt, out, bad):
    for t in numba.prange(tgt.shape[0]):
        u0 = 0.0
        u1 = 0.0
        u2 = 0.0
        for s in range(src.shape[0]):
            dx = tgt[t, 0] - src[s, 0]
            dy = tgt[t, 1] - src[s, 1]
            dz = tgt[t, 2] - src[s, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 == 0.0:
                bad[t] = s
                continue
            inv_r = 1.0 / np.sqrt(r2)
            dot = (dx * lam[s, 0] + dy * lam[s, 1] + dz * lam[s, 2]) * inv_r * inv_r * inv_r
            u0 += lam[s, 0] * inv_r + dot * dx
            u1 += lam[s, 1] * inv_r + dot * dy
            u2 += lam[s, 2] * inv_r + dot * dz
        out[t, 0] = u0
        out[t, 1] = u1
        out[t, 2] = u2


@numba.njit(parallel=True, cache=True)
def _pressure_sum(src, lam, tgt, out, bad):
    for t in numba.prange(tgt.shape[0]):
        acc = 0.0
        for s in range(src.shape[0]):
            dx = tgt[t, 0] - src[s, 0]
            dy = tgt[t, 1] - src[s, 1]
            dz = tgt[t, 2] - src[s, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 == 0.0:
                bad[t] = s
                continue
            inv_r = 1.0 / np.sqrt(r2)
            inv_r3 = inv_r * inv_r * inv_r
            acc += (dx * lam[s, 0] + dy * lam[s, 1] + dz * lam[s, 2]) * inv_r3
        out[t] = acc


@numba.njit(parallel=True, cache=True)
def _traction_sum(src, lam, tgt, nrm, out, bad):
    for t in numba.prange(tgt.shape[0]):
        u0 = 0.0
        u1 = 0.0
        u2 = 0.0
        for s in range(src.shape[0]):
            dx = tgt[t, 0] - src[s, 0]
            dy = tgt[t, 1] - src[s, 1]
            dz = tgt[t, 2] - src[s, 2]
            r2 = dx * dx + dy * dy + dz * dz
            if r2 == 0.0:
                bad[t] = s
                continue
            inv_r = 1.0 / np.sqrt(r2)
            inv_r5 = inv_r * inv_r
            inv_r5 = inv_r5 * inv_r5 * inv_r
            rn = dx * nrm[t, 0] + dy * nrm[t, 1] + dz * nrm[t, 2]
            rl = dx * lam[s, 0] + dy * lam[s, 1] + dz * lam[s, 2]
            w = rn * rl * inv_r5
            u0 += w * dx
            u1 += w * dy
            u2 += w * dz
        out[t, 0] = u0
        out[t, 1] = u1
        out[t, 2] = u2


def _check_bad(bad, row_offset=0):
    hits = np.flatnonzero(bad >= 0)
    if hits.size:
        t = int(hits[0])
        raise SingularPairError(
            f"target {row_offset + t} coincides with source {int(bad[t])}",
            target_index=row_offset + t,
            source_index=int(bad[t]),
        )


class _threads:
    """Temporarily pin the numba thread count."""

    def __init__(self, count):
        self.count = count

    def __enter__(self):
        if self.count is not None:
            self.saved = numba.get_num_threads()
            numba.set_num_threads(min(self.count, numba.config.NUMBA_NUM_THREADS))
        return self

    def __exit__(self, *exc):
        if self.count is not None:
            numba.set_num_threads(self.saved)


def eval_field(kind, sources, strengths, targets, cfg=None, target_normals=None):
    """Sum the kernel field of all sources at all targets.

    ``strengths`` is the stacked strength vector (source-major, components
    innermost); the return value is stacked the same way over targets.
    Raises :class:`SingularPairError` with indices if any target coincides
    with a source.
    """
    cfg = cfg or EvaluatorConfig()
    src = np.ascontiguousarray(np.asarray(sources, dtype=float).reshape(-1, 3))
    tgt = np.ascontiguousarray(np.asarray(targets, dtype=float).reshape(-1, 3))
    strengths = np.asarray(strengths, dtype=float).ravel()
    if strengths.size != src.shape[0] * kind.source_dim:
        raise InvalidArgumentError(
            f"strength vector length {strengths.size} does not match "
            f"{src.shape[0]} sources of dimension {kind.source_dim}"
        )
    lam = np.ascontiguousarray(strengths.reshape(src.shape[0], kind.source_dim))

    if isinstance(kind, StokesTraction):
        if target_normals is None:
            raise InvalidArgumentError("traction evaluation requires target normals")
        target_normals = np.ascontiguousarray(
            np.asarray(target_normals, dtype=float).reshape(-1, 3)
        )
        if target_normals.shape[0] != tgt.shape[0]:
            raise InvalidArgumentError("need one unit normal per target")

    if kind.target_dim == 1:
        out = np.empty(tgt.shape[0])
    else:
        out = np.empty((tgt.shape[0], 3))

    tile = tgt.shape[0] if cfg.backend == "direct" else _ACCEL_TILE
    with _threads(cfg.thread_count):
        for lo in range(0, max(tgt.shape[0], 1), max(tile, 1)):
            hi = min(lo + tile, tgt.shape[0])
            if hi <= lo:
                break
            bad = np.full(hi - lo, -1, dtype=np.int64)
            block = np.ascontiguousarray(tgt[lo:hi])
            if isinstance(kind, LaplaceSingle):
                _laplace_sum(src, lam[:, 0], block, out[lo:hi], bad)
            elif isinstance(kind, Stokeslet):
                _stokeslet_sum(src, lam, block, out[lo:hi], bad)
            elif isinstance(kind, StokesPressure):
                _pressure_sum(src, lam, block, out[lo:hi], bad)
            elif isinstance(kind, StokesTraction):
                _traction_sum(src, lam, block,
                              np.ascontiguousarray(target_normals[lo:hi]),
                              out[lo:hi], bad)
            else:
                raise InvalidArgumentError(f"unsupported kernel kind {kind!r}")
            _check_bad(bad, row_offset=lo)

    if isinstance(kind, LaplaceSingle):
        out *= INV_4PI
    elif isinstance(kind, Stokeslet):
        out *= INV_8PI / kind.mu
    elif isinstance(kind, StokesPressure):
        out *= 2.0 * INV_8PI
    else:
        out *= -3.0 * INV_4PI
    return out.ravel()


def eval_with_self_correction(ctx, per_body_strengths, cfg=None):
    """Global field evaluation minus each body's dense self-contribution.

    Equals the off-diagonal-only block product: for each body the stored
    dense diagonal block applied to its own strengths is subtracted from
    the all-pairs sum.  Returns one surface-value vector per body.
    """
    cfg = cfg or ctx.evaluator_config
    stacked = np.concatenate([np.asarray(s, dtype=float).ravel() for s in per_body_strengths])
    values = eval_field(ctx.kernel_kind, ctx.proxy_points, stacked, ctx.collocation_points, cfg)
    out = []
    for k, strengths in enumerate(per_body_strengths):
        rows = ctx.row_slice(k)
        out.append(values[rows] - ctx.self_block_apply(k, np.asarray(strengths, dtype=float).ravel()))
    return out

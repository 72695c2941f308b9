"""One-body-preconditioned solvers for the four boundary-value problems.

Capacitance and resistance are Dirichlet problems: the per-body diagonal
blocks are the bare kernel blocks S^(kk).  Elastance and mobility use the
recompleted blocks S_L = S^(kk)(I - L) + L_r, where L projects strengths
onto constants (Laplace) or nodal rigid motions (Stokes) and L_r couples
the projected-out subspace back to the unknown body voltage or motion.
In all four cases the preconditioned square system has identity diagonal
blocks and off-diagonal blocks S^(kk') (I - L) S_L^+, applied matrix-free:
pseudoinverse per body, projection, one global kernel sum, then a dense
self-block correction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DomainError, InvalidArgumentError
from .evaluator import EvaluatorConfig, eval_field
from .geometry import Cluster, Ellipsoid, Particle, Sphere, make_particle
from .kernels import (
    LaplaceSingle,
    StokesPressure,
    Stokeslet,
    StokesTraction,
    assemble_block,
)
from .linalg import (
    MeanProjector,
    RigidProjector,
    apply_pinv,
    factorize,
    gmres,
    rigid_matrix,
    rotate_stacked,
)


class ProblemKind(str, Enum):
    CAPACITANCE = "capacitance"
    ELASTANCE = "elastance"
    RESISTANCE = "resistance"
    MOBILITY = "mobility"

    @property
    def is_stokes(self):
        return self in (ProblemKind.RESISTANCE, ProblemKind.MOBILITY)

    @property
    def is_projected(self):
        return self in (ProblemKind.ELASTANCE, ProblemKind.MOBILITY)

    @property
    def vec_dim(self):
        return 3 if self.is_stokes else 1

    @property
    def default_tolerance(self):
        return 1e-7 if self.is_stokes else 1e-8


@dataclass(frozen=True)
class RigidMotion:
    v: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float).reshape(3)
        w = np.asarray(self.omega, dtype=float).reshape(3)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w))):
            raise InvalidArgumentError("rigid motion must be finite")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "omega", w)

    def stacked(self):
        return np.concatenate([self.v, self.omega])


@dataclass(frozen=True)
class NetLoad:
    f: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float).reshape(3)
        t = np.asarray(self.t, dtype=float).reshape(3)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(t))):
            raise InvalidArgumentError("net load must be finite")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "t", t)

    def stacked(self):
        return np.concatenate([self.f, self.t])


@dataclass
class SolveReport:
    iterations: int
    residual_history: list
    converged: bool
    max_strength_magnitude: float
    wall_times: dict


@dataclass
class Solution:
    kind: ProblemKind
    cluster: Cluster
    mu: float
    strengths: list
    effective_strengths: list
    surface_values: list
    outputs: np.ndarray
    report: SolveReport

    def stacked_effective_strengths(self):
        return np.concatenate(self.effective_strengths)

    def motions(self):
        return [RigidMotion(row[:3], row[3:]) for row in self.outputs]

    def loads(self):
        return [NetLoad(row[:3], row[3:]) for row in self.outputs]


@dataclass
class _ShapeFactors:
    base_particle: Particle
    base_self: np.ndarray
    factor: object


@dataclass
class _Body:
    particle: Particle
    rows: slice
    cols: slice
    shape_data: _ShapeFactors
    rotation: np.ndarray
    scale: float
    K_M: object = None
    K_N: object = None
    proj: object = None


def _canonical_request(particle, kind):
    """Factor-sharing key and the canonical (unrotated) build request.

    Dirichlet blocks of spatially rescaled bodies are plain multiples of
    each other, so their key normalizes the size away; the recompleted
    blocks are not (the rigid coupling does not scale with the kernel), so
    elastance/mobility keys keep the actual size.
    """
    from . import geometry as _geo

    shape = particle.shape
    if isinstance(shape, Sphere):
        scale = shape.radius
        canon_shape = Sphere(1.0)
        shape_sig = ("sphere", _geo.SPHERE_NODE_STYLE)
    else:
        scale = shape.c
        canon_shape = Ellipsoid(shape.a / scale, shape.b / scale, 1.0)
        shape_sig = ("ellipsoid", round(shape.a / scale, 12), round(shape.b / scale, 12))
    if kind.is_projected:
        scale = 1.0
        canon_shape = shape
    key = shape_sig + (
        particle.node_request,
        round(particle.rectangularity, 12),
        round(particle.delta_sep / scale, 12),
        round(scale, 12) if kind.is_projected else None,
    )
    return key, canon_shape, particle.delta_sep / scale, scale


def _build_shape_factors(kind, canon_shape, canon_delta, particle, mu, trunc_eps):
    canon = make_particle(
        canon_shape,
        node_request=particle.node_request,
        delta_sep=canon_delta,
        rectangularity=particle.rectangularity,
    )
    kernel = Stokeslet(mu) if kind.is_stokes else LaplaceSingle()
    base_self = assemble_block(canon.collocation, canon.proxy, kernel)
    if not kind.is_projected:
        return _ShapeFactors(canon, base_self, factorize(base_self, trunc_eps))
    if kind.is_stokes:
        K_N = rigid_matrix(canon.proxy, canon.center)
        K_M = rigid_matrix(canon.collocation, canon.center)
        proj = RigidProjector(K_N)
        block = base_self - (base_self @ K_N.matrix) @ proj.solve_gram(K_N.matrix.T)
        block += K_M.matrix @ K_N.matrix.T
    else:
        n = canon.num_proxy
        ones_n = np.ones(n)
        block = base_self - np.outer(base_self @ ones_n, ones_n) / n
        block += 1.0 / n
    factor = factorize(block, trunc_eps, overwrite=True)
    del block
    return _ShapeFactors(canon, base_self, factor)


class BlockSystemContext:
    """Everything a preconditioned matvec closes over.

    Holds the cluster, one dense base block and SVD factor per unique shape
    signature (shared across congruent bodies through rotation, and across
    resized bodies for the Dirichlet problems), the per-body rigid matrices
    and projectors, and the evaluator configuration.
    """

    def __init__(self, cluster, kind, *, mu=1.0, trunc_eps=1e-14,
                 evaluator_config=None, factor_cache=None):
        kind = ProblemKind(kind)
        self.kind = kind
        self.mu = float(mu)
        self.trunc_eps = float(trunc_eps)
        self.cluster = cluster
        self.evaluator_config = evaluator_config or EvaluatorConfig()
        self.timings = {"assembly": 0.0, "factorization": 0.0}
        cache = factor_cache if factor_cache is not None else {}
        self.factorization_count = 0

        vd = kind.vec_dim
        bodies = []
        row_off = col_off = 0
        proxy_pts = []
        coll_pts = []
        for particle in cluster:
            key, canon_shape, canon_delta, scale = _canonical_request(particle, kind)
            key = key + ("stokes" if kind.is_stokes else "laplace",
                         kind.is_projected, round(self.mu, 12), round(trunc_eps, 16))
            data = cache.get(key)
            if data is None:
                t0 = time.perf_counter()
                data = _build_shape_factors(
                    kind, canon_shape, canon_delta, particle, self.mu, trunc_eps
                )
                self.timings["factorization"] += time.perf_counter() - t0
                self.factorization_count += 1
                cache[key] = data
            base = data.base_particle
            for own, ref in ((particle.collocation, base.collocation),
                             (particle.proxy, base.proxy)):
                if own.count != ref.count:
                    raise InvalidArgumentError(
                        "particle node sets do not match their generator signature"
                    )
                expected = (ref.points * scale) @ particle.rotation.T + particle.center
                if np.max(np.abs(own.points - expected)) > 1e-9 * max(1.0, scale):
                    raise InvalidArgumentError(
                        "particle node sets are not a rigid image of the "
                        "signature-generated grids; rebuild the particle with "
                        "make_particle/transform_particle"
                    )
            rows = slice(row_off, row_off + vd * particle.num_collocation)
            cols = slice(col_off, col_off + vd * particle.num_proxy)
            row_off, col_off = rows.stop, cols.stop
            body = _Body(
                particle=particle,
                rows=rows,
                cols=cols,
                shape_data=data,
                rotation=particle.rotation,
                scale=scale,
            )
            if kind.is_stokes:
                body.K_M = rigid_matrix(particle.collocation, particle.center)
                body.K_N = rigid_matrix(particle.proxy, particle.center)
                if kind.is_projected:
                    body.proj = RigidProjector(body.K_N)
            elif kind.is_projected:
                body.proj = MeanProjector(particle.num_proxy)
            bodies.append(body)
            proxy_pts.append(particle.proxy.points)
            coll_pts.append(particle.collocation.points)
        self.bodies = bodies
        self.proxy_points = np.vstack(proxy_pts)
        self.collocation_points = np.vstack(coll_pts)
        self.total_rows = row_off
        self.total_cols = col_off

    @property
    def kernel_kind(self):
        return Stokeslet(self.mu) if self.kind.is_stokes else LaplaceSingle()

    def row_slice(self, k):
        return self.bodies[k].rows

    def col_slice(self, k):
        return self.bodies[k].cols

    def pinv_apply(self, k, gamma_k):
        """Per-body pseudoinverse via the shared factor (rotation/scale aware)."""
        b = self.bodies[k]
        if self.kind.is_stokes:
            rhs = rotate_stacked(b.rotation.T, gamma_k)
            out = apply_pinv(b.shape_data.factor, rhs)
            return b.scale * rotate_stacked(b.rotation, out)
        return b.scale * apply_pinv(b.shape_data.factor, gamma_k)

    def self_block_apply(self, k, strengths_k):
        """Dense diagonal-block product S^(kk) . strengths."""
        b = self.bodies[k]
        if self.kind.is_stokes:
            local = rotate_stacked(b.rotation.T, strengths_k)
            return rotate_stacked(b.rotation, b.shape_data.base_self @ local) / b.scale
        return (b.shape_data.base_self @ strengths_k) / b.scale

    def project_complement(self, k, strengths_k):
        body = self.bodies[k]
        if body.proj is None:
            return strengths_k
        return body.proj.complement(strengths_k)


def build_context(cluster, kind, *, mu=1.0, trunc_eps=1e-14,
                  evaluator_config=None, factor_cache=None):
    return BlockSystemContext(
        cluster, kind, mu=mu, trunc_eps=trunc_eps,
        evaluator_config=evaluator_config, factor_cache=factor_cache,
    )


def completion_strengths(kind, loads, proxies):
    """Known per-body strength vectors carrying the prescribed net loads.

    Laplace: the constant vector q/N.  Stokes: the minimum-norm vector in
    the rigid subspace, K_N (K_N^T K_N)^{-1} [f; t], found by one 6x6 solve
    per body.
    """
    kind = ProblemKind(kind)
    out = []
    if not kind.is_stokes:
        for q, n in zip(loads, proxies):
            count = n if isinstance(n, (int, np.integer)) else n.count
            out.append(np.full(count, float(q) / count))
        return out
    import scipy.linalg

    from .errors import DegenerateGeometryError

    for load, K_N in zip(loads, proxies):
        ft = load.stacked() if isinstance(load, NetLoad) else np.asarray(load, dtype=float).reshape(6)
        try:
            cho = scipy.linalg.cho_factor(K_N.gram())
        except scipy.linalg.LinAlgError as exc:
            raise DegenerateGeometryError(f"rigid Gram matrix not SPD: {exc}") from exc
        out.append(K_N.apply(scipy.linalg.cho_solve(cho, ft)))
    return out


def preconditioned_matvec(ctx, gamma):
    """Apply the one-body-preconditioned square system matrix.

    Step 1: per-body pseudoinverse (and for elastance/mobility the
    projection to zero-net-load strengths).  Step 2: one global kernel sum
    from all sources to all collocation nodes.  Step 3: subtract each
    body's dense self-block product and add back the input, which realizes
    the identity diagonal.
    """
    gamma = np.asarray(gamma, dtype=float)
    beta = np.empty(ctx.total_cols)
    for k, b in enumerate(ctx.bodies):
        alpha = ctx.pinv_apply(k, gamma[b.rows])
        beta[b.cols] = ctx.project_complement(k, alpha)
    u = eval_field(ctx.kernel_kind, ctx.proxy_points, beta,
                   ctx.collocation_points, ctx.evaluator_config)
    for k, b in enumerate(ctx.bodies):
        u[b.rows] += gamma[b.rows] - ctx.self_block_apply(k, beta[b.cols])
    return u


def _completion_rhs(ctx, loads):
    """Right-hand side -u0 with u0 the full-field sum of completion strengths."""
    if ctx.kind.is_stokes:
        lam0 = completion_strengths(ctx.kind, loads, [b.K_N for b in ctx.bodies])
    else:
        lam0 = completion_strengths(ctx.kind, loads, [b.particle.num_proxy for b in ctx.bodies])
    u0 = eval_field(ctx.kernel_kind, ctx.proxy_points, np.concatenate(lam0),
                    ctx.collocation_points, ctx.evaluator_config)
    return -u0, lam0


def _run_gmres(ctx, rhs, tol, max_iters, wall):
    t0 = time.perf_counter()
    gamma, stats = gmres(lambda v: preconditioned_matvec(ctx, v), rhs,
                         rel_tol=tol, max_iters=max_iters)
    wall["gmres"] = time.perf_counter() - t0
    return gamma, stats


def _recover_strengths(ctx, gamma):
    return [ctx.pinv_apply(k, gamma[b.rows]) for k, b in enumerate(ctx.bodies)]


def _make_report(ctx, stats, strengths, wall):
    max_mag = max(float(np.max(np.abs(s))) if s.size else 0.0 for s in strengths)
    times = dict(ctx.timings)
    times.update(wall)
    return SolveReport(
        iterations=stats.iterations,
        residual_history=list(stats.residual_history),
        converged=stats.converged,
        max_strength_magnitude=max_mag,
        wall_times=times,
    )


def _context_for(cluster_or_ctx, kind, **kwargs):
    if isinstance(cluster_or_ctx, BlockSystemContext):
        ctx = cluster_or_ctx
        if ctx.kind != kind:
            raise InvalidArgumentError(
                f"context was built for {ctx.kind.value}, not {kind.value}"
            )
        return ctx
    return build_context(cluster_or_ctx, kind, **kwargs)


def solve_capacitance(cluster_or_ctx, voltages, tol=None, max_iters=300, **kwargs):
    """Given per-body constant voltages, find the net charges."""
    ctx = _context_for(cluster_or_ctx, ProblemKind.CAPACITANCE, **kwargs)
    voltages = np.asarray(voltages, dtype=float).reshape(len(ctx.bodies))
    tol = tol if tol is not None else ctx.kind.default_tolerance
    wall = {}
    t0 = time.perf_counter()
    rhs = np.concatenate(
        [np.full(b.particle.num_collocation, phi) for b, phi in zip(ctx.bodies, voltages)]
    )
    wall["rhs"] = time.perf_counter() - t0
    gamma, stats = _run_gmres(ctx, rhs, tol, max_iters, wall)
    t0 = time.perf_counter()
    strengths = _recover_strengths(ctx, gamma)
    charges = np.array([np.sum(s) for s in strengths])
    wall["recover"] = time.perf_counter() - t0
    return Solution(
        kind=ctx.kind, cluster=ctx.cluster, mu=ctx.mu,
        strengths=strengths, effective_strengths=strengths,
        surface_values=[gamma[b.rows] for b in ctx.bodies],
        outputs=charges, report=_make_report(ctx, stats, strengths, wall),
    )


def solve_elastance(cluster_or_ctx, charges, tol=None, max_iters=300, **kwargs):
    """Given per-body net charges, find the constant voltages."""
    ctx = _context_for(cluster_or_ctx, ProblemKind.ELASTANCE, **kwargs)
    charges = np.asarray(charges, dtype=float).reshape(len(ctx.bodies))
    tol = tol if tol is not None else ctx.kind.default_tolerance
    wall = {}
    t0 = time.perf_counter()
    rhs, alpha0 = _completion_rhs(ctx, charges)
    wall["rhs"] = time.perf_counter() - t0
    gamma, stats = _run_gmres(ctx, rhs, tol, max_iters, wall)
    t0 = time.perf_counter()
    strengths = _recover_strengths(ctx, gamma)
    voltages = np.array([-np.mean(s) for s in strengths])
    effective = [
        ctx.project_complement(k, s) + a0
        for k, (s, a0) in enumerate(zip(strengths, alpha0))
    ]
    wall["recover"] = time.perf_counter() - t0
    return Solution(
        kind=ctx.kind, cluster=ctx.cluster, mu=ctx.mu,
        strengths=strengths, effective_strengths=effective,
        surface_values=[gamma[b.rows] for b in ctx.bodies],
        outputs=voltages, report=_make_report(ctx, stats, strengths, wall),
    )


def _stack_six(values, count, label):
    if isinstance(values, np.ndarray):
        return values.reshape(count, 6).astype(float)
    rows = []
    for v in values:
        rows.append(v.stacked() if hasattr(v, "stacked") else np.asarray(v, dtype=float).reshape(6))
    arr = np.asarray(rows)
    if arr.shape != (count, 6):
        raise InvalidArgumentError(f"expected {count} {label} six-vectors")
    return arr


def solve_resistance(cluster_or_ctx, motions, tol=None, max_iters=300, **kwargs):
    """Given rigid-body motions, find the net forces and torques."""
    ctx = _context_for(cluster_or_ctx, ProblemKind.RESISTANCE, **kwargs)
    U = _stack_six(motions, len(ctx.bodies), "motion")
    tol = tol if tol is not None else ctx.kind.default_tolerance
    wall = {}
    t0 = time.perf_counter()
    rhs = np.concatenate([b.K_M.apply(u) for b, u in zip(ctx.bodies, U)])
    wall["rhs"] = time.perf_counter() - t0
    gamma, stats = _run_gmres(ctx, rhs, tol, max_iters, wall)
    t0 = time.perf_counter()
    strengths = _recover_strengths(ctx, gamma)
    loads = np.vstack([b.K_N.apply_transpose(s) for b, s in zip(ctx.bodies, strengths)])
    wall["recover"] = time.perf_counter() - t0
    return Solution(
        kind=ctx.kind, cluster=ctx.cluster, mu=ctx.mu,
        strengths=strengths, effective_strengths=strengths,
        surface_values=[gamma[b.rows] for b in ctx.bodies],
        outputs=loads, report=_make_report(ctx, stats, strengths, wall),
    )


def solve_mobility(cluster_or_ctx, loads, tol=None, max_iters=300, **kwargs):
    """Given net forces and torques, find the rigid-body motions."""
    ctx = _context_for(cluster_or_ctx, ProblemKind.MOBILITY, **kwargs)
    F = _stack_six(loads, len(ctx.bodies), "load")
    tol = tol if tol is not None else ctx.kind.default_tolerance
    wall = {}
    t0 = time.perf_counter()
    rhs, lam0 = _completion_rhs(ctx, F)
    wall["rhs"] = time.perf_counter() - t0
    gamma, stats = _run_gmres(ctx, rhs, tol, max_iters, wall)
    t0 = time.perf_counter()
    strengths = _recover_strengths(ctx, gamma)
    motions = np.vstack([-b.K_N.apply_transpose(s) for b, s in zip(ctx.bodies, strengths)])
    effective = [
        ctx.project_complement(k, s) + l0
        for k, (s, l0) in enumerate(zip(strengths, lam0))
    ]
    wall["recover"] = time.perf_counter() - t0
    return Solution(
        kind=ctx.kind, cluster=ctx.cluster, mu=ctx.mu,
        strengths=strengths, effective_strengths=effective,
        surface_values=[gamma[b.rows] for b in ctx.bodies],
        outputs=motions, report=_make_report(ctx, stats, strengths, wall),
    )


def solve(cluster_or_ctx, kind, data, tol=None, max_iters=300, **kwargs):
    """Dispatch to the solver for ``kind`` with its natural data vector."""
    kind = ProblemKind(kind)
    fn = {
        ProblemKind.CAPACITANCE: solve_capacitance,
        ProblemKind.ELASTANCE: solve_elastance,
        ProblemKind.RESISTANCE: solve_resistance,
        ProblemKind.MOBILITY: solve_mobility,
    }[kind]
    return fn(cluster_or_ctx, data, tol=tol, max_iters=max_iters, **kwargs)


def _check_exterior(solution, points, tolerance=-1e-9):
    pts = np.atleast_2d(points)
    for idx, particle in enumerate(solution.cluster):
        level = particle.implicit(pts)
        if np.min(level) < tolerance:
            inside = int(np.argmin(level))
            raise DomainError(
                f"evaluation point {inside} lies inside particle {idx}"
            )


def evaluate_solution(solution, points, want="auto", normals=None, cfg=None):
    """Evaluate the solved representation (including completion strengths).

    ``want`` is one of ``potential`` (Laplace), ``velocity``, ``pressure``,
    ``traction`` (Stokes; needs per-point unit normals), or ``auto`` which
    picks potential/velocity by problem type.  Points must be exterior to
    all particles, or on their surfaces for traction.
    """
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
    cfg = cfg or EvaluatorConfig()
    stacked = solution.stacked_effective_strengths()
    sources = np.vstack([p.proxy.points for p in solution.cluster])
    if want == "auto":
        want = "velocity" if solution.kind.is_stokes else "potential"
    if want == "potential":
        if solution.kind.is_stokes:
            raise InvalidArgumentError("potential is a Laplace quantity")
        _check_exterior(solution, pts)
        return eval_field(LaplaceSingle(), sources, stacked, pts, cfg)
    if solution.kind.is_stokes is False:
        raise InvalidArgumentError(f"{want} is a Stokes quantity")
    if want == "velocity":
        _check_exterior(solution, pts)
        return eval_field(Stokeslet(solution.mu), sources, stacked, pts, cfg)
    if want == "pressure":
        _check_exterior(solution, pts)
        return eval_field(StokesPressure(), sources, stacked, pts, cfg)
    if want == "traction":
        if normals is None:
            raise InvalidArgumentError("traction evaluation requires normals")
        return eval_field(StokesTraction(solution.mu), sources, stacked, pts, cfg,
                          target_normals=normals)
    raise InvalidArgumentError(f"unknown field request {want!r}")

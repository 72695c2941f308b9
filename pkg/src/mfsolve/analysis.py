"""Error metrics, convergence-study drivers, matrix extraction and rate theory."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .evaluator import EvaluatorConfig
from .geometry import (
    Cluster,
    grow_cluster,
    surface_test_points,
    with_delta_sep,
    with_node_request,
)
from .solvers import (
    ProblemKind,
    build_context,
    evaluate_solution,
    solve_capacitance,
    solve_elastance,
    solve_mobility,
    solve_resistance,
)


def r_acc(delta):
    """Image-series accumulation radius 1 + d/2 - sqrt(d + d^2/4).

    Controls the root-exponential MFS convergence rate for a sphere pair at
    surface separation d; strictly decreasing, 1 at contact, 0 at infinity.
    """
    if delta < 0:
        raise InvalidArgumentError("separation must be non-negative")
    return 1.0 + delta / 2.0 - math.sqrt(delta + delta * delta / 4.0)


@dataclass
class TwoWayResult:
    error: float
    motions: np.ndarray
    loads: np.ndarray
    resistance_iterations: int
    mobility_iterations: int
    converged: bool
    max_strength_mobility: float
    max_strength_resistance: float


def two_way_error(cluster, U_ref, *, tol=1e-7, max_iters=300, mu=1.0,
                  evaluator_config=None, delta_ratio=1.05, factor_cache=None):
    """Resistance then mobility in succession; the round-trip motion error.

    The mobility leg runs with proxy offsets scaled by ``delta_ratio``
    (default 1.05) so the two legs cannot cancel a shared discretization
    bias.  Returns the relative max-norm error together with both solves'
    iteration counts; ``converged=False`` flags an untrusted value.
    """
    U_ref = np.asarray(U_ref, dtype=float).reshape(len(cluster.particles), 6)
    scale = float(np.max(np.abs(U_ref)))
    if scale == 0.0:
        raise InvalidArgumentError("two-way error is undefined for zero reference motion")
    kwargs = dict(mu=mu, evaluator_config=evaluator_config, factor_cache=factor_cache)
    res = solve_resistance(cluster, U_ref, tol=tol, max_iters=max_iters, **kwargs)
    mob_cluster = Cluster(
        [with_delta_sep(p, delta_ratio * p.delta_sep) for p in cluster],
        cluster.min_separation,
    )
    mob = solve_mobility(mob_cluster, res.outputs, tol=tol, max_iters=max_iters, **kwargs)
    err = float(np.max(np.abs(mob.outputs - U_ref)) / scale)
    return TwoWayResult(
        error=err,
        motions=mob.outputs,
        loads=res.outputs,
        resistance_iterations=res.report.iterations,
        mobility_iterations=mob.report.iterations,
        converged=res.report.converged and mob.report.converged,
        max_strength_mobility=mob.report.max_strength_magnitude,
        max_strength_resistance=res.report.max_strength_magnitude,
    )


@dataclass
class SurfaceResidual:
    max_residual: float
    per_point: np.ndarray
    points: np.ndarray
    body_index: np.ndarray
    absolute_fallback: np.ndarray
    normalization: float

    @property
    def max_normalized(self):
        return self.max_residual / self.normalization if self.normalization else self.max_residual


def surface_residual(solution, multiplier=2.0, cfg=None):
    """Boundary-condition mismatch of a solved representation on dense test points.

    Stokes (mobility): pointwise ||u(x) - g(x)|| / ||g(x)|| with g the
    rigid-motion field of the computed velocities; points where ||g|| = 0
    are reported absolutely and flagged through ``absolute_fallback``.
    Laplace (elastance): absolute |u(x) - phi_k|, with ``normalization``
    set to max_k |phi_k| so ``max_normalized`` is the relative error.
    """
    cfg = cfg or EvaluatorConfig()
    pts_all, body_idx = [], []
    for k, particle in enumerate(solution.cluster):
        pts, _ = surface_test_points(particle, multiplier)
        pts_all.append(pts)
        body_idx.append(np.full(pts.shape[0], k))
    pts_all = np.vstack(pts_all)
    body_idx = np.concatenate(body_idx)

    if solution.kind.is_stokes:
        u = evaluate_solution(solution, pts_all, want="velocity", cfg=cfg).reshape(-1, 3)
        g = np.empty_like(u)
        for k, particle in enumerate(solution.cluster):
            rows = body_idx == k
            v, w = solution.outputs[k, :3], solution.outputs[k, 3:]
            g[rows] = v + np.cross(w, pts_all[rows] - particle.center)
        gnorm = np.linalg.norm(g, axis=1)
        diff = np.linalg.norm(u - g, axis=1)
        zero = gnorm == 0.0
        per_point = np.where(zero, diff, diff / np.where(zero, 1.0, gnorm))
        return SurfaceResidual(
            max_residual=float(np.max(per_point)),
            per_point=per_point,
            points=pts_all,
            body_index=body_idx,
            absolute_fallback=zero,
            normalization=1.0,
        )

    u = evaluate_solution(solution, pts_all, want="potential", cfg=cfg)
    phi = solution.outputs
    per_point = np.abs(u - phi[body_idx])
    norm = float(np.max(np.abs(phi)))
    return SurfaceResidual(
        max_residual=float(np.max(per_point)),
        per_point=per_point,
        points=pts_all,
        body_index=body_idx,
        absolute_fallback=np.zeros(per_point.size, dtype=bool),
        normalization=norm if norm > 0 else 1.0,
    )


@dataclass
class ExtractedMatrix:
    matrix: np.ndarray
    symmetry_error: float
    min_eigenvalue: float
    converged: bool


def extract_matrix(cluster, which, *, tol=None, mu=1.0, evaluator_config=None,
                   max_iters=300, factor_cache=None):
    """Dense capacitance (C), resistance (R) or mobility (M) matrix.

    Solves one BVP per unit column; a desk-scale verification tool, so the
    particle count is capped at 20.  Reports the relative asymmetry
    ||A - A^T||_F / ||A||_F and the smallest eigenvalue of the symmetrized
    matrix.
    """
    if len(cluster.particles) > 20:
        raise InvalidArgumentError("matrix extraction is limited to 20 particles")
    P = len(cluster.particles)
    which = which.upper()
    kind = {
        "C": ProblemKind.CAPACITANCE,
        "R": ProblemKind.RESISTANCE,
        "M": ProblemKind.MOBILITY,
    }.get(which)
    if kind is None:
        raise InvalidArgumentError("matrix name must be one of C, R, M")
    ctx = build_context(cluster, kind, mu=mu, evaluator_config=evaluator_config,
                        factor_cache=factor_cache)
    solver = {
        "C": solve_capacitance,
        "R": solve_resistance,
        "M": solve_mobility,
    }[which]
    dim = P if which == "C" else 6 * P
    A = np.empty((dim, dim))
    ok = True
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = 1.0
        data = e if which == "C" else e.reshape(P, 6)
        sol = solver(ctx, data, tol=tol, max_iters=max_iters)
        A[:, j] = np.asarray(sol.outputs).ravel()
        ok = ok and sol.report.converged
    sym = 0.5 * (A + A.T)
    denom = np.linalg.norm(A)
    return ExtractedMatrix(
        matrix=A,
        symmetry_error=float(np.linalg.norm(A - A.T) / denom) if denom else 0.0,
        min_eigenvalue=float(np.min(np.linalg.eigvalsh(sym))),
        converged=ok,
    )


@dataclass
class RateFit:
    intercept: float
    slope: float
    rate: float
    points_used: int
    warning: str | None = None


def fit_root_exponential(values, errors, floor=0.0):
    """Least-squares fit log(err) = a + b sqrt(n) over the decaying segment.

    Only the leading monotone-decay segment (in increasing n) is fitted;
    trailing non-decreasing points and points at or below ``floor`` are
    plateau artifacts and are excluded.  Returns the implied per-sqrt(n)
    rate exp(b); a degenerate data set yields ``rate=nan`` with a warning.
    """
    order = np.argsort(np.asarray(values, dtype=float))
    values = np.asarray(values, dtype=float)[order]
    errors = np.asarray(errors, dtype=float)[order]
    cut = len(errors)
    for i in range(1, len(errors)):
        if not (np.isfinite(errors[i]) and errors[i] < errors[i - 1]):
            cut = i
            break
    mask = np.zeros(len(errors), dtype=bool)
    mask[:cut] = True
    mask &= np.isfinite(errors) & (errors > max(floor, 0.0))
    if np.count_nonzero(mask) < 3:
        return RateFit(np.nan, np.nan, np.nan, int(np.count_nonzero(mask)),
                       warning="fewer than 3 usable points above the error floor")
    x = np.sqrt(values[mask])
    y = np.log(errors[mask])
    coeffs = np.polyfit(x, y, 1)
    b, a = float(coeffs[0]), float(coeffs[1])
    return RateFit(a, b, math.exp(b), int(np.count_nonzero(mask)))


@dataclass
class SweepRow:
    value: float
    iterations: int
    max_residual: float
    output_error: float
    max_strength: float
    seconds: float
    converged: bool
    extra: dict = field(default_factory=dict)


@dataclass
class ConvergenceRecord:
    variable: str
    rows: list
    residual_fit: RateFit | None = None
    output_fit: RateFit | None = None

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])


@dataclass
class SweepProblem:
    """Specification of one solver experiment to be repeated over a sweep."""

    kind: ProblemKind
    shape: object
    P: int
    delta: float
    node_request: int
    delta_sep: float
    seed: int = 0
    rectangularity: float | None = None
    data: object = "unit"
    tol: float | None = None
    max_iters: int = 300
    mu: float = 1.0
    evaluator: EvaluatorConfig = field(default_factory=EvaluatorConfig)
    test_multiplier: float = 2.0
    delta_ratio: float = 1.05
    orient: str = "random"
    policy: str = "grow"


def _problem_data(problem, P, rng):
    kind = ProblemKind(problem.kind)
    data = problem.data
    if isinstance(data, str):
        if data == "unit":
            return np.ones(P) if not kind.is_stokes else np.tile(
                np.array([0.0, 0.0, -1.0, 0.0, 0.0, 0.0]), (P, 1))
        if data == "alternating":
            if kind.is_stokes:
                raise InvalidArgumentError("alternating data is a Laplace generator")
            return np.array([4.0 * np.pi * (-1.0) ** k for k in range(P)])
        if data == "random":
            if kind.is_stokes:
                return rng.standard_normal((P, 6))
            return rng.standard_normal(P)
        raise InvalidArgumentError(f"unknown data generator {data!r}")
    return np.asarray(data, dtype=float)


def _grow(problem, P=None, delta=None, node_request=None, delta_sep=None):
    return grow_cluster(
        P if P is not None else problem.P,
        delta if delta is not None else problem.delta,
        problem.shape,
        node_request if node_request is not None else problem.node_request,
        delta_sep if delta_sep is not None else problem.delta_sep,
        rectangularity=problem.rectangularity,
        seed=problem.seed,
        orient=problem.orient,
        policy=problem.policy,
    )


def convergence_sweep(problem, variable, values, factor_cache=None):
    """Run the requested solver across a sweep and fit convergence rates.

    ``variable`` is one of N, Nv (resolution sweeps on a fixed cluster),
    delta_sep (proxy-offset sweep), delta or P (fresh clusters per value).
    Resolution sweeps report output errors against the finest sweep point
    and fit log(error) = a + b sqrt(N) on the pre-plateau segment.
    """
    values = list(values)
    if len(values) < 4:
        raise InvalidArgumentError("a sweep needs at least 4 points")
    arr = np.asarray(values, dtype=float)
    if not (np.all(np.diff(arr) > 0) or np.all(np.diff(arr) < 0)):
        raise InvalidArgumentError("sweep values must be strictly monotone")
    if variable not in ("N", "Nv", "delta_sep", "delta", "P"):
        raise InvalidArgumentError(f"unknown sweep variable {variable!r}")

    kind = ProblemKind(problem.kind)
    cache = factor_cache if factor_cache is not None else {}
    rng = np.random.default_rng(problem.seed)
    rows = []
    outputs = []

    base_cluster = None
    if variable in ("N", "Nv", "delta_sep"):
        base_cluster = _grow(problem)

    for value in values:
        if variable in ("N", "Nv"):
            parts = [with_node_request(p, int(value)) for p in base_cluster]
            cluster = Cluster(parts, base_cluster.min_separation)
        elif variable == "delta_sep":
            parts = [with_delta_sep(p, float(value)) for p in base_cluster]
            cluster = Cluster(parts, base_cluster.min_separation)
        elif variable == "delta":
            cluster = _grow(problem, delta=float(value))
        else:
            cluster = _grow(problem, P=int(value))

        P = len(cluster.particles)
        data = _problem_data(problem, P, rng)
        t0 = time.perf_counter()
        extra = {}
        if kind == ProblemKind.MOBILITY and variable in ("delta", "P"):
            # iteration/accuracy trend studies run the 2-way pair
            motions = data if data.ndim == 2 else rng.standard_normal((P, 6))
            result = two_way_error(
                cluster, motions, tol=problem.tol or kind.default_tolerance,
                max_iters=problem.max_iters, mu=problem.mu,
                evaluator_config=problem.evaluator,
                delta_ratio=problem.delta_ratio, factor_cache=cache,
            )
            seconds = time.perf_counter() - t0
            extra = {"resistance_iterations": result.resistance_iterations}
            rows.append(SweepRow(
                value=float(value), iterations=result.mobility_iterations,
                max_residual=np.nan, output_error=result.error,
                max_strength=result.max_strength_mobility,
                seconds=seconds, converged=result.converged, extra=extra,
            ))
            outputs.append(result.motions)
            continue

        solver = {
            ProblemKind.CAPACITANCE: solve_capacitance,
            ProblemKind.ELASTANCE: solve_elastance,
            ProblemKind.RESISTANCE: solve_resistance,
            ProblemKind.MOBILITY: solve_mobility,
        }[kind]
        sol = solver(cluster, data, tol=problem.tol, max_iters=problem.max_iters,
                     mu=problem.mu, evaluator_config=problem.evaluator,
                     factor_cache=cache)
        if kind.is_projected:
            res = surface_residual(sol, problem.test_multiplier, cfg=problem.evaluator)
            max_res = res.max_normalized
        else:
            max_res = np.nan
        seconds = time.perf_counter() - t0
        rows.append(SweepRow(
            value=float(value), iterations=sol.report.iterations,
            max_residual=float(max_res), output_error=np.nan,
            max_strength=sol.report.max_strength_magnitude,
            seconds=seconds, converged=sol.report.converged, extra=extra,
        ))
        outputs.append(np.asarray(sol.outputs, dtype=float))

    record = ConvergenceRecord(variable=variable, rows=rows)
    if variable in ("N", "Nv") and len(outputs) >= 2:
        finest = np.argmax(arr) if arr[-1] >= arr[0] else np.argmin(arr)
        ref = outputs[int(finest)]
        ref_scale = float(np.max(np.abs(ref))) or 1.0
        for row, out in zip(record.rows, outputs):
            row.output_error = float(np.max(np.abs(out - ref)) / ref_scale)
        record.rows[int(finest)].output_error = np.nan

        tol = problem.tol or kind.default_tolerance
        ns = [r.value for r in record.rows if np.isfinite(r.max_residual)]
        if variable == "Nv":
            # rates are quoted per sqrt(N); convert latitude counts to node counts
            ns_nodes = [len(c_p.proxy.points) for c_p in
                        (with_node_request(base_cluster.particles[0], int(v)) for v in ns)]
        else:
            ns_nodes = ns
        errs = [r.max_residual for r in record.rows if np.isfinite(r.max_residual)]
        if errs:
            record.residual_fit = fit_root_exponential(ns_nodes, errs, floor=10.0 * tol)
        mask = [(r.value, r.output_error) for r in record.rows if np.isfinite(r.output_error)]
        if mask:
            vals = [v for v, _ in mask]
            if variable == "Nv":
                vals = [len(with_node_request(base_cluster.particles[0], int(v)).proxy.points)
                        for v in vals]
            # output quantities decay at roughly twice the residual rate and
            # pass below the GMRES tolerance while still converging, so the
            # monotone-segment rule alone guards their fit
            record.output_fit = fit_root_exponential(
                vals, [e for _, e in mask], floor=0.0)
    return record

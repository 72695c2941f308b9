"""FastAPI service wrapping the solver package.

The service is stateless apart from a bounded factor cache keyed by shape
signature, so repeated solves over congruent geometries skip the one-body
SVD.  Domain validation errors map to 422, placement and numerical
failures to 500; a solver that ran but did not converge still returns 200
with ``report.converged=false``.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..analysis import SweepProblem, convergence_sweep, surface_residual
from ..errors import (
    DegenerateGeometryError,
    DomainError,
    InvalidArgumentError,
    MfsolveError,
    OverlapError,
    PointSetFormatError,
    SingularPairError,
)
from ..geometry import cluster_pair_distances, surface_test_points, validate_cluster
from ..solvers import ProblemKind, build_context, evaluate_solution, solve
from . import schemas

_CACHE_LIMIT = 6


def _solver_kwargs(req):
    return dict(
        mu=req.solver.mu,
        trunc_eps=req.solver.trunc_eps,
        evaluator_config=req.evaluator.to_config(),
    )


def create_app():
    app = FastAPI(title="mfsolve", version=__version__)
    app.state.factor_cache = {}

    def cache():
        if len(app.state.factor_cache) > _CACHE_LIMIT:
            app.state.factor_cache.clear()
        return app.state.factor_cache

    @app.exception_handler(MfsolveError)
    async def _domain_error(request: Request, exc: MfsolveError):
        config_errors = (
            InvalidArgumentError,
            PointSetFormatError,
            OverlapError,
            DegenerateGeometryError,
            DomainError,
            SingularPairError,
        )
        status = 422 if isinstance(exc, config_errors) else 500
        return JSONResponse(
            status_code=status,
            content={"detail": str(exc), "error": type(exc).__name__},
        )

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/cluster", response_model=schemas.ClusterResponse)
    def make_cluster(req: schemas.GrowSpec):
        cluster = req.to_cluster()
        validate_cluster(cluster, grown=(req.policy == "grow" and req.P > 1))
        dmin = None
        if req.P > 1:
            dmin = float(np.min(cluster_pair_distances(cluster)))
        return schemas.ClusterResponse(
            cluster=schemas.ClusterModel.from_cluster(cluster),
            min_pair_distance=dmin,
        )

    @app.post("/solve", response_model=schemas.SolveResponse)
    def run_solve(req: schemas.SolveRequest):
        cluster = req.geometry.to_cluster()
        kind = ProblemKind(req.problem)
        ctx = build_context(cluster, kind, factor_cache=cache(), **_solver_kwargs(req))
        data = req.data.resolve(kind, len(cluster.particles))
        sol = solve(ctx, kind, data, tol=req.solver.tol, max_iters=req.solver.max_iters)
        outputs = np.asarray(sol.outputs, dtype=float).tolist()
        response = schemas.SolveResponse(
            problem=kind.value,
            outputs=outputs,
            report=schemas.ReportModel(
                iterations=sol.report.iterations,
                residual_history=list(map(float, sol.report.residual_history)),
                converged=sol.report.converged,
                max_strength_magnitude=sol.report.max_strength_magnitude,
                wall_times=sol.report.wall_times,
            ),
        )
        if req.include_solution:
            response.solution = schemas.SolutionModel.from_solution(sol)
        return response

    @app.post("/convergence", response_model=schemas.ConvergenceResponse)
    def run_convergence(req: schemas.ConvergenceRequest):
        grow = req.grow
        problem = SweepProblem(
            kind=ProblemKind(req.problem),
            shape=grow.shape.to_shape(),
            P=grow.P,
            delta=grow.delta,
            node_request=grow.nodes,
            delta_sep=grow.resolved_delta_sep(),
            seed=grow.seed,
            rectangularity=grow.rectangularity,
            data=req.data.generator or np.asarray(req.data.values, dtype=float),
            tol=req.solver.tol,
            max_iters=req.solver.max_iters,
            mu=req.solver.mu,
            evaluator=req.evaluator.to_config(),
            test_multiplier=req.test_multiplier,
            delta_ratio=req.delta_ratio,
            orient=grow.orient,
            policy=grow.policy,
        )
        record = convergence_sweep(problem, req.sweep.variable, req.sweep.values,
                                   factor_cache=cache())

        def fit_model(fit):
            if fit is None or not np.isfinite(fit.rate):
                if fit is not None and fit.warning:
                    return schemas.RateFitModel(
                        slope=float("nan"), rate=float("nan"),
                        points_used=fit.points_used, warning=fit.warning)
                return None
            return schemas.RateFitModel(
                slope=fit.slope, rate=fit.rate, points_used=fit.points_used,
                warning=fit.warning)

        def row_model(r):
            return schemas.SweepRowModel(
                value=r.value, iterations=r.iterations,
                max_residual=None if not np.isfinite(r.max_residual) else r.max_residual,
                output_error=None if not np.isfinite(r.output_error) else r.output_error,
                max_strength=r.max_strength, seconds=r.seconds,
                converged=r.converged, extra=r.extra,
            )

        return schemas.ConvergenceResponse(
            variable=record.variable,
            rows=[row_model(r) for r in record.rows],
            residual_fit=fit_model(record.residual_fit),
            output_fit=fit_model(record.output_fit),
        )

    @app.post("/eval-field", response_model=schemas.EvalFieldResponse)
    def run_eval_field(req: schemas.EvalFieldRequest):
        sol = req.solution.to_solution()
        cfg = req.evaluator.to_config()
        want = req.want
        if want == "auto":
            want = "velocity" if sol.kind.is_stokes else "potential"
        spec = req.targets

        body_idx = None
        normals = None
        if spec.surface is not None:
            multiplier = float(spec.surface.get("multiplier", 2.0))
            pts, nrm, idx = [], [], []
            for k, particle in enumerate(sol.cluster):
                p, n = surface_test_points(particle, multiplier)
                pts.append(p)
                nrm.append(n)
                idx.append(np.full(p.shape[0], k))
            points = np.vstack(pts) if pts else np.zeros((0, 3))
            normals = np.vstack(nrm) if nrm else np.zeros((0, 3))
            body_idx = np.concatenate(idx) if idx else np.zeros(0, dtype=int)
        elif spec.line is not None:
            start = np.asarray(spec.line["start"], dtype=float)
            end = np.asarray(spec.line["end"], dtype=float)
            count = int(spec.line["count"])
            frac = np.linspace(0.0, 1.0, count)[:, None]
            points = start + frac * (end - start)
        elif spec.plane is not None:
            origin = np.asarray(spec.plane["origin"], dtype=float)
            u = np.asarray(spec.plane["u"], dtype=float)
            v = np.asarray(spec.plane["v"], dtype=float)
            nu, nv = int(spec.plane["nu"]), int(spec.plane["nv"])
            su = np.linspace(0.0, 1.0, nu)
            sv = np.linspace(0.0, 1.0, nv)
            points = np.array([origin + a * u + b * v for a in su for b in sv])
        else:
            points = np.asarray(spec.points, dtype=float).reshape(-1, 3)

        if want == "traction" and normals is None:
            raise InvalidArgumentError("traction output needs surface targets")

        n_pts = points.shape[0]
        comp_names = {
            "potential": ["u"],
            "pressure": ["p"],
            "velocity": ["ux", "uy", "uz"],
            "traction": ["tx", "ty", "tz"],
        }[want]
        columns = ["x", "y", "z", "body", "inside"] + comp_names
        if spec.surface is not None and want in ("potential", "velocity"):
            columns.append("boundary_mismatch")
        if n_pts == 0:
            return schemas.EvalFieldResponse(columns=columns, rows=[])

        inside = np.zeros(n_pts, dtype=bool)
        on_body = np.full(n_pts, -1, dtype=int)
        for k, particle in enumerate(sol.cluster):
            level = particle.implicit(points)
            inside |= level < -1e-9
            if body_idx is None:
                on_body[np.abs(level) < 1e-9] = k
        if body_idx is not None:
            on_body = body_idx

        ncomp = len(comp_names)
        values = np.full((n_pts, ncomp), np.nan)
        keep = ~inside
        if np.any(keep):
            out = evaluate_solution(
                sol, points[keep], want=want, cfg=cfg,
                normals=None if normals is None else normals[keep],
            )
            values[keep] = out.reshape(-1, ncomp)

        rows = []
        mismatch = None
        if spec.surface is not None and want in ("potential", "velocity"):
            mismatch = np.full(n_pts, np.nan)
            if want == "potential":
                mismatch[keep] = np.abs(values[keep, 0] - sol.outputs[on_body[keep]])
            else:
                for k, particle in enumerate(sol.cluster):
                    rows_k = keep & (on_body == k)
                    if not np.any(rows_k):
                        continue
                    vw = sol.outputs[k]
                    g = vw[:3] + np.cross(vw[3:], points[rows_k] - particle.center)
                    diff = np.linalg.norm(values[rows_k] - g, axis=1)
                    gn = np.linalg.norm(g, axis=1)
                    mismatch[rows_k] = diff / np.where(gn == 0, 1.0, gn)
        for i in range(n_pts):
            row = [float(points[i, 0]), float(points[i, 1]), float(points[i, 2]),
                   float(on_body[i]), float(inside[i])]
            row.extend(float(v) for v in values[i])
            if mismatch is not None:
                row.append(float(mismatch[i]))
            rows.append(row)
        return schemas.EvalFieldResponse(columns=columns, rows=rows)

    return app


app = create_app()

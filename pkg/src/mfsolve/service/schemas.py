"""Pydantic request/response models for the solver service."""

from __future__ import annotations

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from .. import io as mfio
from ..errors import InvalidArgumentError
from ..evaluator import EvaluatorConfig
from ..geometry import Ellipsoid, Sphere, grow_cluster
from ..solvers import ProblemKind


class ShapeModel(BaseModel):
    kind: Literal["sphere", "ellipsoid"]
    radius: Optional[float] = None
    a: Optional[float] = None
    b: Optional[float] = None
    c: Optional[float] = None

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "sphere" and self.radius is None:
            raise ValueError("sphere needs a radius")
        if self.kind == "ellipsoid" and None in (self.a, self.b, self.c):
            raise ValueError("ellipsoid needs semiaxes a, b, c")
        return self

    def to_shape(self):
        if self.kind == "sphere":
            return Sphere(self.radius)
        return Ellipsoid(self.a, self.b, self.c)

    @classmethod
    def from_shape(cls, shape):
        if isinstance(shape, Sphere):
            return cls(kind="sphere", radius=shape.radius)
        return cls(kind="ellipsoid", a=shape.a, b=shape.b, c=shape.c)


class ParticleModel(BaseModel):
    shape: ShapeModel
    center: list[float] = Field(default_factory=lambda: [0.0, 0.0, 0.0])
    rotation_quaternion: list[float] = Field(default_factory=lambda: [1.0, 0.0, 0.0, 0.0])
    nodes: int
    delta_sep: float
    rectangularity: Optional[float] = None


class ClusterModel(BaseModel):
    min_separation: float = 0.0
    particles: list[ParticleModel]

    def to_cluster(self):
        return mfio.cluster_from_dict(self.model_dump())

    @classmethod
    def from_cluster(cls, cluster):
        return cls(**mfio.cluster_to_dict(cluster))


class GrowSpec(BaseModel):
    P: int
    delta: float
    shape: ShapeModel
    nodes: int
    delta_sep: Optional[float] = None
    proxy_radius: Optional[float] = None
    rectangularity: Optional[float] = None
    seed: int = 0
    orient: Literal["random", "fixed"] = "random"
    policy: Literal["grow", "enclosing-spheres"] = "grow"

    def resolved_delta_sep(self):
        if (self.delta_sep is None) == (self.proxy_radius is None):
            raise InvalidArgumentError("give exactly one of delta_sep or proxy_radius")
        if self.delta_sep is not None:
            return self.delta_sep
        if self.shape.kind != "sphere":
            raise InvalidArgumentError("proxy_radius shorthand applies to spheres only")
        return self.shape.radius - self.proxy_radius

    def to_cluster(self):
        return grow_cluster(
            self.P, self.delta, self.shape.to_shape(), self.nodes,
            self.resolved_delta_sep(), rectangularity=self.rectangularity,
            seed=self.seed, orient=self.orient, policy=self.policy,
        )


class BoundaryData(BaseModel):
    """Per-body data: explicit values, or a named generator.

    ``values`` holds scalars (Laplace) or six-vectors [f, t] / [v, w]
    (Stokes).  Generators: ``gravity`` (force (0,0,-scale) per body),
    ``unit`` (unit charges / unit z-forces), ``random`` (seeded standard
    normals times scale).
    """

    values: Optional[list] = None
    generator: Optional[Literal["gravity", "unit", "random"]] = None
    seed: int = 0
    scale: float = 1.0

    @model_validator(mode="after")
    def _check(self):
        if (self.values is None) == (self.generator is None):
            raise ValueError("give exactly one of values or generator")
        return self

    def resolve(self, kind, P):
        kind = ProblemKind(kind)
        if self.values is not None:
            arr = np.asarray(self.values, dtype=float)
            expect = (P, 6) if kind.is_stokes else (P,)
            if arr.shape != expect:
                raise InvalidArgumentError(
                    f"boundary data has shape {arr.shape}, expected {expect}"
                )
            return arr
        rng = np.random.default_rng(self.seed)
        if self.generator == "random":
            shape = (P, 6) if kind.is_stokes else (P,)
            return self.scale * rng.standard_normal(shape)
        if self.generator == "gravity":
            if not kind.is_stokes:
                raise InvalidArgumentError("gravity data applies to Stokes problems")
            row = np.array([0.0, 0.0, -self.scale, 0.0, 0.0, 0.0])
            return np.tile(row, (P, 1))
        if kind.is_stokes:
            return np.tile(np.array([0.0, 0.0, self.scale, 0.0, 0.0, 0.0]), (P, 1))
        return np.full(P, self.scale)


class SolverModel(BaseModel):
    tol: Optional[float] = None
    max_iters: int = 300
    trunc_eps: float = 1e-14
    mu: float = 1.0


class EvaluatorModel(BaseModel):
    backend: Literal["direct", "accelerated"] = "direct"
    tolerance: Optional[float] = None
    threads: Optional[int] = None

    def to_config(self):
        return EvaluatorConfig(
            backend=self.backend, tolerance=self.tolerance, thread_count=self.threads
        )


class GeometrySource(BaseModel):
    cluster: Optional[ClusterModel] = None
    grow: Optional[GrowSpec] = None

    @model_validator(mode="after")
    def _check(self):
        if (self.cluster is None) == (self.grow is None):
            raise ValueError("give exactly one of cluster or grow")
        return self

    def to_cluster(self):
        if self.cluster is not None:
            return self.cluster.to_cluster()
        return self.grow.to_cluster()


class SolveRequest(BaseModel):
    problem: Literal["capacitance", "elastance", "resistance", "mobility"]
    geometry: GeometrySource
    data: BoundaryData
    solver: SolverModel = Field(default_factory=SolverModel)
    evaluator: EvaluatorModel = Field(default_factory=EvaluatorModel)
    include_solution: bool = True


class ReportModel(BaseModel):
    iterations: int
    residual_history: list[float]
    converged: bool
    max_strength_magnitude: float
    wall_times: dict[str, float]


class SolutionModel(BaseModel):
    problem: str
    mu: float
    cluster: ClusterModel
    outputs: list
    effective_strengths: list[list[float]]
    report: ReportModel

    def to_solution(self):
        return mfio.solution_from_dict(self.model_dump())

    @classmethod
    def from_solution(cls, solution):
        return cls(**mfio.solution_to_dict(solution))


class SolveResponse(BaseModel):
    problem: str
    outputs: list
    report: ReportModel
    solution: Optional[SolutionModel] = None


class ClusterResponse(BaseModel):
    cluster: ClusterModel
    min_pair_distance: Optional[float] = None


class SweepSpec(BaseModel):
    variable: Literal["N", "Nv", "delta_sep", "delta", "P"]
    values: list[float]


class ConvergenceRequest(BaseModel):
    problem: Literal["capacitance", "elastance", "resistance", "mobility"]
    grow: GrowSpec
    data: BoundaryData
    sweep: SweepSpec
    solver: SolverModel = Field(default_factory=SolverModel)
    evaluator: EvaluatorModel = Field(default_factory=EvaluatorModel)
    test_multiplier: float = 2.0
    delta_ratio: float = 1.05


class SweepRowModel(BaseModel):
    value: float
    iterations: int
    max_residual: Optional[float] = None
    output_error: Optional[float] = None
    max_strength: float
    seconds: float
    converged: bool
    extra: dict = Field(default_factory=dict)


class RateFitModel(BaseModel):
    slope: float
    rate: float
    points_used: int
    warning: Optional[str] = None


class ConvergenceResponse(BaseModel):
    variable: str
    rows: list[SweepRowModel]
    residual_fit: Optional[RateFitModel] = None
    output_fit: Optional[RateFitModel] = None


class TargetSpec(BaseModel):
    """Evaluation targets: explicit points, surface test grids, or probes."""

    points: Optional[list[list[float]]] = None
    surface: Optional[dict] = None
    line: Optional[dict] = None
    plane: Optional[dict] = None

    @model_validator(mode="after")
    def _check(self):
        given = [v is not None for v in (self.points, self.surface, self.line, self.plane)]
        if sum(given) != 1:
            raise ValueError("give exactly one of points, surface, line, plane")
        return self


class EvalFieldRequest(BaseModel):
    solution: SolutionModel
    targets: TargetSpec
    want: Literal["auto", "potential", "velocity", "pressure", "traction"] = "auto"
    evaluator: EvaluatorModel = Field(default_factory=EvaluatorModel)


class EvalFieldResponse(BaseModel):
    columns: list[str]
    rows: list[list[float]]

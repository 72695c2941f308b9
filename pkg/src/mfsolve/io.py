"""Structured-text file formats: cluster documents, solution files, CSV export.

Cluster and solution documents are JSON with sorted keys and shortest
round-trip float representation, so identical inputs produce byte-identical
files.  Node sets are not stored: a particle record carries the generator
request (shape, nodes, delta_sep, rectangularity, pose) and the reader
regenerates the grids deterministically.
"""

from __future__ import annotations

import json

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import InvalidArgumentError
from .geometry import Cluster, Ellipsoid, Sphere, make_particle
from .solvers import ProblemKind, Solution, SolveReport


def rotation_to_quaternion(matrix):
    """Scalar-first unit quaternion [w, x, y, z] for a rotation matrix."""
    q = Rotation.from_matrix(np.asarray(matrix, dtype=float)).as_quat()
    return [float(q[3]), float(q[0]), float(q[1]), float(q[2])]


def quaternion_to_rotation(q):
    q = np.asarray(q, dtype=float).reshape(4)
    return Rotation.from_quat([q[1], q[2], q[3], q[0]]).as_matrix()


def shape_to_dict(shape):
    if isinstance(shape, Sphere):
        return {"kind": "sphere", "radius": shape.radius}
    return {"kind": "ellipsoid", "a": shape.a, "b": shape.b, "c": shape.c}


def shape_from_dict(doc):
    kind = doc.get("kind")
    if kind == "sphere":
        return Sphere(float(doc["radius"]))
    if kind == "ellipsoid":
        return Ellipsoid(float(doc["a"]), float(doc["b"]), float(doc["c"]))
    raise InvalidArgumentError(f"unknown shape kind {kind!r}")


def particle_to_dict(particle):
    return {
        "shape": shape_to_dict(particle.shape),
        "center": [float(v) for v in particle.center],
        "rotation_quaternion": rotation_to_quaternion(particle.rotation),
        "nodes": int(particle.node_request),
        "delta_sep": float(particle.delta_sep),
        "rectangularity": float(particle.rectangularity),
    }


def particle_from_dict(doc):
    return make_particle(
        shape_from_dict(doc["shape"]),
        center=np.asarray(doc["center"], dtype=float),
        rotation=quaternion_to_rotation(doc["rotation_quaternion"]),
        node_request=int(doc["nodes"]),
        delta_sep=float(doc["delta_sep"]),
        rectangularity=doc.get("rectangularity"),
    )


def cluster_to_dict(cluster):
    return {
        "min_separation": float(cluster.min_separation),
        "particles": [particle_to_dict(p) for p in cluster.particles],
    }


def cluster_from_dict(doc):
    particles = [particle_from_dict(p) for p in doc["particles"]]
    return Cluster(particles, float(doc.get("min_separation", 0.0)))


def report_to_dict(report):
    return {
        "iterations": int(report.iterations),
        "residual_history": [float(v) for v in report.residual_history],
        "converged": bool(report.converged),
        "max_strength_magnitude": float(report.max_strength_magnitude),
        "wall_times": {k: float(v) for k, v in report.wall_times.items()},
    }


def report_from_dict(doc):
    return SolveReport(
        iterations=int(doc["iterations"]),
        residual_history=[float(v) for v in doc["residual_history"]],
        converged=bool(doc["converged"]),
        max_strength_magnitude=float(doc["max_strength_magnitude"]),
        wall_times=dict(doc.get("wall_times", {})),
    )


def solution_to_dict(solution):
    outputs = np.asarray(solution.outputs, dtype=float)
    return {
        "problem": solution.kind.value,
        "mu": float(solution.mu),
        "cluster": cluster_to_dict(solution.cluster),
        "outputs": outputs.tolist(),
        "effective_strengths": [s.tolist() for s in solution.effective_strengths],
        "report": report_to_dict(solution.report),
    }


def solution_from_dict(doc):
    cluster = cluster_from_dict(doc["cluster"])
    effective = [np.asarray(s, dtype=float) for s in doc["effective_strengths"]]
    return Solution(
        kind=ProblemKind(doc["problem"]),
        cluster=cluster,
        mu=float(doc.get("mu", 1.0)),
        strengths=effective,
        effective_strengths=effective,
        surface_values=[],
        outputs=np.asarray(doc["outputs"], dtype=float),
        report=report_from_dict(doc["report"]),
    )


def dump_json(doc, path):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def save_cluster(cluster, path):
    dump_json(cluster_to_dict(cluster), path)


def load_cluster(path):
    return cluster_from_dict(load_json(path))


def save_solution(solution, path):
    dump_json(solution_to_dict(solution), path)


def load_solution(path):
    return solution_from_dict(load_json(path))


def format_float(value):
    """17 significant digits: lossless double round-trip."""
    return f"{value:.17g}"


def write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                format_float(v) if isinstance(v, float) else str(v) for v in row
            ) + "\n")


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = []
        for line in fh:
            line = line.strip()
            if line:
                rows.append(line.split(","))
    return header, rows

"""Particle shapes, quasi-uniform surface grids, rigid transforms and clusters.

Every particle carries two node sets: collocation nodes on the physical
surface (M points, where boundary data is matched) and proxy nodes on an
inner surface offset a distance ``delta_sep`` inward along the outward
normal (N points, carrying the fundamental-solution sources).  M > N always.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DegenerateGeometryError,
    InvalidArgumentError,
    OverlapError,
    PlacementError,
    PointSetFormatError,
)

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0

# Ring-count rule for the ellipsoid grid: per-ring trapezoid counts are
# proportional to the local circle radius sqrt(1-t^2), capped near 0.75*Nv.
# The constants track the empirical node-count law N ~ 17 + 3.9*Nv + 0.44*Nv^2
# for Nv in the practical range (~25-60).
_RING_SLOPE = 0.69
_RING_OFFSET = 6.1
_RING_CAP_FRACTION = 0.75


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise InvalidArgumentError("sphere radius must be positive")

    @property
    def bounding_radius(self):
        return self.radius

    @property
    def min_curvature_radius(self):
        return self.radius


@dataclass(frozen=True)
class Ellipsoid:
    """Triaxial ellipsoid in body frame, c along the symmetry-breaking axis."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise InvalidArgumentError("ellipsoid semiaxes must be positive")

    @property
    def semiaxes(self):
        return np.array([self.a, self.b, self.c])

    @property
    def bounding_radius(self):
        return max(self.a, self.b, self.c)

    @property
    def min_curvature_radius(self):
        # Tightest principal radius of curvature over the surface; the
        # inward-offset surface self-intersects past this distance.
        s = sorted([self.a, self.b, self.c])
        return s[0] ** 2 / s[2]


Shape = Sphere | Ellipsoid


@dataclass(frozen=True)
class NodeSet:
    """An ordered set of 3D points, stored as an (n, 3) float array."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidArgumentError("node set must have shape (n, 3)")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("node coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class Particle:
    """A rigid particle with its pose and both MFS node sets.

    ``node_request`` records the discretization request (N for spheres,
    Nv for ellipsoids) so congruent particles can be identified and the
    particle can be serialized compactly.
    """

    shape: Shape
    center: np.ndarray
    rotation: np.ndarray
    collocation: NodeSet
    proxy: NodeSet
    delta_sep: float
    node_request: int
    rectangularity: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(3)
        rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        center.setflags(write=False)
        rotation.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "rotation", rotation)
        if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > 1e-12:
            raise InvalidArgumentError("rotation matrix is not orthogonal to 1e-12")
        if self.collocation.count <= self.proxy.count:
            raise InvalidArgumentError("particle requires M > N")
        level = self.implicit(self.collocation.points)
        if np.max(np.abs(level)) > 1e-10:
            raise InvalidArgumentError("collocation nodes are not on the surface")
        if np.max(self.implicit(self.proxy.points)) >= 0.0:
            raise InvalidArgumentError("proxy nodes must lie strictly inside the surface")

    @property
    def num_collocation(self):
        return self.collocation.count

    @property
    def num_proxy(self):
        return self.proxy.count

    def body_frame(self, points):
        """Map world points into the particle's body frame."""
        return (np.atleast_2d(points) - self.center) @ self.rotation

    def implicit(self, points):
        """Level-set values: negative inside, 0 on surface, positive outside."""
        local = self.body_frame(points)
        if isinstance(self.shape, Sphere):
            return np.linalg.norm(local, axis=1) / self.shape.radius - 1.0
        return np.einsum("ij,ij->i", local / self.shape.semiaxes, local / self.shape.semiaxes) - 1.0

    def contains(self, points):
        return self.implicit(points) < 0.0


@dataclass(frozen=True)
class Cluster:
    particles: tuple
    min_separation: float

    def __post_init__(self):
        object.__setattr__(self, "particles", tuple(self.particles))

    def __len__(self):
        return len(self.particles)

    def __iter__(self):
        return iter(self.particles)


def fibonacci_sphere_nodes(n, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Quasi-uniform points on a sphere via the offset Fibonacci lattice.

    Latitudes are midpoint-uniform in z and longitudes advance by the
    golden angle, giving a nearest-neighbor spacing ratio below 2.
    """
    if n < 4:
        raise InvalidArgumentError(f"need at least 4 sphere nodes, got {n}")
    if radius <= 0:
        raise InvalidArgumentError("radius must be positive")
    pts = _fibonacci_unit(n)
    return NodeSet(pts * radius + np.asarray(center, dtype=float))


def _fibonacci_unit(n):
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    theta = 2.0 * np.pi * i / GOLDEN_RATIO
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.column_stack([rho * np.cos(theta), rho * np.sin(theta), z])


_relaxed_cache = {}


def relaxed_sphere_nodes(n, radius=1.0, center=(0.0, 0.0, 0.0), iterations=200):
    """Fibonacci lattice refined by tangential Coulomb-energy descent.

    Even counts are built as exact antipodal pairs (mirror-constrained
    descent), matching the symmetry of spherical-design node sets; odd
    counts add one pole point.  Deterministic, cached per count.
    """
    if n < 4:
        raise InvalidArgumentError(f"need at least 4 sphere nodes, got {n}")
    if radius <= 0:
        raise InvalidArgumentError("radius must be positive")
    key = (n, iterations)
    pts = _relaxed_cache.get(key)
    if pts is None:
        pts = _relax_unit_sphere(n, iterations)
        _relaxed_cache[key] = pts
    return NodeSet(pts * radius + np.asarray(center, dtype=float))


def _relax_unit_sphere(n, iterations):
    h = n // 2
    m = n if n % 2 == 0 else n + 1
    i = np.arange(h)
    z = 1.0 - (2.0 * i + 1.0) / m
    theta = 2.0 * np.pi * i / GOLDEN_RATIO
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    upper = np.column_stack([rho * np.cos(theta), rho * np.sin(theta), z])
    pole = np.array([[0.0, 0.0, 1.0]]) if n % 2 else None
    step = 1.5 / math.sqrt(n)
    for t in range(iterations):
        pts = np.vstack([pole, upper, -upper]) if pole is not None else np.vstack([upper, -upper])
        d = upper[:, None, :] - pts[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", d, d)
        r2[r2 < 1e-14] = np.inf
        f = np.einsum("ij,ijk->ik", r2**-1.5, d)
        f -= np.einsum("ik,ik->i", f, upper)[:, None] * upper
        fmax = np.linalg.norm(f, axis=1).max()
        if fmax == 0.0:
            break
        upper = upper + (step * 0.985**t) * f / fmax
        upper /= np.linalg.norm(upper, axis=1, keepdims=True)
    if pole is not None:
        return np.vstack([pole, upper, -upper])
    return np.vstack([upper, -upper])


def load_point_set(path, radius=1.0, center=(0.0, 0.0, 0.0)):
    """Read unit-sphere points from a text file, then scale and shift.

    One point per line, three whitespace-separated decimals; ``#`` starts a
    comment.  Each point must lie on the unit sphere to 1e-6.
    """
    pts = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 3:
                raise PointSetFormatError(
                    f"line {lineno}: expected 3 coordinates, got {len(fields)}",
                    line_number=lineno,
                )
            try:
                p = [float(v) for v in fields]
            except ValueError:
                raise PointSetFormatError(
                    f"line {lineno}: non-numeric coordinate", line_number=lineno
                ) from None
            norm = math.sqrt(p[0] ** 2 + p[1] ** 2 + p[2] ** 2)
            if abs(norm - 1.0) > 1e-6:
                raise PointSetFormatError(
                    f"line {lineno}: point is off the unit sphere by {abs(norm - 1.0):.2e}",
                    line_number=lineno,
                )
            pts.append(p)
    if not pts:
        raise PointSetFormatError("point-set file contains no points")
    arr = np.asarray(pts, dtype=float)
    return NodeSet(arr * radius + np.asarray(center, dtype=float))


def _ellipsoid_ring_counts(Nv):
    t, _ = np.polynomial.legendre.leggauss(Nv)
    s = np.sqrt(1.0 - t * t)
    cap = max(int(math.floor(_RING_CAP_FRACTION * Nv + 0.5)), 6)
    counts = np.floor((_RING_SLOPE * Nv + _RING_OFFSET) * s + 0.5).astype(int)
    return t, np.clip(counts, 3, cap)


def _ellipsoid_grid_arrays(a, b, c, Nv):
    """Grid points and outward unit normals on the ellipsoid, body frame."""
    t, counts = _ellipsoid_ring_counts(Nv)
    pts = []
    for tj, nj in zip(t, counts):
        rho = math.sqrt(1.0 - tj * tj)
        s = 2.0 * np.pi * np.arange(nj) / nj
        ring = np.column_stack(
            [a * rho * np.cos(s), b * rho * np.sin(s), np.full(nj, c * tj)]
        )
        pts.append(ring)
    pts = np.vstack(pts)
    normals = pts / np.array([a * a, b * b, c * c])
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return pts, normals


def ellipsoid_grid(a, b, c, Nv):
    """Quasi-uniform nodes on an ellipsoid surface.

    Parameterization (a sqrt(1-t^2) cos s, b sqrt(1-t^2) sin s, c t) with Nv
    Gauss-Legendre nodes in t and periodic-trapezoid rings in s whose counts
    follow the local circle radius.  Total count grows like 0.44*Nv^2.
    """
    if Nv < 4:
        raise InvalidArgumentError(f"need at least 4 latitude nodes, got {Nv}")
    pts, _ = _ellipsoid_grid_arrays(a, b, c, Nv)
    return NodeSet(pts)


def ellipsoid_collocation_rings(Nv, rectangularity):
    """Latitude count for the collocation grid at a given M/N target ratio."""
    return max(Nv + 1, int(math.floor(Nv * math.sqrt(rectangularity) + 0.5)))


# Node generator for sphere surfaces; "fibonacci" is the plain lattice,
# "relaxed" adds the antipodal Coulomb refinement.
SPHERE_NODE_STYLE = "fibonacci"


def _sphere_surface_nodes(n, radius):
    if SPHERE_NODE_STYLE == "relaxed":
        return relaxed_sphere_nodes(n, radius=radius)
    return fibonacci_sphere_nodes(n, radius=radius)


def _base_node_sets(shape, node_request, delta_sep, rectangularity):
    """Collocation and proxy node sets for the reference pose (origin, identity)."""
    if delta_sep <= 0:
        raise InvalidArgumentError("delta_sep must be positive")
    if delta_sep >= shape.min_curvature_radius:
        raise DegenerateGeometryError(
            f"delta_sep={delta_sep} reaches the curvature limit "
            f"{shape.min_curvature_radius}; proxy surface degenerates"
        )
    if isinstance(shape, Sphere):
        n_proxy = int(node_request)
        n_coll = int(math.floor(rectangularity * n_proxy + 0.5))
        coll = _sphere_surface_nodes(n_coll, shape.radius)
        proxy = _sphere_surface_nodes(n_proxy, shape.radius - delta_sep)
        return coll, proxy
    Nv = int(node_request)
    coll = ellipsoid_grid(
        shape.a, shape.b, shape.c, ellipsoid_collocation_rings(Nv, rectangularity)
    )
    pts, normals = _ellipsoid_grid_arrays(shape.a, shape.b, shape.c, Nv)
    proxy = NodeSet(pts - delta_sep * normals)
    return coll, proxy


def default_rectangularity(shape):
    return 1.2 if isinstance(shape, Sphere) else 1.3


def make_particle(shape, center=(0.0, 0.0, 0.0), rotation=None, node_request=None,
                  delta_sep=None, rectangularity=None):
    """Build a particle with quasi-uniform collocation and proxy node sets.

    ``node_request`` is the proxy node count N for spheres, or the latitude
    count Nv for ellipsoids.  The proxy surface sits ``delta_sep`` inward
    along the outward normal (a concentric sphere of radius R - delta_sep
    for spheres).  The collocation grid is denser by ``rectangularity``
    (default 1.2 for spheres, 1.3 for ellipsoids).
    """
    if node_request is None or delta_sep is None:
        raise InvalidArgumentError("node_request and delta_sep are required")
    if rotation is None:
        rotation = np.eye(3)
    if rectangularity is None:
        rectangularity = default_rectangularity(shape)
    coll, proxy = _base_node_sets(shape, node_request, delta_sep, rectangularity)
    base = Particle(
        shape=shape,
        center=np.zeros(3),
        rotation=np.eye(3),
        collocation=coll,
        proxy=proxy,
        delta_sep=float(delta_sep),
        node_request=int(node_request),
        rectangularity=float(rectangularity),
    )
    rotation = np.asarray(rotation, dtype=float)
    center = np.asarray(center, dtype=float)
    if np.array_equal(rotation, np.eye(3)) and np.array_equal(center, np.zeros(3)):
        return base
    return transform_particle(base, center, rotation)


def transform_particle(particle, center, rotation):
    """Rotate the particle about its body center, then move it to ``center``.

    ``rotation`` is applied on top of the current orientation; node sets are
    exact rigid images of the old ones (counts and shape unchanged).
    """
    rotation = np.asarray(rotation, dtype=float).reshape(3, 3)
    if np.max(np.abs(rotation.T @ rotation - np.eye(3))) > 1e-12:
        raise InvalidArgumentError("rotation matrix is not orthogonal to 1e-12")
    center = np.asarray(center, dtype=float).reshape(3)
    coll = (particle.collocation.points - particle.center) @ rotation.T + center
    proxy = (particle.proxy.points - particle.center) @ rotation.T + center
    return replace(
        particle,
        center=center,
        rotation=rotation @ particle.rotation,
        collocation=NodeSet(coll),
        proxy=NodeSet(proxy),
    )


def with_delta_sep(particle, delta_sep):
    """Regenerate the proxy surface at a new offset, keeping pose and collocation."""
    _, proxy = _base_node_sets(
        particle.shape, particle.node_request, delta_sep, particle.rectangularity
    )
    world = proxy.points @ particle.rotation.T + particle.center
    return replace(particle, proxy=NodeSet(world), delta_sep=float(delta_sep))


def with_node_request(particle, node_request):
    """Rebuild both node sets at a new resolution, keeping shape and pose."""
    coll, proxy = _base_node_sets(
        particle.shape, node_request, particle.delta_sep, particle.rectangularity
    )
    R, c = particle.rotation, particle.center
    return replace(
        particle,
        node_request=int(node_request),
        collocation=NodeSet(coll.points @ R.T + c),
        proxy=NodeSet(proxy.points @ R.T + c),
    )


def surface_test_points(particle, multiplier=2.0):
    """Dense surface evaluation grid (~multiplier x M points) with outward normals.

    Same generator family as the collocation nodes but a different count, so
    test points never coincide with collocation or proxy nodes.
    """
    if multiplier <= 0:
        raise InvalidArgumentError("test-point multiplier must be positive")
    if isinstance(particle.shape, Sphere):
        count = max(4, int(math.ceil(multiplier * particle.num_collocation)) + 1)
        base = fibonacci_sphere_nodes(count, radius=particle.shape.radius)
        normals_local = base.points / particle.shape.radius
        pts_local = base.points
    else:
        nv_coll = ellipsoid_collocation_rings(particle.node_request, particle.rectangularity)
        nv_test = max(nv_coll + 1, int(math.floor(nv_coll * math.sqrt(multiplier) + 0.5)))
        s = particle.shape
        pts_local, normals_local = _ellipsoid_grid_arrays(s.a, s.b, s.c, nv_test)
    R, c = particle.rotation, particle.center
    return pts_local @ R.T + c, normals_local @ R.T



def project_to_ellipsoid(point, semiaxes):
    """Nearest point on the origin-centered ellipsoid, via Newton on the
    single Lagrange multiplier of the constrained projection."""
    s2 = np.asarray(semiaxes, dtype=float) ** 2
    p = np.asarray(point, dtype=float)
    # x_i = s_i^2 p_i / (s_i^2 + t); g(t) = sum s_i^2 p_i^2/(s_i^2+t)^2 - 1
    # g is strictly decreasing on (-min s_i^2, inf) so the root is unique.
    t = max(0.0, np.max(np.sqrt(s2) * np.abs(p)) - np.min(s2))
    lo = -np.min(s2)
    for _ in range(200):
        d = s2 + t
        g = np.sum(s2 * p * p / (d * d)) - 1.0
        if abs(g) < 1e-14:
            break
        dg = -2.0 * np.sum(s2 * p * p / (d * d * d))
        step = g / dg
        t_new = t - step
        if t_new <= lo:
            t_new = 0.5 * (t + lo)
        t = t_new
        if abs(step) < 1e-15 * max(1.0, abs(t)):
            break
    return s2 * p / (s2 + t)


def _project_to_particle_surface(point, particle):
    local = particle.body_frame(point).reshape(3)
    if isinstance(particle.shape, Sphere):
        norm = np.linalg.norm(local)
        if norm == 0.0:
            local_proj = np.array([particle.shape.radius, 0.0, 0.0])
        else:
            local_proj = local * (particle.shape.radius / norm)
    else:
        local_proj = project_to_ellipsoid(local, particle.shape.semiaxes)
    return local_proj @ particle.rotation.T + particle.center


def pair_distance(p1, p2):
    """Minimum surface-to-surface distance between two particles.

    Sphere pairs are analytic.  Ellipsoid pairs use alternating projection
    (project onto each surface in turn) with pointwise Newton projections,
    stopping when the iterate moves less than 1e-10 or after 200 sweeps.
    Raises :class:`OverlapError` when the particles interpenetrate.
    """
    if isinstance(p1.shape, Sphere) and isinstance(p2.shape, Sphere):
        gap = (
            np.linalg.norm(p1.center - p2.center)
            - p1.shape.radius
            - p2.shape.radius
        )
        if gap < 0:
            raise OverlapError(f"spheres overlap by {-gap:.3e}", penetration=-gap)
        return float(gap)

    x = 0.5 * (p1.center + p2.center)
    x1 = _project_to_particle_surface(x, p1)
    for _ in range(200):
        x2 = _project_to_particle_surface(x1, p2)
        x1_new = _project_to_particle_surface(x2, p1)
        move = np.linalg.norm(x1_new - x1)
        x1 = x1_new
        if move < 1e-10:
            break
    if particle_contains(p2, x1) or particle_contains(p1, x2):
        depth = float(np.linalg.norm(x1 - x2))
        raise OverlapError(
            f"particles overlap; projection penetration ~{depth:.3e}",
            penetration=depth,
        )
    return float(np.linalg.norm(x1 - x2))


def particle_contains(particle, point):
    return bool(particle.implicit(np.atleast_2d(point))[0] < 0.0)


def min_pair_distance(particle, others):
    return min(pair_distance(particle, q) for q in others)


def random_rotation(rng):
    """Uniform random rotation via the quaternion method."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _place_along_direction(base_particle, direction, existing, delta):
    """Radial bisection along ``direction`` until the min distance hits delta."""
    span = 2.0 * base_particle.shape.bounding_radius + delta
    r_lo = 0.0
    r_hi = span
    identity = np.eye(3)
    for _ in range(60):
        candidate = transform_particle(base_particle, direction * r_hi, identity)
        try:
            if min_pair_distance(candidate, existing) - delta > 0:
                break
        except OverlapError:
            pass
        r_hi *= 1.6
    else:
        raise PlacementError("could not bracket a feasible radial position")

    for _ in range(200):
        r_mid = 0.5 * (r_lo + r_hi)
        candidate = transform_particle(base_particle, direction * r_mid, identity)
        try:
            gap = min_pair_distance(candidate, existing) - delta
        except OverlapError:
            gap = -1.0
        if abs(gap) <= 1e-8:
            return candidate
        if gap > 0:
            r_hi = r_mid
        else:
            r_lo = r_mid
    raise PlacementError("radial bisection did not converge in 200 iterations")


def grow_cluster(P, delta, shape, node_request, delta_sep, rectangularity=None,
                 seed=0, orient="random", policy="grow"):
    """Random particle cluster with controlled minimum separation.

    ``policy="grow"`` places the first particle at the origin and each new
    one along a uniformly random direction, with the radial position found
    by bisection so its minimum distance to the existing set is delta to
    1e-8.  ``policy="enclosing-spheres"`` grows a cluster of bounding
    spheres at separation delta and drops a randomly oriented particle into
    each, which guarantees (but rarely attains) the minimum separation;
    this is the cheap large-P variant.  Deterministic for a fixed seed.
    """
    if P < 1:
        raise InvalidArgumentError("cluster needs at least one particle")
    if delta <= 0:
        raise InvalidArgumentError("minimum separation must be positive")
    if policy not in ("grow", "enclosing-spheres"):
        raise InvalidArgumentError(f"unknown growth policy {policy!r}")
    rng = np.random.default_rng(seed)

    def rotation_for(k):
        if orient == "random" and isinstance(shape, Ellipsoid):
            return random_rotation(rng)
        return np.eye(3)

    def direction():
        v = rng.normal(size=3)
        return v / np.linalg.norm(v)

    if policy == "enclosing-spheres" and isinstance(shape, Ellipsoid):
        bound = Sphere(shape.bounding_radius)
        centers = [np.zeros(3)]
        probe = make_particle(bound, node_request=8, delta_sep=0.5 * bound.radius)
        placed = [probe]
        for _ in range(1, P):
            placed.append(_place_along_direction(probe, direction(), placed, delta))
            centers.append(placed[-1].center)
        particles = [
            make_particle(shape, center=c, rotation=rotation_for(k),
                          node_request=node_request, delta_sep=delta_sep,
                          rectangularity=rectangularity)
            for k, c in enumerate(centers)
        ]
        return Cluster(particles, min_separation=delta)

    particles = [
        make_particle(shape, rotation=rotation_for(0), node_request=node_request,
                      delta_sep=delta_sep, rectangularity=rectangularity)
    ]
    for k in range(1, P):
        fresh = make_particle(shape, rotation=rotation_for(k),
                              node_request=node_request, delta_sep=delta_sep,
                              rectangularity=rectangularity)
        particles.append(_place_along_direction(fresh, direction(), particles, delta))
    return Cluster(particles, min_separation=delta)


def cluster_pair_distances(cluster):
    """All pairwise surface-to-surface distances, as a condensed list."""
    parts = cluster.particles
    out = []
    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            out.append(pair_distance(parts[i], parts[j]))
    return np.asarray(out)


def validate_cluster(cluster, grown=True):
    """Check the separation contract; raises on violation."""
    if len(cluster) < 2:
        return
    d = cluster_pair_distances(cluster)
    if np.min(d) < cluster.min_separation - 1e-9:
        raise OverlapError(
            f"pair distance {np.min(d):.6e} violates the minimum separation "
            f"{cluster.min_separation}",
            penetration=cluster.min_separation - float(np.min(d)),
        )
    if grown and np.min(d) > cluster.min_separation + 1e-6:
        raise InvalidArgumentError(
            "no particle pair attains the requested minimum separation"
        )

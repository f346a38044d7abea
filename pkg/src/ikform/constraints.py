"""Differentiable constraint building blocks.

Collision distances between spheres and axis-aligned boxes, joint-centering
costs, log barriers, and support-polygon stability in equality (convex-hull
multipliers) and inequality (triangle slack) form.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .kinematics import PlanarChain, link_frames

STABILITY_BETA = 200.0


@dataclass(frozen=True, eq=False)
class CollisionSphere:
    """Sphere rigidly attached to frame ``link_index + 1`` (``-1`` = chain base)."""

    link_index: int
    local_offset: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")
        object.__setattr__(self, "local_offset", np.asarray(self.local_offset, dtype=float))


@dataclass(frozen=True, eq=False)
class BoxObstacle:
    center: np.ndarray
    half_extents: np.ndarray

    def __post_init__(self):
        he = np.asarray(self.half_extents, dtype=float)
        if he.shape != (3,) or np.any(he <= 0):
            raise ValueError("half_extents must be three positive numbers")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "half_extents", he)


@dataclass(frozen=True, eq=False)
class Scene:
    spheres: tuple = ()
    boxes: tuple = ()
    d_min: float = 1e-3

    def to_dict(self) -> dict:
        return {
            "spheres": [
                {"link_index": s.link_index, "local_offset": s.local_offset.tolist(), "radius": s.radius}
                for s in self.spheres
            ],
            "boxes": [{"center": b.center.tolist(), "half_extents": b.half_extents.tolist()} for b in self.boxes],
            "d_min": self.d_min,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        spheres = tuple(
            CollisionSphere(int(s["link_index"]), s.get("local_offset", [0, 0, 0]), float(s["radius"]))
            for s in d.get("spheres", [])
        )
        boxes = tuple(BoxObstacle(b["center"], b["half_extents"]) for b in d.get("boxes", []))
        return cls(spheres, boxes, float(d.get("d_min", 1e-3)))


@dataclass(frozen=True, eq=False)
class SupportPoints:
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self):
        pts = self.points if ad.is_dual(self.points) else np.asarray(self.points, dtype=float)
        if len(pts) < 3:
            raise ValueError("need at least 3 support points")
        object.__setattr__(self, "points", pts)


# ---------------------------------------------------------------- collision

def sphere_box_sdf(center, radius: float, box: BoxObstacle):
    """Signed distance from a sphere surface to an axis-aligned box.

    Outside the box this is the Euclidean distance; inside it is minus the
    distance to the nearest face.  The sphere radius is subtracted in both
    cases.
    """
    q = ad.abs(center - box.center) - box.half_extents
    qv = ad.value(q)
    if np.any(qv > 0):
        pos = ad.maximum(q, 0.0)
        return ad.norm(pos) - radius
    return ad.amax(q) - radius


def sphere_sphere_distance(c1, r1: float, c2, r2: float):
    return ad.norm(c1 - c2) - (r1 + r2)


def sphere_centers(chain, q, spheres) -> list:
    """World centres of the collision spheres (differentiable in ``q``)."""
    if isinstance(chain, PlanarChain):
        chain = chain.to_chain()
    frames = link_frames(chain, q)
    return [frames[s.link_index + 1].transform_point(s.local_offset) for s in spheres]


def min_distance_residuals(chain, q, spheres, obstacles, d_min: float):
    """``sdf - d_min`` for every sphere/box pair and non-adjacent sphere pair.

    Each entry must be non-negative.  Spheres on the same or neighbouring
    links are not tested against each other.
    """
    spheres = list(spheres)
    obstacles = list(obstacles)
    if not spheres:
        return np.zeros(0)
    centers = sphere_centers(chain, q, spheres)
    rows = []
    for c, s in zip(centers, spheres):
        for box in obstacles:
            rows.append(sphere_box_sdf(c, s.radius, box) - d_min)
    for (i, si), (j, sj) in itertools.combinations(enumerate(spheres), 2):
        if abs(si.link_index - sj.link_index) > 1:
            rows.append(sphere_sphere_distance(centers[i], si.radius, centers[j], sj.radius) - d_min)
    if not rows:
        return np.zeros(0)
    return ad.stack(rows)


# ---------------------------------------------------------------- costs

def joint_centering_cost(q, M=None, q_nom=None):
    """``(q - q_nom)^T M (q - q_nom)``; ``M`` defaults to the identity."""
    e = q - q_nom if q_nom is not None else q
    if M is None:
        return ad.dot(e, e)
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        return ad.dot(e * M, e)
    return ad.dot(M @ e, e)


def log_barrier(residual, mu: float, eps: float = ad.LOG_EPS):
    """``-mu * log(residual)`` with the log argument clipped at ``eps``."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    return ad.safe_log(residual, eps) * (-mu)


# ---------------------------------------------------------------- stability

def _vec(v):
    return v if ad.is_dual(v) else np.asarray(v, dtype=float)


def _check_triangle(v1, v2, v3):
    a, b, c = (np.asarray(ad.value(v), dtype=float) for v in (v1, v2, v3))
    area2 = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    if abs(area2) <= 2e-12:
        raise ValueError("degenerate triangle")


def _edge_slack(p, va, vb):
    e = vb - va
    nx, ny = -e[1], e[0]
    rel = p - va
    return (rel[0] * nx + rel[1] * ny) / ad.sqrt(nx * nx + ny * ny)


def edge_slacks(p, v1, v2, v3):
    """``(s12, s23, s31)`` signed distances of ``p`` to the three edge lines."""
    p, v1, v2, v3 = _vec(p), _vec(v1), _vec(v2), _vec(v3)
    return _edge_slack(p, v1, v2), _edge_slack(p, v2, v3), _edge_slack(p, v3, v1)


def triangle_slack(p, v1, v2, v3):
    """``min(s12, s23, s31)``; non-negative iff ``p`` is inside a CCW triangle."""
    _check_triangle(v1, v2, v3)
    return ad.amin(ad.stack(edge_slacks(p, v1, v2, v3)), axis=0)


def containment_margin(p, v1, v2, v3):
    """Max of the slacks of both windings: ``>= 0`` exactly when ``p`` is inside."""
    _check_triangle(v1, v2, v3)
    s = ad.amin(ad.stack(edge_slacks(p, v1, v2, v3)), axis=0)
    s_rev = ad.amin(ad.stack(edge_slacks(p, v1, v3, v2)), axis=0)
    return ad.amax(ad.stack([s, s_rev]), axis=0)


def _triangle_index(points_value: np.ndarray, tol: float = 1e-12):
    n = len(points_value)
    tri = np.array(list(itertools.combinations(range(n), 3)), dtype=int)
    a, b, c = points_value[tri[:, 0]], points_value[tri[:, 1]], points_value[tri[:, 2]]
    area2 = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    keep = np.abs(area2) > 2 * tol
    return tri[keep]


def all_triangle_slacks(p, support: SupportPoints):
    """Slacks of every non-degenerate triangle in both windings (vector)."""
    pts = support.points
    tri = _triangle_index(np.asarray(ad.value(pts), dtype=float))
    if len(tri) == 0:
        raise ValueError("all support triangles are degenerate (collinear support)")
    i, j, k = tri[:, 0], tri[:, 1], tri[:, 2]
    V1, V2, V3 = pts[i], pts[j], pts[k]

    def slack(A, B, C):
        def edge(P, Q):
            ex, ey = Q[:, 0] - P[:, 0], Q[:, 1] - P[:, 1]
            return ((p[0] - P[:, 0]) * (-ey) + (p[1] - P[:, 1]) * ex) / ad.sqrt(ex * ex + ey * ey)

        return ad.amin(ad.stack([edge(A, B), edge(B, C), edge(C, A)]), axis=0)

    return ad.concatenate([slack(V1, V2, V3), slack(V1, V3, V2)])


def stability_margin(p_com_xy, support: SupportPoints, beta: float | None = STABILITY_BETA):
    """Containment margin of ``p_com_xy`` in the support hull.

    ``beta=None`` gives the hard max over all triangle slacks.  Otherwise a
    log-mean-exp smoothing is used, which never exceeds the hard max (a
    non-negative smoothed margin certifies containment) and undershoots it
    by at most ``log(N) / beta`` for ``N`` slacks.
    """
    s = all_triangle_slacks(p_com_xy, support)
    if beta is None:
        return ad.amax(s, axis=0)
    sv = ad.value(s)
    m = float(np.max(sv))
    n = len(sv)
    w = ad.exp((s - m) * beta)
    return ad.log(w.sum() if ad.is_dual(w) else np.sum(w)) * (1.0 / beta) + (m - math.log(n) / beta)


def stability_equality_residuals(p_com_xy, support: SupportPoints, lam):
    """``(sum(lam) - 1, sum(lam_i p_i) - p_com)``; bounds on ``lam`` are separate."""
    pts = support.points
    if len(lam) != len(pts):
        raise ValueError("one multiplier per support point required")
    total = lam.sum() if ad.is_dual(lam) else float(np.sum(lam))
    comb = lam @ pts if not ad.is_dual(pts) else ad.matmul(lam, pts)
    return ad.concatenate([total - 1.0, comb - p_com_xy])


def in_hull(p, points, tol: float = 0.0) -> bool:
    """Half-plane convex-hull membership test (independent oracle)."""
    from scipy.spatial import ConvexHull

    pts = np.asarray(points, dtype=float)
    hull = ConvexHull(pts)
    # equations: normal . x + offset <= 0 inside
    return bool(np.all(hull.equations[:, :2] @ np.asarray(p, float) + hull.equations[:, 2] <= tol))


def hull_distance(p, points) -> float:
    """Signed distance to the hull boundary (positive inside)."""
    from scipy.spatial import ConvexHull

    pts = np.asarray(points, dtype=float)
    hull = ConvexHull(pts)
    return float(-np.max(hull.equations[:, :2] @ np.asarray(p, float) + hull.equations[:, 2]))

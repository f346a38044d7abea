"""DH kinematic chains, forward kinematics and Jacobians.

Classic (distal) DH convention: each link contributes
``Rz(theta) Tz(d) Tx(a) Rx(alpha)`` and joint ``i`` rotates about the z axis
of frame ``i`` (frame 0 is the chain base).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .geometry import Pose2, Pose3, rpy_vector

HALF_PI = math.pi / 2


@dataclass(frozen=True)
class DHLink:
    d: float
    alpha: float
    a: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.d, self.alpha, self.a)):
            raise ValueError(f"non-finite DH parameter in {self}")


@dataclass(frozen=True, eq=False)
class KinematicChain:
    links: tuple
    q_lb: np.ndarray
    q_ub: np.ndarray
    base: Pose3 = field(default_factory=Pose3.identity)

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        lb = np.asarray(self.q_lb, dtype=float)
        ub = np.asarray(self.q_ub, dtype=float)
        if lb.shape != (len(self.links),) or ub.shape != (len(self.links),):
            raise ValueError("joint limit vectors must match the link count")
        if np.any(lb > ub):
            raise ValueError("q_lb must not exceed q_ub")
        object.__setattr__(self, "q_lb", lb)
        object.__setattr__(self, "q_ub", ub)

    @property
    def n_joints(self) -> int:
        return len(self.links)

    @property
    def total_length(self) -> float:
        return float(sum(abs(l.d) + abs(l.a) for l in self.links))

    def sub_chain(self, start: int, stop: int | None = None, base: Pose3 | None = None) -> "KinematicChain":
        sl = slice(start, stop)
        return KinematicChain(self.links[sl], self.q_lb[sl], self.q_ub[sl], base or Pose3.identity())

    def with_base(self, base: Pose3) -> "KinematicChain":
        return KinematicChain(self.links, self.q_lb, self.q_ub, base)

    def to_dict(self) -> dict:
        return {
            "links": [{"d": l.d, "alpha": l.alpha, "a": l.a} for l in self.links],
            "q_lb": self.q_lb.tolist(),
            "q_ub": self.q_ub.tolist(),
            "base": self.base.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KinematicChain":
        links = [DHLink(float(l["d"]), float(l["alpha"]), float(l["a"])) for l in d["links"]]
        base = Pose3.from_dict(d["base"]) if d.get("base") else Pose3.identity()
        return cls(links, np.asarray(d["q_lb"], float), np.asarray(d["q_ub"], float), base)


@dataclass(frozen=True)
class PlanarChain:
    """``n`` equal revolute links in the plane, total length ``n * link_length``."""

    n: int
    link_length: float | None = None
    base: Pose2 = Pose2(0.0, 0.0, 0.0)
    limit: float = 2 * math.pi

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("a planar chain needs at least 3 links")
        if self.link_length is None:
            object.__setattr__(self, "link_length", 1.0 / self.n)
        if self.link_length <= 0:
            raise ValueError("link_length must be positive")

    @property
    def n_joints(self) -> int:
        return self.n

    @property
    def total_length(self) -> float:
        return self.n * self.link_length

    @property
    def q_lb(self) -> np.ndarray:
        return np.full(self.n, -self.limit)

    @property
    def q_ub(self) -> np.ndarray:
        return np.full(self.n, self.limit)

    def to_chain(self) -> KinematicChain:
        """Equivalent spatial DH chain (z up, planar motion in x-y)."""
        links = [DHLink(0.0, 0.0, self.link_length)] * self.n
        c, s = math.cos(self.base.theta), math.sin(self.base.theta)
        base = Pose3(np.array([self.base.x, self.base.y, 0.0]), np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]]))
        return KinematicChain(links, self.q_lb, self.q_ub, base)

    def to_dict(self) -> dict:
        return {"type": "planar", "n": self.n, "link_length": self.link_length,
                "base": self.base.to_dict(), "limit": self.limit}


def dh_transform(link: DHLink, theta) -> Pose3:
    """Rigid transform of one DH link at joint angle ``theta``."""
    ca, sa = math.cos(link.alpha), math.sin(link.alpha)
    ct, st = ad.cos(theta), ad.sin(theta)
    R = ad.stack([
        ad.stack([ct, -st * ca, st * sa]),
        ad.stack([st, ct * ca, -ct * sa]),
        ad.stack([0.0 * ct, sa + 0.0 * ct, ca + 0.0 * ct]),
    ])
    p = ad.stack([link.a * ct, link.a * st, link.d + 0.0 * ct])
    return Pose3(p, R)


def _dh_arrays(chain: KinematicChain):
    d = np.array([l.d for l in chain.links])
    al = np.array([l.alpha for l in chain.links])
    a = np.array([l.a for l in chain.links])
    return d, al, a


def frames_numeric(chain: KinematicChain, q) -> tuple[np.ndarray, np.ndarray]:
    """World rotations ``(n+1, 3, 3)`` and origins ``(n+1, 3)`` of every frame.

    Index 0 is the base; index ``j`` is the frame after link ``j - 1``.
    """
    q = np.asarray(q, dtype=float)
    d, al, a = _dh_arrays(chain)
    ct, st = np.cos(q), np.sin(q)
    ca, sa = np.cos(al), np.sin(al)
    n = chain.n_joints
    Rl = np.empty((n, 3, 3))
    Rl[:, 0, 0], Rl[:, 0, 1], Rl[:, 0, 2] = ct, -st * ca, st * sa
    Rl[:, 1, 0], Rl[:, 1, 1], Rl[:, 1, 2] = st, ct * ca, -ct * sa
    Rl[:, 2, 0], Rl[:, 2, 1], Rl[:, 2, 2] = 0.0, sa, ca
    pl = np.stack([a * ct, a * st, d], axis=1)
    Rs = np.empty((n + 1, 3, 3))
    ps = np.empty((n + 1, 3))
    Rs[0] = ad.value(chain.base.rotation)
    ps[0] = ad.value(chain.base.position)
    for i in range(n):
        ps[i + 1] = Rs[i] @ pl[i] + ps[i]
        Rs[i + 1] = Rs[i] @ Rl[i]
    return Rs, ps


def _frame_pose(Rs, ps, q, j: int) -> Pose3:
    """Pose of frame ``j`` carrying derivatives through ``q`` when it is dual."""
    if not ad.is_dual(q):
        return Pose3(ps[j].copy(), Rs[j].copy())
    z = Rs[:j, :, 2]
    o = ps[:j]
    dp = np.cross(z, ps[j] - o)  # (j, 3)
    # d R / d q_i = [z_i]x R
    dR = np.cross(z[:, :, None], Rs[j][None, :, :], axis=1)  # (j, 3, 3)
    g = q.grad[:j]
    pos = ad.Dual(ps[j].copy(), dp.T @ g)
    rot = ad.Dual(Rs[j].copy(), np.einsum("nab,nk->abk", dR, g))
    return Pose3(pos, rot)


def forward_kinematics(chain: KinematicChain, q) -> Pose3:
    """End-effector pose ``base * T_0(q_0) * ... * T_{n-1}(q_{n-1})``.

    Dual ``q`` is handled by an analytic tangent rule (revolute screw axes),
    so the cost is one numeric pass regardless of the variable count.
    """
    if len(q) != chain.n_joints:
        raise ValueError(f"expected {chain.n_joints} joint values, got {len(q)}")
    Rs, ps = frames_numeric(chain, ad.value(q))
    return _frame_pose(Rs, ps, q, chain.n_joints)


def link_frames(chain: KinematicChain, q) -> list[Pose3]:
    """All frames (base first), differentiable like :func:`forward_kinematics`."""
    Rs, ps = frames_numeric(chain, ad.value(q))
    return [_frame_pose(Rs, ps, q, j) for j in range(chain.n_joints + 1)]


def forward_kinematics_composed(chain: KinematicChain, q) -> Pose3:
    """Reference FK built by composing :func:`dh_transform` link by link."""
    pose = chain.base
    for link, th in zip(chain.links, q):
        pose = pose @ dh_transform(link, th)
    return pose


def planar_fk(chain: PlanarChain, q, upto: int | None = None) -> Pose2:
    """Pose at the end of link ``upto - 1`` (the tip by default)."""
    k = chain.n if upto is None else upto
    if upto is None and len(q) != chain.n:
        raise ValueError(f"expected {chain.n} joint values, got {len(q)}")
    b = chain.base
    if k == 0:
        return b
    l = chain.link_length
    if ad.is_dual(q):
        phi = q[:k].cumsum() + b.theta
        return Pose2(b.x + l * ad.cos(phi).sum(), b.y + l * ad.sin(phi).sum(), phi[k - 1])
    phi = np.cumsum(np.asarray(q, dtype=float)[:k]) + b.theta
    return Pose2(b.x + l * float(np.sum(np.cos(phi))), b.y + l * float(np.sum(np.sin(phi))), float(phi[k - 1]))


def jacobian(chain, q) -> np.ndarray:
    """Kinematic Jacobian.

    Spatial chains: ``6 x d`` with rows (position, roll-pitch-yaw).  Planar
    chains: ``3 x n`` with rows (x, y, theta).
    """
    qd = ad.Dual.variables(np.asarray(q, dtype=float))
    if isinstance(chain, PlanarChain):
        pose = planar_fk(chain, qd)
        return np.stack([pose.x.grad, pose.y.grad, pose.theta.grad])
    pose = forward_kinematics(chain, qd)
    return np.vstack([pose.position.grad, rpy_vector(pose.rotation).grad])


def scaled_arm(n: int = 0, total_length: float = 1.0, base: Pose3 | None = None) -> KinematicChain:
    """``n + 7`` link arm: ``n`` alternating links followed by an SRS 7-DoF tail.

    The prefix alternates ``(d=l, alpha=-pi/2)`` and ``(d=0, alpha=+pi/2)``;
    the tail reproduces the iiwa-style parameter pattern.  ``l`` is chosen so
    the summed link offsets equal ``total_length``.  Limits are ``+-pi``.
    """
    if n < 0 or n % 2:
        raise ValueError("extra link count must be a non-negative even integer")
    if total_length <= 0:
        raise ValueError("total_length must be positive")
    pattern = [(1, -HALF_PI), (0, HALF_PI)] * (n // 2)
    pattern += [(1, -HALF_PI), (0, HALF_PI), (1, HALF_PI), (0, -HALF_PI), (1, -HALF_PI), (0, HALF_PI), (1, 0.0)]
    l = total_length / sum(k for k, _ in pattern)
    links = [DHLink(k * l, al, 0.0) for k, al in pattern]
    lim = np.full(len(links), math.pi)
    return KinematicChain(links, -lim, lim, base or Pose3.identity())


def chain_from_dict(d: dict):
    """Chain from its JSON description (explicit links, ``planar`` or ``scaled_arm``)."""
    kind = d.get("type", "dh")
    if kind == "planar":
        base = Pose2.from_dict(d["base"]) if d.get("base") else Pose2(0.0, 0.0, 0.0)
        return PlanarChain(int(d["n"]), d.get("link_length"), base, float(d.get("limit", 2 * math.pi)))
    if kind == "scaled_arm":
        base = Pose3.from_dict(d["base"]) if d.get("base") else None
        return scaled_arm(int(d.get("n", 0)), float(d.get("total_length", 1.0)), base)
    return KinematicChain.from_dict(d)


def planar_frame_positions(chain: PlanarChain, q) -> np.ndarray:
    """Numeric joint positions (n+1, 2) of a planar chain, base first."""
    q = np.asarray(ad.value(q), dtype=float)
    phi = chain.base.theta + np.cumsum(q)
    steps = chain.link_length * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    origin = np.array([chain.base.x, chain.base.y], dtype=float)
    return np.vstack([origin, origin + np.cumsum(steps, axis=0)])


__all__ = [
    "DHLink", "KinematicChain", "PlanarChain", "dh_transform", "forward_kinematics",
    "forward_kinematics_composed", "link_frames", "frames_numeric", "planar_fk", "jacobian",
    "scaled_arm", "chain_from_dict", "planar_frame_positions",
]

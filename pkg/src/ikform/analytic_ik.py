"""Closed-form IK maps with self-motion parameters, branches and probes.

Each map takes a target pose, continuous self-motion parameters ``psi`` and
a discrete :class:`Branch` and returns joint angles.  Domain-limited steps
(``arccos``) clamp their argument and report the pre-clamp quantity through
*probe* values: all probes non-negative means the target was reached
without clamping.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .geometry import Pose2, Pose3, rotation_from_rpy, rpy_from_rotation
from .kinematics import HALF_PI, DHLink, KinematicChain, PlanarChain, forward_kinematics, frames_numeric, planar_fk

# Clamp margin inside the IK maps.  Must stay well below the smallest probe
# value that is treated as "reachable", otherwise clamping could silently act
# on targets the probes certify.
IK_CLIP_EPS = 1e-12
SINGULAR_TOL = 1e-12

_RX_NEG = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])  # Rx(-pi/2)
_RX_POS = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])  # Rx(+pi/2)


class SingularConfigurationError(ValueError):
    """The IK map is undefined (or ill-defined) at the requested input."""


@dataclass(frozen=True)
class Branch:
    """Discrete solution family: a tuple of ``+1`` / ``-1`` signs."""

    signs: tuple

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        if not signs or any(s not in (-1, 1) for s in signs):
            raise ValueError(f"branch signs must be +-1, got {self.signs}")
        object.__setattr__(self, "signs", signs)

    def __len__(self):
        return len(self.signs)

    def __getitem__(self, i):
        return self.signs[i]

    def __str__(self):
        return "".join("+" if s > 0 else "-" for s in self.signs)

    @classmethod
    def parse(cls, text: str) -> "Branch":
        return cls(tuple(1 if c == "+" else -1 for c in text.strip()))


def all_branches(k: int) -> list[Branch]:
    return [Branch(s) for s in itertools.product((1, -1), repeat=k)]


def _sign(v: float) -> int:
    return -1 if v < 0 else 1


@dataclass
class IKResult:
    q: object
    probes: object
    clipped: bool

    @property
    def q_value(self) -> np.ndarray:
        return ad.value(self.q)

    @property
    def probe_values(self) -> np.ndarray:
        return ad.value(self.probes)


def arccos_probes(f):
    """Probe pair ``(1 - f, 1 + f)`` guarding ``arccos(f)``."""
    return ad.stack([1.0 - f, 1.0 + f])


def _outside(f, eps: float) -> bool:
    v = float(ad.value(f))
    return not (-1.0 + eps < v < 1.0 - eps)


# ---------------------------------------------------------------- planar

def planar3r_ik(base: Pose2, target: Pose2, l: float, branch: Branch, eps: float = IK_CLIP_EPS) -> IKResult:
    """Three equal links of length ``l`` from ``base`` to ``target``.

    The wrist (start of the last link) is found by stepping back from the
    target; the middle joint is ``+-2 arccos(|wrist - base| / (2 l))``.
    Probe: ``1 - |wrist - base|^2 / (4 l^2)``.
    """
    if l <= 0:
        raise ValueError("link length must be positive")
    g = branch[0]
    wx = target.x - l * ad.cos(target.theta)
    wy = target.y - l * ad.sin(target.theta)
    dx, dy = wx - base.x, wy - base.y
    d2 = dx * dx + dy * dy
    probe = 1.0 - d2 * (1.0 / (4.0 * l * l))
    f = ad.sqrt(d2) * (1.0 / (2.0 * l))
    half = ad.clipped_arccos(f, eps)
    q_mid = half * (2.0 * g)
    q_first = ad.wrap_angle(ad.atan2(dy, dx) - half * g - base.theta)
    q_last = ad.wrap_angle(target.theta - base.theta - q_first - q_mid)
    q = ad.stack([q_first, q_mid, q_last])
    probes = ad.stack([probe])
    return IKResult(q, probes, _outside(f, eps))


def planar_chain_ik(q_free, target: Pose2, chain: PlanarChain, branch: Branch, eps: float = IK_CLIP_EPS) -> IKResult:
    """All but the last three joints are given; the 3R tail is solved."""
    n_free = chain.n - 3
    if len(q_free) != n_free:
        raise ValueError(f"expected {n_free} free joints, got {len(q_free)}")
    base = planar_fk(chain, q_free, upto=n_free) if n_free else chain.base
    tail = planar3r_ik(base, target, chain.link_length, branch, eps)
    q = ad.concatenate([q_free, tail.q]) if n_free else tail.q
    return IKResult(q, tail.probes, tail.clipped)


# ---------------------------------------------------------------- SRS arm

@dataclass(frozen=True)
class SRSArm:
    """Segment lengths of a spherical-revolute-spherical 7-DoF arm.

    ``d_bs`` base to shoulder, ``d_se`` shoulder to elbow, ``d_ew`` elbow to
    wrist, ``d_wf`` wrist to flange.
    """

    d_bs: float
    d_se: float
    d_ew: float
    d_wf: float

    @classmethod
    def from_chain(cls, chain: KinematicChain) -> "SRSArm":
        links = chain.links[-7:]
        if len(links) != 7:
            raise ValueError("chain has fewer than 7 links")
        alphas = (-HALF_PI, HALF_PI, HALF_PI, -HALF_PI, -HALF_PI, HALF_PI, 0.0)
        for i, (link, al) in enumerate(zip(links, alphas)):
            if abs(link.a) > 1e-12 or abs(link.alpha - al) > 1e-12:
                raise ValueError(f"link {i} of the 7-DoF tail does not match the SRS pattern")
            if i % 2 and abs(link.d) > 1e-12:
                raise ValueError(f"link {i} of the 7-DoF tail must have zero offset")
        arm = cls(links[0].d, links[2].d, links[4].d, links[6].d)
        if min(arm.d_se, arm.d_ew) <= 0:
            raise ValueError("upper arm and forearm lengths must be positive")
        return arm


def _rot_z(a):
    c, s = ad.cos(a), ad.sin(a)
    if not ad.is_dual(c):
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    z = c * 0.0
    return ad.stack([ad.stack([c, -s, z]), ad.stack([s, c, z]), ad.stack([z, z, z + 1.0])])


def _reference_direction(u):
    """Unit vector normal to ``u`` in the plane spanned by ``u`` and base z."""
    uz = u[2]
    w = ad.stack([-uz * u[0], -uz * u[1], 1.0 - uz * uz])
    nw2 = float(ad.value(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]))
    if nw2 < 1e-18:
        ux = u[0]
        w = ad.stack([1.0 - ux * ux, -ux * u[1], -ux * u[2]])
    return w / ad.norm(w)


def _local_target(base: Pose3, target: Pose3):
    Rb_t = base.rotation.T
    return Rb_t @ (target.position - base.position), Rb_t @ target.rotation


def srs7_ik(base: Pose3, target: Pose3, psi, branch: Branch, arm: SRSArm, eps: float = IK_CLIP_EPS) -> IKResult:
    """Seven joint angles of an SRS arm mounted at ``base`` reaching ``target``.

    ``psi`` rotates the elbow about the shoulder-wrist line, measured from
    the plane that contains that line and the base z axis.  Branch signs are
    (shoulder flip, elbow sign, wrist flip).  Probes, in order: elbow
    ``1 -+ cos(q4)`` argument, shoulder and wrist spherical ``arccos``
    arguments.
    """
    g1, g2, g3 = branch.signs
    p, R = _local_target(base, target)
    wrist = p - R[:, 2] * arm.d_wf
    v = wrist - np.array([0.0, 0.0, arm.d_bs])
    L2 = ad.dot(v, v)
    if float(ad.value(L2)) < SINGULAR_TOL**2:
        raise SingularConfigurationError("wrist centre coincides with the shoulder")
    L = ad.sqrt(L2)
    u = v / L
    se, ew = arm.d_se, arm.d_ew

    f_elbow = (L2 - (se * se + ew * ew)) * (1.0 / (2.0 * se * ew))
    a = ad.clipped_arccos(f_elbow, eps)
    q3 = a * g2
    ca, sa = ad.cos(a), ad.sin(a)
    alpha = ad.atan2(sa * ew, ca * ew + se)

    n_ref = _reference_direction(u)
    b = ad.cross(u, n_ref)
    d = n_ref * ad.cos(psi) + b * ad.sin(psi)
    z2 = u * ad.cos(alpha) + d * ad.sin(alpha)

    f_sh = z2[2]
    q1 = ad.clipped_arccos(f_sh, eps) * g1
    q0 = ad.atan2(z2[1] * g1, z2[0] * g1)
    R2 = _rot_z(q0) @ _RX_NEG @ _rot_z(q1) @ _RX_POS
    z3 = ad.cross(d, u) * g2
    aa = R2.T @ z3
    q2 = ad.atan2(aa[0], -aa[1])
    R4 = R2 @ _rot_z(q2) @ _RX_POS @ _rot_z(q3) @ _RX_NEG

    m = R4.T @ R[:, 2]
    f_wr = m[2]
    q5 = ad.clipped_arccos(f_wr, eps) * g3
    q4 = ad.atan2(m[1] * g3, m[0] * g3)
    R6 = R4 @ _rot_z(q4) @ _RX_NEG @ _rot_z(q5) @ _RX_POS
    M = R6.T @ R
    q6 = ad.atan2(M[1, 0], M[0, 0])

    q = ad.stack([q0, q1, q2, q3, q4, q5, q6])
    probes = ad.concatenate([arccos_probes(f_elbow), arccos_probes(f_sh), arccos_probes(f_wr)])
    clipped = _outside(f_elbow, eps) or _outside(f_sh, eps) or _outside(f_wr, eps)
    return IKResult(q, probes, clipped)


def srs7_self_motion_angle(arm: SRSArm, q7) -> float:
    """Self-motion angle ``psi`` of a known SRS configuration (local frame)."""
    links = [
        DHLink(arm.d_bs, -HALF_PI, 0.0), DHLink(0.0, HALF_PI, 0.0), DHLink(arm.d_se, HALF_PI, 0.0),
        DHLink(0.0, -HALF_PI, 0.0), DHLink(arm.d_ew, -HALF_PI, 0.0), DHLink(0.0, HALF_PI, 0.0),
        DHLink(arm.d_wf, 0.0, 0.0),
    ]
    lim = np.full(7, math.inf)
    _, ps = frames_numeric(KinematicChain(links, -lim, lim), q7)
    S, E, W = ps[1], ps[3], ps[5]
    v = W - S
    L = np.linalg.norm(v)
    if L < SINGULAR_TOL:
        raise SingularConfigurationError("wrist centre coincides with the shoulder")
    u = v / L
    n_ref = np.asarray(_reference_direction(u))
    b = np.cross(u, n_ref)
    c = (E - S) - np.dot(E - S, u) * u
    return math.atan2(float(c @ b), float(c @ n_ref))


# ---------------------------------------------------------------- maps

class PlanarIKMap:
    """IK map of an ``n``-link planar chain: free prefix joints + 3R tail."""

    pose_dim = 3
    branch_size = 1

    def __init__(self, chain: PlanarChain, eps: float = IK_CLIP_EPS):
        self.chain = chain
        self.eps = eps

    @property
    def n_joints(self) -> int:
        return self.chain.n

    @property
    def n_psi(self) -> int:
        return self.chain.n - 3

    def branches(self) -> list[Branch]:
        return all_branches(1)

    def pose_from_vars(self, xp) -> Pose2:
        return Pose2(xp[0], xp[1], xp[2])

    def pose_to_vars(self, pose: Pose2) -> np.ndarray:
        # the map is 2*pi periodic in theta
        return pose.wrapped().as_array()

    def forward(self, q) -> Pose2:
        return planar_fk(self.chain, q)

    def solve(self, pose: Pose2, psi, branch: Branch) -> IKResult:
        return planar_chain_ik(psi, pose, self.chain, branch, self.eps)

    def probes(self, pose, psi, branch):
        return self.solve(pose, psi, branch).probes

    def psi_ranges(self):
        return [(-math.pi, math.pi)] * self.n_psi

    def match(self, q0, singular_tol: float = 1e-9):
        """``(pose, psi, branch)`` with ``solve(pose, psi, branch) == q0``."""
        q0 = np.asarray(q0, dtype=float)
        pose = planar_fk(self.chain, q0)
        psi = q0[: self.n_psi].copy()
        branch = Branch((_sign(q0[self.n_psi + 1]),))
        res = self.solve(pose, psi, branch)
        _check_match(res, q0, singular_tol)
        return pose, psi, branch


class ScaledArmIKMap:
    """IK map of a chain ending in an SRS 7-DoF tail.

    Continuous parameters are the prefix joint angles followed by the SRS
    self-motion angle.
    """

    pose_dim = 6
    branch_size = 3

    def __init__(self, chain: KinematicChain, eps: float = IK_CLIP_EPS):
        self.chain = chain
        self.arm = SRSArm.from_chain(chain)
        self.n_prefix = chain.n_joints - 7
        self.prefix = chain.sub_chain(0, self.n_prefix, base=chain.base)
        self.eps = eps

    @property
    def n_joints(self) -> int:
        return self.chain.n_joints

    @property
    def n_psi(self) -> int:
        return self.n_prefix + 1

    def branches(self) -> list[Branch]:
        return all_branches(3)

    def pose_from_vars(self, xp) -> Pose3:
        return Pose3(xp[:3], rotation_from_rpy(xp[3:6]))

    def pose_to_vars(self, pose: Pose3) -> np.ndarray:
        e = rpy_from_rotation(ad.value(pose.rotation))
        return np.concatenate([ad.value(pose.position), e.as_array()])

    def forward(self, q) -> Pose3:
        return forward_kinematics(self.chain, q)

    def srs_base(self, q_prefix) -> Pose3:
        if self.n_prefix == 0:
            return self.chain.base
        return forward_kinematics(self.prefix, q_prefix)

    def solve(self, pose: Pose3, psi, branch: Branch) -> IKResult:
        n = self.n_prefix
        base = self.srs_base(psi[:n])
        tail = srs7_ik(base, pose, psi[n], branch, self.arm, self.eps)
        q = ad.concatenate([psi[:n], tail.q]) if n else tail.q
        return IKResult(q, tail.probes, tail.clipped)

    def probes(self, pose, psi, branch):
        return self.solve(pose, psi, branch).probes

    def psi_ranges(self):
        lo, hi = self.chain.q_lb[: self.n_prefix], self.chain.q_ub[: self.n_prefix]
        ranges = [(max(a, -math.pi), min(b, math.pi)) for a, b in zip(lo, hi)]
        return ranges + [(0.0, 2 * math.pi)]

    def match(self, q0, singular_tol: float = 1e-9):
        """``(pose, psi, branch)`` with ``solve(pose, psi, branch) == q0``."""
        q0 = np.asarray(q0, dtype=float)
        n = self.n_prefix
        pose = forward_kinematics(self.chain, q0)
        local = q0[n:]
        psi = np.append(q0[:n], srs7_self_motion_angle(self.arm, local))
        branch = Branch((_sign(local[1]), _sign(local[3]), _sign(local[5])))
        res = self.solve(pose, psi, branch)
        _check_match(res, q0, singular_tol)
        return pose, psi, branch


def _check_match(res: IKResult, q0, singular_tol: float):
    pv = res.probe_values
    if res.clipped or np.min(pv) < singular_tol:
        raise SingularConfigurationError("configuration sits on a reachability boundary; resample it")
    err = np.max(np.abs(ad.wrap_angle(res.q_value - q0)))
    if not err < 1e-6:
        raise SingularConfigurationError(
            f"configuration is too close to a singularity (roundtrip error {err:.2e}); resample it"
        )


def ik_map_for(chain, eps: float = IK_CLIP_EPS):
    """Pick the analytic IK map matching a chain's structure."""
    if isinstance(chain, PlanarChain):
        return PlanarIKMap(chain, eps)
    return ScaledArmIKMap(chain, eps)


def probe_reachability(ik_map, pose, psi, branch: Branch):
    """Pre-clamp probe values of ``ik_map`` at ``(pose, psi, branch)``."""
    return ik_map.probes(pose, psi, branch)


__all__ = [
    "Branch", "IKResult", "SRSArm", "PlanarIKMap", "ScaledArmIKMap", "SingularConfigurationError",
    "all_branches", "arccos_probes", "planar3r_ik", "planar_chain_ik", "srs7_ik",
    "srs7_self_motion_angle", "ik_map_for", "probe_reachability", "IK_CLIP_EPS",
]

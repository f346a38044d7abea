"""Inverse kinematics as a nonlinear program, in joint space or through an analytic IK map."""
from .geometry import EulerRPY, Pose2, Pose3, compose, rotation_from_rpy, rpy_from_rotation
from .kinematics import DHLink, KinematicChain, PlanarChain, forward_kinematics, planar_fk, scaled_arm
from .analytic_ik import Branch, IKResult, PlanarIKMap, ScaledArmIKMap, ik_map_for

__version__ = "0.1.0"

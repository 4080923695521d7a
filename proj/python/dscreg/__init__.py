"""Seeded spectral-matching rigid registration for 3D correspondences."""

from ._core import (
    AllHypothesesDegenerate,
    DegenerateConfiguration,
    Error,
    InvalidArgument,
    ParseError,
    RegistrationReport,
    RigidTransform,
    __version__,
    compatibility_matrix,
    generate_scene,
    leading_eigenvector,
    ransac,
    read_correspondences,
    read_point_cloud,
    register,
    rotation_error,
    spectral_matching,
    translation_error,
    weighted_kabsch,
)

__all__ = [
    "AllHypothesesDegenerate",
    "DegenerateConfiguration",
    "Error",
    "InvalidArgument",
    "ParseError",
    "RegistrationReport",
    "RigidTransform",
    "compatibility_matrix",
    "generate_scene",
    "leading_eigenvector",
    "ransac",
    "read_correspondences",
    "read_point_cloud",
    "register",
    "rotation_error",
    "spectral_matching",
    "translation_error",
    "weighted_kabsch",
]

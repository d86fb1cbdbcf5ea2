"""Matrix-weighted Besov analysis under expansive (anisotropic) dilations."""

__version__ = "0.1.0"

from .dilation import (
    BallFamily,
    DilatedCube,
    Dilation,
    build_ball_family,
    cube_containing,
    cubes_at_scale,
    eccentricity_constants,
    preset_dilation,
    step_quasi_norm,
    validate_dilation,
)

__all__ = [
    "BallFamily",
    "DilatedCube",
    "Dilation",
    "build_ball_family",
    "cube_containing",
    "cubes_at_scale",
    "eccentricity_constants",
    "preset_dilation",
    "step_quasi_norm",
    "validate_dilation",
    "__version__",
]

"""Python bindings for the CFIN super-resolution library."""

from ._cfin import (
    ArchiveError,
    Model,
    ModelConfig,
    ShapeError,
    bicubic_resize,
    gradcheck,
    gradcheck_suites,
    psnr,
    rgb_to_y,
    ssim,
)

__all__ = [
    "ArchiveError",
    "Model",
    "ModelConfig",
    "ShapeError",
    "bicubic_resize",
    "gradcheck",
    "gradcheck_suites",
    "psnr",
    "rgb_to_y",
    "ssim",
]

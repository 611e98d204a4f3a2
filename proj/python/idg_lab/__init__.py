# SPDX-License-Identifier: Apache-2.0
"""Image difference grounding laboratory: python surface over the C++ core."""

from ._core import (
    BoxXYXY,
    dem_forward,
    evaluate_files,
    generate_dataset,
    giou,
    gradcheck_dem,
    hungarian,
    iou,
)

__all__ = [
    "BoxXYXY",
    "dem_forward",
    "evaluate_files",
    "generate_dataset",
    "giou",
    "gradcheck_dem",
    "hungarian",
    "iou",
]

from __future__ import annotations

import pytest

from gestpipe.ingest import BBox, PipelineConfig


@pytest.fixture
def cfg() -> PipelineConfig:
    return PipelineConfig().validated()


def make_box(x1=0.0, y1=0.0, x2=10.0, y2=10.0) -> BBox:
    return BBox(x1, y1, x2, y2)


def boxes_with_exact_iou(num: int, den: int, height: int = 10) -> tuple[BBox, BBox]:
    """Two integer-coordinate boxes whose IoU is exactly num/den.

    Both boxes are (den + num) wide; the second is shifted by (den - num), so
    intersection = 2*num*h and union = 2*den*h. Integer arithmetic keeps the
    quotient exactly equal to the float nearest num/den, which makes strict
    threshold comparisons deterministic.
    """
    width = den + num
    shift = den - num
    a = BBox(0, 0, width, height)
    b = BBox(shift, 0, shift + width, height)
    return a, b

"""Infinitesimal strain tensor of a flow field and its per-pixel magnitude.

The displacement field is the per-frame flow (p horizontal, q vertical).
The tensor is the symmetrized spatial gradient: normal components are the
axis-aligned stretch rates, the shear component is half the sum of the cross
derivatives.  Rigid motion (translation, rotation) yields zero strain, which
is what makes the magnitude image a detector of local non-rigid deformation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flow import FlowField


class StrainError(Exception):
    pass


@dataclass
class StrainTensorField:
    e_xx: np.ndarray
    e_yy: np.ndarray
    e_xy: np.ndarray   # == e_yy's shear partner; e_yx is the identical array
    e_yx: np.ndarray

    @property
    def height(self) -> int:
        return self.e_xx.shape[0]

    @property
    def width(self) -> int:
        return self.e_xx.shape[1]


@dataclass
class StrainImage:
    s: np.ndarray      # per-pixel magnitude, >= 0

    @property
    def height(self) -> int:
        return self.s.shape[0]

    @property
    def width(self) -> int:
        return self.s.shape[1]


def compute_strain(f: FlowField) -> StrainTensorField:
    """Symmetrized gradient of (p, q); central differences, one-sided at borders.

    The two shear entries are produced by a single expression and share one
    array, so they are bit-identical by construction.
    """
    if f.height < 3 or f.width < 3:
        raise StrainError(f"flow field too small for strain: {f.height}x{f.width} (need >= 3x3)")
    e_xx = np.gradient(f.p, axis=1)
    e_yy = np.gradient(f.q, axis=0)
    shear = 0.5 * (np.gradient(f.p, axis=0) + np.gradient(f.q, axis=1))
    return StrainTensorField(e_xx=e_xx, e_yy=e_yy, e_xy=shear, e_yx=shear)


def strain_magnitude(t: StrainTensorField) -> StrainImage:
    """Root of the summed squares of normal and shear components."""
    s = np.sqrt(t.e_xx ** 2 + t.e_yy ** 2 + t.e_xy ** 2 + t.e_yx ** 2)
    return StrainImage(s=s)


def strain_image_from_flow(f: FlowField) -> StrainImage:
    return strain_magnitude(compute_strain(f))

"""Boundary region models for the fixed design domain.

This module defines the Pydantic models that describe where supports,
tractions and the AM substrate live on the rectangular design domain. The
models only carry the description; `tools.mesh.select_boundary` turns a
selector into concrete node and edge sets for a given mesh.

Example:
    >>> from data_models.boundaries import BoundarySelector, SupportSpec
    >>> substrate = BoundarySelector(kind="bottom-span", x0=0.0, x1=60.0)
    >>> clamp = SupportSpec(selector=BoundarySelector(kind="left-edge"))
    >>> print(clamp.fix_x, clamp.fix_y)
    True True
"""

from typing import Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


SelectorKind = Literal[
    "left-edge",
    "right-edge",
    "bottom-edge",
    "top-edge",
    "bottom-span",
    "top-span",
    "point-load-span",
]

EdgeName = Literal["left", "right", "bottom", "top"]


class BoundarySelector(BaseModel):
    """Description of a region on the boundary of the design domain.

    Attributes:
        kind: Selector kind. Edge kinds take the whole edge; span kinds take
            the nodes of the bottom/top edge with x0 <= x <= x1;
            point-load-span takes the nodes of `edge` whose coordinate along
            that edge lies within `half_width` of `center`.
        x0: Span start (bottom-span / top-span)
        x1: Span end (bottom-span / top-span)
        edge: Edge carrying a point-load-span
        center: Span center measured along `edge`
        half_width: Half length of a point-load-span. None means one element
            on each side of the center.

    Example:
        >>> load = BoundarySelector(kind="point-load-span", edge="right", center=25.0)
    """

    kind: SelectorKind = Field(..., description="Selector kind")
    x0: Optional[float] = Field(default=None, description="Span start coordinate")
    x1: Optional[float] = Field(default=None, description="Span end coordinate")
    edge: Optional[EdgeName] = Field(default=None, description="Edge for point-load-span")
    center: Optional[float] = Field(default=None, description="Point-load-span center")
    half_width: Optional[float] = Field(
        default=None, gt=0, description="Point-load-span half length"
    )

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def validate_kind_fields(self) -> "BoundarySelector":
        """Check that the fields required by `kind` are present.

        Raises:
            ValueError: If a span is missing its bounds or is reversed
        """
        if self.kind in ("bottom-span", "top-span"):
            if self.x0 is None or self.x1 is None:
                raise ValueError(f"{self.kind} requires both x0 and x1")
            if self.x1 < self.x0:
                raise ValueError(f"{self.kind} has x1 ({self.x1}) < x0 ({self.x0})")
        if self.kind == "point-load-span":
            if self.edge is None or self.center is None:
                raise ValueError("point-load-span requires edge and center")
        return self

    def describe(self) -> str:
        """Short human-readable form used in log lines and error messages."""
        if self.kind in ("bottom-span", "top-span"):
            return f"{self.kind}({self.x0:g}, {self.x1:g})"
        if self.kind == "point-load-span":
            hw = "1 element" if self.half_width is None else f"{self.half_width:g}"
            return f"point-load-span({self.edge}, center={self.center:g}, half_width={hw})"
        return self.kind


class SupportSpec(BaseModel):
    """Homogeneous Dirichlet support on a boundary region.

    Attributes:
        selector: Region carrying the support
        fix_x: Constrain the horizontal displacement component
        fix_y: Constrain the vertical displacement component
    """

    selector: BoundarySelector
    fix_x: bool = True
    fix_y: bool = True

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def validate_components(self) -> "SupportSpec":
        """A support must constrain at least one component."""
        if not (self.fix_x or self.fix_y):
            raise ValueError("support must fix at least one of fix_x / fix_y")
        return self


class TractionSpec(BaseModel):
    """Surface traction applied on a boundary region (force per unit length).

    Attributes:
        selector: Region carrying the traction (Γ_t)
        traction: Traction vector (t_x, t_y)
    """

    selector: BoundarySelector
    traction: Tuple[float, float] = Field(
        default=(0.0, -10.0), description="Traction vector (force/length)"
    )

    model_config = ConfigDict(extra="forbid", frozen=True)

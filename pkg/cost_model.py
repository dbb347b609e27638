"""
Cost Model
Detection, move, division, appearance and disappearance costs from detection features
"""

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field

from instance_model import (
    ConflictSet,
    Detection,
    DetectionId,
    Instance,
    InstanceValidationError,
    Transition,
    validate,
)


@dataclass(frozen=True)
class DetectionFeatures:
    """Geometric features of a segmentation hypothesis, in pixels and radians"""
    area: float
    convex_hull_area: float
    centroid: Tuple[float, float]
    orientation: float = 0.0
    boundary_distance: float = 0.0

    def __post_init__(self):
        if not self.area > 0:
            raise ValueError(f"area must be positive, got {self.area}")
        if self.convex_hull_area < self.area:
            raise ValueError(f"convex hull area {self.convex_hull_area} is smaller than area {self.area}")
        if self.boundary_distance < 0:
            raise ValueError(f"boundary distance must be >= 0, got {self.boundary_distance}")


class _Coefficients(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)


class DetectionCoefficients(_Coefficients):
    alpha: float = Field(1.0, description="Reward per pixel of area")
    beta: float = Field(1.0, description="Penalty per pixel of non-convexity")
    gamma: float = Field(0.01, description="Quadratic penalty above the expected maximal area")
    max_area: float = Field(500.0, gt=0, description="Expected maximal cell area A")


class MoveCoefficients(_Coefficients):
    alpha: float = Field(0.5, description="Penalty per pixel of area change")
    beta: float = Field(1.0, description="Penalty per squared pixel of displacement")


class DivisionCoefficients(_Coefficients):
    alpha: float = Field(20.0, description="Constant division penalty")
    beta: float = Field(0.5, description="Mother vs. summed daughter area mismatch")
    gamma: float = Field(0.5, description="Daughter area difference")
    kappa: float = Field(0.001, description="Squared daughter area difference")
    rho: float = Field(1.0, description="Mother-daughter squared displacement")
    sigma: float = Field(0.1, description="Daughter-daughter squared displacement")
    tau: float = Field(5.0, description="Orientation mismatch of the division axis")


class BoundaryCoefficients(_Coefficients):
    alpha: float = Field(0.5, description="Penalty per pixel of area")
    beta: float = Field(2.0, description="Penalty per square root of boundary distance")
    gamma: float = Field(1.0, description="Penalty per pixel of boundary distance")


class CostParams(BaseModel):
    """All free coefficients of the cost formulas"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    detection: DetectionCoefficients = DetectionCoefficients()
    move: MoveCoefficients = MoveCoefficients()
    division: DivisionCoefficients = DivisionCoefficients()
    appearance: BoundaryCoefficients = BoundaryCoefficients()
    disappearance: BoundaryCoefficients = BoundaryCoefficients()


def _squared_distance(p: Sequence[float], q: Sequence[float]) -> float:
    return (p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2


def division_axis_mismatch(mother: DetectionFeatures, d1: DetectionFeatures, d2: DetectionFeatures) -> float:
    """
    Angle between the mother's orientation axis and the axis through both
    daughter centroids, folded to [0, pi/2]. Zero when the daughters coincide.
    """
    dx = d2.centroid[0] - d1.centroid[0]
    dy = d2.centroid[1] - d1.centroid[1]
    if dx == 0 and dy == 0:
        return 0.0
    angle = abs(mother.orientation - math.atan2(dy, dx)) % math.pi
    return min(angle, math.pi - angle)


def detection_cost(f: DetectionFeatures, p: CostParams) -> float:
    c = p.detection
    return (
        -c.alpha * f.area
        + c.beta * abs(f.convex_hull_area - f.area)
        + c.gamma * max(0.0, f.area - c.max_area) ** 2
    )


def move_cost(f1: DetectionFeatures, f2: DetectionFeatures, p: CostParams) -> float:
    # displacement enters squared
    return p.move.alpha * abs(f1.area - f2.area) + p.move.beta * _squared_distance(f1.centroid, f2.centroid)


def division_cost(fm: DetectionFeatures, fd1: DetectionFeatures, fd2: DetectionFeatures, p: CostParams) -> float:
    c = p.division
    daughter_diff = abs(fd1.area - fd2.area)
    return (
        c.alpha
        + c.beta * abs(fm.area - fd1.area - fd2.area)
        + c.gamma * daughter_diff
        + c.kappa * daughter_diff ** 2
        + 0.5 * c.rho * (_squared_distance(fm.centroid, fd1.centroid) + _squared_distance(fm.centroid, fd2.centroid))
        + c.sigma * _squared_distance(fd1.centroid, fd2.centroid)
        + c.tau * division_axis_mismatch(fm, fd1, fd2)
    )


def _boundary_cost(f: DetectionFeatures, c: BoundaryCoefficients) -> float:
    return c.alpha * f.area + c.beta * math.sqrt(f.boundary_distance) + c.gamma * f.boundary_distance


def appearance_cost(f: DetectionFeatures, p: CostParams) -> float:
    return _boundary_cost(f, p.appearance)


def disappearance_cost(f: DetectionFeatures, p: CostParams) -> float:
    return _boundary_cost(f, p.disappearance)


@dataclass
class LinkCandidates:
    """
    Candidate structure over per-frame feature lists, indices 0-based within
    their frame and frames 1-based: moves (frame, source, target), divisions
    (frame, source, child1, child2), conflicts (frame, members).
    """
    moves: List[Tuple[int, int, int]] = field(default_factory=list)
    divisions: List[Tuple[int, int, int, int]] = field(default_factory=list)
    conflicts: List[Tuple[int, Tuple[int, ...]]] = field(default_factory=list)


def build_instance(
    frames: Sequence[Sequence[DetectionFeatures]],
    links: LinkCandidates,
    p: CostParams
) -> Instance:
    """
    Apply all cost formulas and assemble a validated instance.

    Raises:
        InstanceValidationError: if the candidates do not form a valid instance
    """
    detections = tuple(
        Detection(
            DetectionId(t, i),
            detection_cost(f, p),
            appearance_cost(f, p),
            disappearance_cost(f, p),
        )
        for t, feats in enumerate(frames, start=1)
        for i, f in enumerate(feats)
    )

    def features(t: int, i: int) -> DetectionFeatures:
        if not (1 <= t <= len(frames) and 0 <= i < len(frames[t - 1])):
            raise ValueError(f"link candidate references unknown detection {t}:{i}")
        return frames[t - 1][i]

    transitions = [
        Transition.move(DetectionId(t, s), DetectionId(t + 1, d), move_cost(features(t, s), features(t + 1, d), p))
        for t, s, d in links.moves
    ]
    transitions += [
        Transition.division(
            DetectionId(t, s), DetectionId(t + 1, d1), DetectionId(t + 1, d2),
            division_cost(features(t, s), features(t + 1, d1), features(t + 1, d2), p),
        )
        for t, s, d1, d2 in links.divisions
    ]
    conflicts = tuple(ConflictSet.of([DetectionId(t, i) for i in members]) for t, members in links.conflicts)

    instance = Instance(max(1, len(frames)), detections, tuple(transitions), conflicts)
    report = validate(instance)
    if not report.ok:
        raise InstanceValidationError(report)
    return instance

"""
Instance Model for Tracking-by-Assignment
Detections, transitions, conflict sets, validation, feasibility and energy
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import networkx as nx

logger = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class DetectionId:
    """A segmentation hypothesis, addressed by frame (1-based) and index within the frame"""
    frame: int
    index: int

    def __str__(self) -> str:
        return f"{self.frame}:{self.index}"


@dataclass(frozen=True)
class Detection:
    id: DetectionId
    cost: float
    appearance_cost: float = 0.0
    disappearance_cost: float = 0.0


class TransitionKind(Enum):
    MOVE = "MOVE"
    DIVISION = "DIV"


@dataclass(frozen=True)
class Transition:
    """
    A move (one target) or a division (two targets) between consecutive frames.
    Division targets are kept sorted so that equal divisions compare equal.
    """
    kind: TransitionKind
    source: DetectionId
    targets: Tuple[DetectionId, ...]
    cost: float

    @classmethod
    def move(cls, source: DetectionId, target: DetectionId, cost: float) -> "Transition":
        return cls(TransitionKind.MOVE, source, (target,), cost)

    @classmethod
    def division(
        cls,
        source: DetectionId,
        child1: DetectionId,
        child2: DetectionId,
        cost: float
    ) -> "Transition":
        return cls(TransitionKind.DIVISION, source, tuple(sorted((child1, child2))), cost)

    @property
    def endpoints(self) -> Tuple[DetectionId, ...]:
        return (self.source,) + self.targets

    @property
    def key(self) -> Tuple:
        """Identity of the transition ignoring its cost"""
        return (self.kind, self.source, self.targets)


@dataclass(frozen=True)
class ConflictSet:
    frame: int
    members: Tuple[DetectionId, ...]

    @classmethod
    def of(cls, members: Sequence[DetectionId]) -> "ConflictSet":
        members = tuple(sorted(members))
        return cls(members[0].frame if members else 0, members)


@dataclass(frozen=True)
class Instance:
    """
    The standard ILP model: detections per frame, move/division candidates and
    conflict sets. Lookup tables are built lazily and cached.
    """
    frame_count: int
    detections: Tuple[Detection, ...] = ()
    transitions: Tuple[Transition, ...] = ()
    conflicts: Tuple[ConflictSet, ...] = ()

    @cached_property
    def detection_index(self) -> Dict[DetectionId, int]:
        return {d.id: i for i, d in enumerate(self.detections)}

    @cached_property
    def detections_by_frame(self) -> Dict[int, List[DetectionId]]:
        frames: Dict[int, List[DetectionId]] = defaultdict(list)
        for det in self.detections:
            frames[det.id.frame].append(det.id)
        for ids in frames.values():
            ids.sort()
        return dict(frames)

    @cached_property
    def incoming(self) -> Dict[DetectionId, List[int]]:
        result: Dict[DetectionId, List[int]] = defaultdict(list)
        for k, tr in enumerate(self.transitions):
            for target in tr.targets:
                result[target].append(k)
        return dict(result)

    @cached_property
    def outgoing(self) -> Dict[DetectionId, List[int]]:
        result: Dict[DetectionId, List[int]] = defaultdict(list)
        for k, tr in enumerate(self.transitions):
            result[tr.source].append(k)
        return dict(result)

    @property
    def variable_count(self) -> int:
        """Number of binary variables of the standard model"""
        return len(self.detections) + len(self.transitions)

    def detection(self, det_id: DetectionId) -> Detection:
        return self.detections[self.detection_index[det_id]]

    def with_costs(
        self,
        detection_costs: Sequence[float],
        transition_costs: Sequence[float]
    ) -> "Instance":
        """Same structure, new detection and transition costs"""
        detections = tuple(
            Detection(d.id, float(c), d.appearance_cost, d.disappearance_cost)
            for d, c in zip(self.detections, detection_costs)
        )
        transitions = tuple(
            Transition(t.kind, t.source, t.targets, float(c))
            for t, c in zip(self.transitions, transition_costs)
        )
        return Instance(self.frame_count, detections, transitions, self.conflicts)


@dataclass(frozen=True)
class Assignment:
    """0/1 valuation of every detection and every transition (by transition index)"""
    detection_on: Mapping[DetectionId, int]
    transition_on: Tuple[int, ...]

    @classmethod
    def all_off(cls, instance: Instance) -> "Assignment":
        return cls(
            {d.id: 0 for d in instance.detections},
            tuple(0 for _ in instance.transitions)
        )

    def active_detections(self) -> List[DetectionId]:
        return sorted(d for d, on in self.detection_on.items() if on)

    def active_transitions(self) -> List[int]:
        return [k for k, on in enumerate(self.transition_on) if on]


# ============================================================
# Reports
# ============================================================

@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    record: Optional[object] = None

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


@dataclass
class ValidationReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, message: str, record: Optional[object] = None):
        self.violations.append(Violation(code, message, record))


@dataclass
class FeasibilityReport:
    violations: List[Violation] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def add(self, code: str, message: str, record: Optional[object] = None):
        self.violations.append(Violation(code, message, record))


class InstanceValidationError(ValueError):
    """Raised when an instance violates a structural invariant"""

    def __init__(self, report: ValidationReport):
        self.report = report
        details = "; ".join(str(v) for v in report.violations[:5])
        more = len(report.violations) - 5
        if more > 0:
            details += f" (+{more} more)"
        super().__init__(f"invalid instance: {details}")


class EnergyReport(NamedTuple):
    energy: float
    feasibility: FeasibilityReport

    @property
    def feasible(self) -> bool:
        return self.feasibility.feasible


# ============================================================
# Operations
# ============================================================

def validate(instance: Instance) -> ValidationReport:
    """
    List every violated structural invariant of an instance.

    Args:
        instance: Instance to check

    Returns:
        Report; empty iff the instance is well-formed
    """
    report = ValidationReport()
    T = instance.frame_count
    if T < 1:
        report.add("frame count", f"frame count must be >= 1, got {T}")

    known = set()
    for det in instance.detections:
        if det.id in known:
            report.add("duplicate detection", f"detection {det.id} defined twice", det)
        known.add(det.id)
        if not 1 <= det.id.frame <= T:
            report.add("frame out of range", f"detection {det.id} outside frames 1..{T}", det)
        costs = (det.cost, det.appearance_cost, det.disappearance_cost)
        if not all(math.isfinite(c) for c in costs):
            report.add("non-finite cost", f"detection {det.id} has a non-finite cost", det)
        elif det.appearance_cost < 0 or det.disappearance_cost < 0:
            report.add("negative boundary cost", f"detection {det.id} has a negative appearance/disappearance cost", det)

    seen = set()
    for tr in instance.transitions:
        for end in tr.endpoints:
            if end not in known:
                report.add("dangling id", f"{tr.kind.value} references unknown detection {end}", tr)
        if any(t.frame != tr.source.frame + 1 for t in tr.targets):
            report.add("non-consecutive frames", f"{tr.kind.value} from {tr.source} does not end in frame {tr.source.frame + 1}", tr)
        expected = 1 if tr.kind is TransitionKind.MOVE else 2
        if len(tr.targets) != expected:
            report.add("malformed transition", f"{tr.kind.value} from {tr.source} needs {expected} target(s)", tr)
        elif tr.kind is TransitionKind.DIVISION and tr.targets[0] == tr.targets[1]:
            report.add("equal division children", f"division from {tr.source} has identical children", tr)
        if not math.isfinite(tr.cost):
            report.add("non-finite cost", f"{tr.kind.value} from {tr.source} has a non-finite cost", tr)
        key = (tr.kind, tr.source, tuple(sorted(tr.targets)))
        if key in seen:
            report.add("duplicate transition", f"{tr.kind.value} from {tr.source} to {', '.join(map(str, tr.targets))} listed twice", tr)
        seen.add(key)

    for conf in instance.conflicts:
        if len(set(conf.members)) != len(conf.members):
            report.add("repeated member", f"conflict set in frame {conf.frame} repeats a member", conf)
        if len(set(conf.members)) < 2:
            report.add("conflict too small", f"conflict set in frame {conf.frame} has fewer than 2 members", conf)
        for member in conf.members:
            if member not in known:
                report.add("dangling id", f"conflict set references unknown detection {member}", conf)
            if member.frame != conf.frame:
                report.add("cross-frame conflict", f"conflict set of frame {conf.frame} contains {member}", conf)

    return report


def check_feasible(instance: Instance, x: Assignment) -> FeasibilityReport:
    """
    Check an assignment against the activation, uniqueness and conflict constraints.
    Every violated constraint gets its own entry.
    """
    report = FeasibilityReport()
    on = x.detection_on

    missing = [d.id for d in instance.detections if d.id not in on]
    if missing or len(x.transition_on) != len(instance.transitions):
        report.add("totality", f"assignment misses {len(missing)} detection(s) or has {len(x.transition_on)} of {len(instance.transitions)} transition values")
        return report

    in_count: Dict[DetectionId, int] = defaultdict(int)
    out_count: Dict[DetectionId, int] = defaultdict(int)
    for k, tr in enumerate(instance.transitions):
        if not x.transition_on[k]:
            continue
        if not on[tr.source]:
            report.add("activation", f"active {tr.kind.value} #{k} leaves inactive detection {tr.source}", tr)
        for target in tr.targets:
            if not on[target]:
                report.add("activation", f"active {tr.kind.value} #{k} enters inactive detection {target}", tr)
            in_count[target] += 1
        out_count[tr.source] += 1

    for det_id, n in sorted(in_count.items()):
        if n > 1:
            report.add("uniqueness", f"detection {det_id} has {n} active incoming transitions", det_id)
    for det_id, n in sorted(out_count.items()):
        if n > 1:
            report.add("uniqueness", f"detection {det_id} has {n} active outgoing transitions", det_id)

    for conf in instance.conflicts:
        active = [m for m in conf.members if on[m]]
        if len(active) > 1:
            report.add("conflict", f"conflict set in frame {conf.frame} has {len(active)} active members ({', '.join(map(str, active))})", conf)

    return report


def evaluate_energy(instance: Instance, x: Assignment) -> EnergyReport:
    """Energy together with the feasibility report of the assignment"""
    return EnergyReport(energy(instance, x), check_feasible(instance, x))


def energy(instance: Instance, x: Assignment) -> float:
    """
    Objective of the standard model.

    Sum of active detection and transition costs, plus the appearance cost of
    every active detection without active incoming transition (frames > 1) and
    the disappearance cost of every active detection without active outgoing
    transition (frames < T).
    """
    T = instance.frame_count
    has_in = set()
    has_out = set()
    total = 0.0
    for k, tr in enumerate(instance.transitions):
        if x.transition_on[k]:
            total += tr.cost
            has_out.add(tr.source)
            has_in.update(tr.targets)
    for det in instance.detections:
        if not x.detection_on.get(det.id, 0):
            continue
        total += det.cost
        if det.id.frame > 1 and det.id not in has_in:
            total += det.appearance_cost
        if det.id.frame < T and det.id not in has_out:
            total += det.disappearance_cost
    return total


# ============================================================
# Summary statistics
# ============================================================

@dataclass(frozen=True)
class InstanceStats:
    frame_count: int
    detections_per_frame: Tuple[int, ...]
    conflicts_per_frame: Tuple[int, ...]
    largest_conflict_clique: int
    moves: int
    divisions: int


def conflict_cliques(instance: Instance, frame: int) -> List[List[DetectionId]]:
    """
    Transitive conflict cliques of a frame: detections connected through
    chains of overlapping conflict sets. Unconflicted detections are omitted.
    """
    graph = nx.Graph()
    for conf in instance.conflicts:
        if conf.frame != frame:
            continue
        graph.add_nodes_from(conf.members)
        first = conf.members[0]
        graph.add_edges_from((first, m) for m in conf.members[1:])
    return [sorted(c) for c in nx.connected_components(graph)]


def summarize(instance: Instance) -> InstanceStats:
    T = instance.frame_count
    by_frame = instance.detections_by_frame
    conflicts = defaultdict(int)
    for conf in instance.conflicts:
        conflicts[conf.frame] += 1
    largest = 0
    for t in range(1, T + 1):
        for clique in conflict_cliques(instance, t):
            largest = max(largest, len(clique))
    moves = sum(1 for tr in instance.transitions if tr.kind is TransitionKind.MOVE)
    return InstanceStats(
        frame_count=T,
        detections_per_frame=tuple(len(by_frame.get(t, ())) for t in range(1, T + 1)),
        conflicts_per_frame=tuple(conflicts[t] for t in range(1, T + 1)),
        largest_conflict_clique=largest,
        moves=moves,
        divisions=len(instance.transitions) - moves,
    )


def relative_gap(primal: float, dual: float) -> float:
    """(primal - dual) / |dual|, 0 when the bounds coincide"""
    diff = primal - dual
    if abs(diff) <= 1e-12 * (1 + abs(dual)):
        return 0.0
    if dual == 0:
        return math.inf
    return diff / abs(dual)

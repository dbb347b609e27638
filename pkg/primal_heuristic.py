"""
Primal Heuristic
Conflict resolution, score-ordered greedy transition assignment and propagation
"""

import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from decomposition import (
    DecomposedGraph,
    DetectionFactorState,
    Direction,
    Reparametrization,
    ReparametrizedCosts,
    SolverInvariantError,
    min_active_detection_factor,
)
from instance_model import Assignment, TransitionKind, check_feasible, energy
from set_packing import PackingProblem, solve_packing

logger = logging.getLogger(__name__)

BOTH_DIRECTIONS = (Direction.FORWARD, Direction.BACKWARD)


class PrimalInfeasibleError(SolverInvariantError):
    """The primal heuristic produced an assignment violating the model constraints"""


class DetectionStatus(IntEnum):
    OFF = 0
    ON_UNASSIGNED = 1
    ON_ASSIGNED = 2


class PrimalSolution(NamedTuple):
    assignment: Assignment
    energy: float
    direction: Direction


@dataclass
class PartialAssignment:
    """
    Per-detection status plus the transition (index) claimed on the incoming
    and outgoing side, -1 when unclaimed.
    """
    status: np.ndarray
    claimed_in: np.ndarray
    claimed_out: np.ndarray

    @classmethod
    def empty(cls, graph: DecomposedGraph) -> "PartialAssignment":
        n = graph.detection_count
        return cls(
            np.full(n, DetectionStatus.ON_UNASSIGNED, dtype=np.int8),
            np.full(n, -1, dtype=np.intp),
            np.full(n, -1, dtype=np.intp),
        )

    def state_of(self, graph: DecomposedGraph, u: int) -> Optional[DetectionFactorState]:
        """Factor state of an assigned detection, None while unassigned"""
        if self.status[u] == DetectionStatus.ON_UNASSIGNED:
            return None
        if self.status[u] == DetectionStatus.OFF:
            return DetectionFactorState()
        ins = list(graph.in_slot_transition[graph.in_range(u)])
        outs = list(graph.out_slot_transition[graph.out_range(u)])
        in_choice = ins.index(self.claimed_in[u]) if self.claimed_in[u] >= 0 else None
        out_choice = outs.index(self.claimed_out[u]) if self.claimed_out[u] >= 0 else None
        return DetectionFactorState(1, in_choice, out_choice)

    def to_assignment(self, graph: DecomposedGraph) -> Assignment:
        instance = graph.instance
        detection_on = {
            det_id: int(self.status[u] == DetectionStatus.ON_ASSIGNED)
            for u, det_id in enumerate(graph.det_ids)
        }
        transition_on = tuple(
            int(self.claimed_out[graph.det_pos[tr.source]] == k)
            for k, tr in enumerate(instance.transitions)
        )
        return Assignment(detection_on, transition_on)


def score_detections(graph: DecomposedGraph, costs: ReparametrizedCosts, frame: int) -> np.ndarray:
    """
    Cost of the locally best state of each detection of a frame, conditioned on
    the detection being active.
    """
    return np.array(
        [min_active_detection_factor(costs.detection(u)).value for u in graph.frames[frame - 1]],
        dtype=np.float64,
    )


def resolve_conflicts(
    graph: DecomposedGraph,
    costs: ReparametrizedCosts,
    frame: int,
    scores: Optional[np.ndarray] = None
) -> np.ndarray:
    """
    Weighted set packing over the scores of a frame.

    Returns:
        0/1 vector aligned with graph.frames[frame - 1]; 0 means the detection is switched off
    """
    dets = graph.frames[frame - 1]
    if scores is None:
        scores = score_detections(graph, costs, frame)
    local = {int(u): i for i, u in enumerate(dets)}
    conflicts = [
        [local[int(u)] for u in graph.conf_slot_det[graph.conf_range(c)]]
        for c in graph.conflicts_by_frame[frame - 1]
    ]
    return solve_packing(PackingProblem.of(scores, conflicts))


def assign_frame(
    graph: DecomposedGraph,
    costs: ReparametrizedCosts,
    frame: int,
    direction: Direction,
    partial: PartialAssignment
) -> PartialAssignment:
    """
    Run the primal heuristic for one frame, in place.

    Frames before this one (in direction order) must be assigned. Detections
    kept by the set packing are processed by ascending score (ties by index);
    each picks its cheapest state among the options that respect the claims
    already made, and its choice is propagated to the other endpoints.
    """
    dets = graph.frames[frame - 1]
    if not len(dets):
        return partial
    scores = score_detections(graph, costs, frame)
    mu = resolve_conflicts(graph, costs, frame, scores)

    status = partial.status
    for u, keep in zip(dets, mu):
        if not keep:
            status[u] = DetectionStatus.OFF

    order = sorted(range(len(dets)), key=lambda i: (scores[i], i))
    for i in order:
        u = int(dets[i])
        if status[u] != DetectionStatus.ON_UNASSIGNED:
            continue
        if direction is Direction.FORWARD:
            _assign_forward(graph, costs, partial, u)
        else:
            _assign_backward(graph, costs, partial, u)
    return partial


def _assign_forward(graph: DecomposedGraph, costs: ReparametrizedCosts, partial: PartialAssignment, u: int):
    instance = graph.instance
    status, claimed_in, claimed_out = partial.status, partial.claimed_in, partial.claimed_out
    dc = costs.detection(u)

    best_cost, best = 0.0, None
    for local, k in enumerate(graph.in_slot_transition[graph.in_range(u)]):
        tr = instance.transitions[k]
        source = graph.det_pos[tr.source]
        if status[source] != DetectionStatus.ON_ASSIGNED or claimed_out[source] >= 0:
            continue
        sibling = None
        if tr.kind is TransitionKind.DIVISION:
            sibling = next(graph.det_pos[t] for t in tr.targets if graph.det_pos[t] != u)
            if status[sibling] != DetectionStatus.ON_UNASSIGNED or claimed_in[sibling] >= 0:
                continue
        if dc.in_[local] < best_cost:
            best_cost, best = float(dc.in_[local]), (int(k), source, sibling)

    free_out = min(0.0, float(dc.out.min())) if len(dc.out) else 0.0
    if dc.det + best_cost + free_out >= 0:
        status[u] = DetectionStatus.OFF
        return
    status[u] = DetectionStatus.ON_ASSIGNED
    if best is not None:
        k, source, sibling = best
        claimed_in[u] = k
        claimed_out[source] = k
        if sibling is not None:
            claimed_in[sibling] = k
            status[sibling] = DetectionStatus.ON_ASSIGNED


def _assign_backward(graph: DecomposedGraph, costs: ReparametrizedCosts, partial: PartialAssignment, u: int):
    instance = graph.instance
    status, claimed_in, claimed_out = partial.status, partial.claimed_in, partial.claimed_out
    dc = costs.detection(u)

    best_cost, best = 0.0, None
    for local, k in enumerate(graph.out_slot_transition[graph.out_range(u)]):
        children = [graph.det_pos[t] for t in instance.transitions[k].targets]
        if any(status[c] != DetectionStatus.ON_ASSIGNED or claimed_in[c] >= 0 for c in children):
            continue
        if dc.out[local] < best_cost:
            best_cost, best = float(dc.out[local]), (int(k), children)

    free_in = min(0.0, float(dc.in_.min())) if len(dc.in_) else 0.0
    if dc.det + best_cost + free_in >= 0:
        status[u] = DetectionStatus.OFF
        return
    status[u] = DetectionStatus.ON_ASSIGNED
    if best is not None:
        k, children = best
        claimed_out[u] = k
        for c in children:
            claimed_in[c] = k


def _finalize(costs: ReparametrizedCosts, partial: PartialAssignment):
    # leftovers can only take the isolated state: every neighbour is settled
    for u in np.flatnonzero(partial.status == DetectionStatus.ON_UNASSIGNED):
        on = costs.det[u] < 0 and partial.claimed_in[u] < 0 and partial.claimed_out[u] < 0
        partial.status[u] = DetectionStatus.ON_ASSIGNED if on else DetectionStatus.OFF


def _frame_order(graph: DecomposedGraph, direction: Direction) -> Iterable[int]:
    frames = range(1, graph.frame_count + 1)
    return frames if direction is Direction.FORWARD else reversed(frames)


def _complete(graph: DecomposedGraph, costs: ReparametrizedCosts, partial: PartialAssignment, direction: Direction) -> PrimalSolution:
    _finalize(costs, partial)
    x = partial.to_assignment(graph)
    report = check_feasible(graph.instance, x)
    if not report.feasible:
        raise PrimalInfeasibleError(
            f"{direction.value} primal assignment is infeasible: "
            + "; ".join(str(v) for v in report.violations[:3])
        )
    return PrimalSolution(x, energy(graph.instance, x), direction)


def primal_in_direction(graph: DecomposedGraph, costs: ReparametrizedCosts, direction: Direction) -> PrimalSolution:
    partial = PartialAssignment.empty(graph)
    for t in _frame_order(graph, direction):
        assign_frame(graph, costs, t, direction, partial)
    return _complete(graph, costs, partial, direction)


def extract_primal(
    graph: DecomposedGraph,
    lam: Reparametrization,
    directions: Sequence[Direction] = BOTH_DIRECTIONS
) -> PrimalSolution:
    """
    Feasible assignment from the current dual vector.

    Runs the frame loop in each requested direction and keeps the solution with
    the lower energy under the original costs (forward wins ties).

    Raises:
        PrimalInfeasibleError: if a direction yields an infeasible assignment
    """
    costs = graph.reparametrize(lam)
    best = None
    for direction in directions:
        solution = primal_in_direction(graph, costs, direction)
        logger.debug("%s primal energy %.10g", direction.value, solution.energy)
        if best is None or solution.energy < best.energy:
            best = solution
    return best


class FramePrimalEstimator:
    """
    Primal estimation synchronized with a dual sweep: called once per frame,
    in sweep order, after the frame's conflict updates.
    """

    def __init__(self, graph: DecomposedGraph, direction: Direction):
        self.graph = graph
        self.direction = direction
        self.partial = PartialAssignment.empty(graph)
        self._costs = None

    def __call__(self, frame: int, costs: ReparametrizedCosts):
        self._costs = costs
        assign_frame(self.graph, costs, frame, self.direction, self.partial)

    def finish(self) -> PrimalSolution:
        costs = self._costs if self._costs is not None else self.graph.reparametrize(Reparametrization.zeros(self.graph))
        return _complete(self.graph, costs, self.partial, self.direction)

"""
Lagrange Decomposition of the Tracking Problem
Detection factors, conflict factors, split costs and the dual vector
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from instance_model import (
    Assignment,
    DetectionId,
    Instance,
    InstanceValidationError,
    TransitionKind,
    validate,
)

logger = logging.getLogger(__name__)


class SolverInvariantError(RuntimeError):
    """An internal guarantee of the solver does not hold (a bug, not bad input)"""


class Direction(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


# ============================================================
# Factor states and cost views
# ============================================================

@dataclass(frozen=True)
class DetectionFactorState:
    """
    State of a detection factor. in_choice / out_choice are local slot
    positions (0-based, into the factor's in/out edge lists) or None.
    """
    det: int = 0
    in_choice: Optional[int] = None
    out_choice: Optional[int] = None

    def __post_init__(self):
        if not self.det and (self.in_choice is not None or self.out_choice is not None):
            raise ValueError("an inactive detection cannot choose transitions")


@dataclass(frozen=True)
class ConflictFactorState:
    active_member: Optional[int] = None


class FactorMinimum(NamedTuple):
    value: float
    state: Union[DetectionFactorState, ConflictFactorState]


@dataclass(frozen=True)
class EdgeRef:
    """A transition seen from one detection factor, with its lambda coordinates"""
    transition: int
    kind: TransitionKind
    coords: Tuple[int, ...]


@dataclass(frozen=True)
class DetectionCosts:
    det: float
    in_: np.ndarray
    out: np.ndarray

    def active_cost(self, state: DetectionFactorState) -> float:
        if not state.det:
            return 0.0
        cost = self.det
        if state.in_choice is not None:
            cost += self.in_[state.in_choice]
        if state.out_choice is not None:
            cost += self.out[state.out_choice]
        return float(cost)


@dataclass(frozen=True)
class DetectionFactor:
    id: DetectionId
    det_cost: float
    in_edges: Tuple[Tuple[EdgeRef, float], ...]
    out_edges: Tuple[Tuple[EdgeRef, float], ...]
    conflict_edges: Tuple[int, ...]


@dataclass(frozen=True)
class ConflictFactor:
    id: int
    members: Tuple[DetectionId, ...]
    costs: Tuple[float, ...]


# ============================================================
# Decomposed graph
# ============================================================

class DecomposedGraph:
    """
    Topology and split costs of the decomposition, stored as flat arrays.

    Incoming edge copies ("in slots") of detection u occupy
    in_ptr[u]:in_ptr[u+1], likewise for out slots and for the member slots of
    each conflict factor. Every transition coordinate of lambda belongs to
    exactly one in slot and one out slot; every conflict coordinate to exactly
    one conflict slot and one detection.
    """

    def __init__(self, instance: Instance):
        self.instance = instance
        self.det_ids: List[DetectionId] = [d.id for d in instance.detections]
        self.det_pos: Dict[DetectionId, int] = dict(instance.detection_index)
        n_det = len(self.det_ids)
        T = instance.frame_count

        self.frames: List[np.ndarray] = [
            np.array([self.det_pos[d] for d in instance.detections_by_frame.get(t, ())], dtype=np.intp)
            for t in range(1, T + 1)
        ]

        appearance = np.array([d.appearance_cost if d.id.frame > 1 else 0.0 for d in instance.detections])
        disappearance = np.array([d.disappearance_cost if d.id.frame < T else 0.0 for d in instance.detections])
        self.theta_det = np.array([d.cost for d in instance.detections], dtype=np.float64) + appearance + disappearance

        # lambda layout: transitions in instance order (1 or 2 coords), then conflict edges
        self.transition_coords: List[Tuple[int, ...]] = []
        in_lists: List[List[Tuple[int, int, float]]] = [[] for _ in range(n_det)]
        out_lists: List[List[Tuple[int, Tuple[int, ...], float]]] = [[] for _ in range(n_det)]
        coord = 0
        self.n_moves = self.n_divisions = 0
        for k, tr in enumerate(instance.transitions):
            share = tr.cost / (1 + len(tr.targets))
            coords = tuple(range(coord, coord + len(tr.targets)))
            coord += len(tr.targets)
            self.transition_coords.append(coords)
            if tr.kind is TransitionKind.MOVE:
                self.n_moves += 1
            else:
                self.n_divisions += 1
            source = self.det_pos[tr.source]
            out_lists[source].append((k, coords, share - disappearance[source]))
            for target_id, c in zip(tr.targets, coords):
                target = self.det_pos[target_id]
                in_lists[target].append((k, c, share - appearance[target]))
        self.transition_coord_count = coord

        self.in_ptr = _pointers(len(l) for l in in_lists)
        self.in_slot_transition = np.array([k for l in in_lists for k, _, _ in l], dtype=np.intp)
        self.in_slot_coord = np.array([c for l in in_lists for _, c, _ in l], dtype=np.intp)
        self.theta_in = np.array([v for l in in_lists for _, _, v in l], dtype=np.float64)
        self.in_slot_owner = np.repeat(np.arange(n_det, dtype=np.intp), np.diff(self.in_ptr))

        self.out_ptr = _pointers(len(l) for l in out_lists)
        self.out_slot_transition = np.array([k for l in out_lists for k, _, _ in l], dtype=np.intp)
        self.out_slot_coords: List[Tuple[int, ...]] = [cs for l in out_lists for _, cs, _ in l]
        self.theta_out = np.array([v for l in out_lists for _, _, v in l], dtype=np.float64)
        self.out_slot_owner = np.repeat(np.arange(n_det, dtype=np.intp), np.diff(self.out_ptr))

        self.coord_in_slot = np.empty(coord, dtype=np.intp)
        self.coord_in_slot[self.in_slot_coord] = np.arange(len(self.in_slot_coord), dtype=np.intp)
        self.coord_out_slot = np.empty(coord, dtype=np.intp)
        for slot, coords in enumerate(self.out_slot_coords):
            self.coord_out_slot[list(coords)] = slot

        # conflict factors
        conf_members: List[List[int]] = [[self.det_pos[m] for m in c.members] for c in instance.conflicts]
        self.conf_ptr = _pointers(len(m) for m in conf_members)
        self.conf_slot_det = np.array([u for m in conf_members for u in m], dtype=np.intp)
        n_conf_edges = len(self.conf_slot_det)
        self.conf_slot_coord = np.arange(coord, coord + n_conf_edges, dtype=np.intp)
        self.theta_conf = np.zeros(n_conf_edges, dtype=np.float64)
        self.conf_slot_owner = np.repeat(np.arange(len(conf_members), dtype=np.intp), np.diff(self.conf_ptr))
        self.conflicts_by_frame: List[List[int]] = [[] for _ in range(T)]
        for j, c in enumerate(instance.conflicts):
            self.conflicts_by_frame[c.frame - 1].append(j)

        det_conf: List[List[int]] = [[] for _ in range(n_det)]
        for slot, u in enumerate(self.conf_slot_det):
            det_conf[u].append(coord + slot)
        self.det_conf_ptr = _pointers(len(l) for l in det_conf)
        self.det_conf_coords = np.array([c for l in det_conf for c in l], dtype=np.intp)

        self.n_conflict_edges = n_conf_edges
        self.size = coord + n_conf_edges

    # ---------------- sizes ----------------

    @property
    def detection_count(self) -> int:
        return len(self.det_ids)

    @property
    def conflict_count(self) -> int:
        return len(self.conf_ptr) - 1

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    # ---------------- slot ranges ----------------

    def in_range(self, u: int) -> slice:
        return slice(self.in_ptr[u], self.in_ptr[u + 1])

    def out_range(self, u: int) -> slice:
        return slice(self.out_ptr[u], self.out_ptr[u + 1])

    def conf_range(self, c: int) -> slice:
        return slice(self.conf_ptr[c], self.conf_ptr[c + 1])

    def conflict_coords_of(self, u: int) -> np.ndarray:
        return self.det_conf_coords[self.det_conf_ptr[u]:self.det_conf_ptr[u + 1]]

    # ---------------- views ----------------

    def _edge_ref(self, k: int) -> EdgeRef:
        return EdgeRef(k, self.instance.transitions[k].kind, self.transition_coords[k])

    def detection_factor(self, u: int) -> DetectionFactor:
        ins = self.in_range(u)
        outs = self.out_range(u)
        return DetectionFactor(
            id=self.det_ids[u],
            det_cost=float(self.theta_det[u]),
            in_edges=tuple(
                (self._edge_ref(int(k)), float(v))
                for k, v in zip(self.in_slot_transition[ins], self.theta_in[ins])
            ),
            out_edges=tuple(
                (self._edge_ref(int(k)), float(v))
                for k, v in zip(self.out_slot_transition[outs], self.theta_out[outs])
            ),
            conflict_edges=tuple(int(c) for c in self.conflict_coords_of(u)),
        )

    def conflict_factor(self, c: int) -> ConflictFactor:
        r = self.conf_range(c)
        return ConflictFactor(
            id=c,
            members=tuple(self.det_ids[u] for u in self.conf_slot_det[r]),
            costs=tuple(float(v) for v in self.theta_conf[r]),
        )

    def reparametrize(self, lam: "Reparametrization") -> "ReparametrizedCosts":
        """All factor costs under a dual vector, computed in one vectorized pass"""
        lam.check(self)
        values = lam.values
        n_tr = self.transition_coord_count
        det = self.theta_det - np.bincount(
            self.conf_slot_det, weights=values[self.conf_slot_coord], minlength=self.detection_count
        )
        in_ = self.theta_in + values[self.in_slot_coord]
        out = self.theta_out - np.bincount(
            self.coord_out_slot, weights=values[:n_tr], minlength=len(self.theta_out)
        )
        conf = self.theta_conf + values[self.conf_slot_coord]
        return ReparametrizedCosts(self, det, in_, out, conf)


def _pointers(lengths) -> np.ndarray:
    return np.concatenate(([0], np.cumsum(list(lengths), dtype=np.intp))).astype(np.intp)


@dataclass
class Reparametrization:
    """
    Dual vector: one coordinate per move edge, two per division edge (one per
    child), one per conflict edge.
    """
    values: np.ndarray

    @classmethod
    def zeros(cls, graph: DecomposedGraph) -> "Reparametrization":
        return cls(np.zeros(graph.size, dtype=np.float64))

    def copy(self) -> "Reparametrization":
        return Reparametrization(self.values.copy())

    def check(self, graph: DecomposedGraph):
        if self.values.shape != (graph.size,):
            raise ValueError(f"dual vector has length {self.values.shape}, graph needs {graph.size}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("dual vector contains non-finite values")


@dataclass
class ReparametrizedCosts:
    """Flat reparametrized cost arrays, slot-aligned with the graph"""
    graph: DecomposedGraph
    det: np.ndarray
    in_: np.ndarray
    out: np.ndarray
    conf: np.ndarray

    def detection(self, u: int) -> DetectionCosts:
        g = self.graph
        return DetectionCosts(float(self.det[u]), self.in_[g.in_range(u)], self.out[g.out_range(u)])

    def conflict(self, c: int) -> np.ndarray:
        return self.conf[self.graph.conf_range(c)]

    def dual_value(self) -> float:
        g = self.graph
        in_min = np.zeros(g.detection_count)
        np.minimum.at(in_min, g.in_slot_owner, self.in_)
        out_min = np.zeros(g.detection_count)
        np.minimum.at(out_min, g.out_slot_owner, self.out)
        conf_min = np.zeros(g.conflict_count)
        np.minimum.at(conf_min, g.conf_slot_owner, self.conf)
        return float(np.minimum(0.0, self.det + in_min + out_min).sum() + conf_min.sum())


# ============================================================
# Operations
# ============================================================

def decompose(instance: Instance) -> DecomposedGraph:
    """
    Build the decomposed graph of a valid instance.

    Move costs are split 1/2 : 1/2 between the source out-copy and the target
    in-copy, division costs 1/3 to each of the three copies. Appearance and
    disappearance costs are folded into the detection cost and compensated on
    the in/out copies.

    Raises:
        InstanceValidationError: if the instance is not well-formed
    """
    report = validate(instance)
    if not report.ok:
        raise InstanceValidationError(report)
    graph = DecomposedGraph(instance)
    logger.info(
        "decomposed %d detections, %d moves, %d divisions, %d conflict factors; %d dual coordinates",
        graph.detection_count, graph.n_moves, graph.n_divisions, graph.conflict_count, graph.size,
    )
    return graph


def reparametrized_costs(
    graph: DecomposedGraph,
    lam: Reparametrization,
    node: Union[DetectionId, int]
) -> Union[DetectionCosts, np.ndarray]:
    """
    Reparametrized cost vector of one factor.

    Args:
        graph: Decomposed graph
        lam: Dual vector
        node: DetectionId for a detection factor, conflict index for a conflict factor

    Returns:
        DetectionCosts for detections, member cost array for conflicts
    """
    lam.check(graph)
    v = lam.values
    if isinstance(node, DetectionId):
        u = graph.det_pos[node]
        ins = graph.in_range(u)
        outs = graph.out_range(u)
        det = graph.theta_det[u] - v[graph.conflict_coords_of(u)].sum()
        in_ = graph.theta_in[ins] + v[graph.in_slot_coord[ins]]
        out = graph.theta_out[outs] - np.array(
            [sum(v[c] for c in coords) for coords in graph.out_slot_coords[outs]],
            dtype=np.float64,
        )
        return DetectionCosts(float(det), in_, out)
    r = graph.conf_range(node)
    return graph.theta_conf[r] + v[graph.conf_slot_coord[r]]


def min_active_detection_factor(costs: DetectionCosts) -> FactorMinimum:
    """Best state of a detection factor among those with det = 1"""
    in_choice = out_choice = None
    value = costs.det
    if len(costs.in_):
        k = int(np.argmin(costs.in_))
        if costs.in_[k] < 0:
            in_choice = k
            value += costs.in_[k]
    if len(costs.out):
        k = int(np.argmin(costs.out))
        if costs.out[k] < 0:
            out_choice = k
            value += costs.out[k]
    return FactorMinimum(float(value), DetectionFactorState(1, in_choice, out_choice))


def min_detection_factor(costs: DetectionCosts) -> FactorMinimum:
    """
    Minimum over all states of a detection factor, O(|in| + |out|).
    Ties prefer the off state, then "no edge", then the lowest slot.
    """
    active = min_active_detection_factor(costs)
    if active.value < 0:
        return active
    return FactorMinimum(0.0, DetectionFactorState())


def min_conflict_factor(costs: Sequence[float]) -> Tuple[FactorMinimum, FactorMinimum]:
    """
    Best and second-best state of a conflict factor. The off state costs 0;
    ties prefer off, then the lowest member index.
    """
    values = np.concatenate(([0.0], np.asarray(costs, dtype=np.float64)))
    order = np.argsort(values, kind="stable")[:2]

    def state(i: int) -> ConflictFactorState:
        return ConflictFactorState(None if i == 0 else i - 1)

    return (
        FactorMinimum(float(values[order[0]]), state(int(order[0]))),
        FactorMinimum(float(values[order[1]]), state(int(order[1]))),
    )


def dual_value(graph: DecomposedGraph, lam: Reparametrization) -> float:
    """Lagrange dual: sum of all detection-factor and conflict-factor minima"""
    return graph.reparametrize(lam).dual_value()


# ============================================================
# Decomposed energy
# ============================================================

@dataclass(frozen=True)
class FactorStates:
    detections: Tuple[DetectionFactorState, ...]
    conflicts: Tuple[ConflictFactorState, ...]


def factor_states(graph: DecomposedGraph, x: Assignment) -> FactorStates:
    """Map a feasible standard-model assignment onto consistent factor states"""
    det_states = []
    for u, det_id in enumerate(graph.det_ids):
        if not x.detection_on[det_id]:
            det_states.append(DetectionFactorState())
            continue
        ins = graph.in_slot_transition[graph.in_range(u)]
        outs = graph.out_slot_transition[graph.out_range(u)]
        in_choice = next((i for i, k in enumerate(ins) if x.transition_on[k]), None)
        out_choice = next((i for i, k in enumerate(outs) if x.transition_on[k]), None)
        det_states.append(DetectionFactorState(1, in_choice, out_choice))
    conf_states = []
    for c in range(graph.conflict_count):
        members = graph.conf_slot_det[graph.conf_range(c)]
        active = next((i for i, u in enumerate(members) if x.detection_on[graph.det_ids[u]]), None)
        conf_states.append(ConflictFactorState(active))
    return FactorStates(tuple(det_states), tuple(conf_states))


def decomposed_energy(costs: ReparametrizedCosts, states: FactorStates) -> float:
    """Energy of the decomposed problem: sum of factor costs of the given states"""
    total = 0.0
    for u, state in enumerate(states.detections):
        total += costs.detection(u).active_cost(state)
    for c, state in enumerate(states.conflicts):
        if state.active_member is not None:
            total += float(costs.conflict(c)[state.active_member])
    return total

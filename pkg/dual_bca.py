"""
Dual Block-Coordinate Ascent
Monotone conflict and transition updates, forward/backward sweeps and the solver loop
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from decomposition import (
    DecomposedGraph,
    DetectionCosts,
    Direction,
    Reparametrization,
    ReparametrizedCosts,
    SolverInvariantError,
    min_active_detection_factor,
    min_conflict_factor,
)
from instance_model import Assignment, relative_gap
from primal_heuristic import BOTH_DIRECTIONS, FramePrimalEstimator, PrimalSolution

logger = logging.getLogger(__name__)


class DualDecreaseError(SolverInvariantError):
    """A dual update lowered the dual value beyond numerical tolerance"""


class SolverConfig(BaseModel):
    """Termination and scheduling parameters of the dual solver"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_sweeps: int = Field(1000, ge=1, description="Upper limit on forward/backward sweeps")
    gap_tolerance: float = Field(1e-4, ge=0, allow_inf_nan=False, description="Stop at this relative primal/dual gap")
    stall_tolerance: float = Field(1e-9, ge=0, allow_inf_nan=False, description="Minimum dual improvement per sweep, relative to 1 + |D|")
    stall_sweeps: int = Field(3, ge=1, description="Consecutive stalled sweeps before stopping")
    primal_period: int = Field(25, ge=1, description="Sweeps between primal extractions")
    debug: bool = Field(False, description="Re-evaluate the dual after every update")
    frame_primal: bool = Field(True, description="Estimate a primal inside every sweep")
    directions: Literal["both", "forward", "backward"] = Field("both", description="Primal heuristic directions")

    @property
    def primal_directions(self) -> Tuple[Direction, ...]:
        if self.directions == "both":
            return BOTH_DIRECTIONS
        return (Direction(self.directions),)


@dataclass
class DualUpdate:
    """Sparse increment of the dual vector"""
    coords: np.ndarray
    deltas: np.ndarray

    @classmethod
    def empty(cls) -> "DualUpdate":
        return cls(np.empty(0, dtype=np.intp), np.empty(0, dtype=np.float64))

    def as_dict(self):
        return {int(c): float(d) for c, d in zip(self.coords, self.deltas)}

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.deltas) <= tol))


@dataclass
class OperationCounter:
    reads: int = 0
    writes: int = 0

    @property
    def total(self) -> int:
        return self.reads + self.writes


@dataclass(frozen=True)
class ConvergenceRecord:
    sweep: int
    direction: Direction
    dual_bound: float
    primal_energy: Optional[float]
    wall_time: float


@dataclass
class SolveResult:
    assignment: Assignment
    energy: float
    dual_bound: float
    records: List[ConvergenceRecord]
    lam: Reparametrization
    termination: str
    counter: OperationCounter = field(default_factory=OperationCounter)

    @property
    def gap(self) -> float:
        return relative_gap(self.energy, self.dual_bound)

    @property
    def absolute_gap(self) -> float:
        return self.energy - self.dual_bound

    @property
    def sweeps(self) -> int:
        return len(self.records)


# ============================================================
# Solver state
# ============================================================

class DualState:
    """
    The dual vector together with the reparametrized costs it induces. Both are
    updated in O(1) per touched coordinate; a state is owned by one solver.
    """

    def __init__(self, graph: DecomposedGraph, lam: Optional[Reparametrization] = None, debug: bool = False):
        self.graph = graph
        self.lam = lam.copy() if lam is not None else Reparametrization.zeros(graph)
        costs = graph.reparametrize(self.lam)
        self.det = costs.det.copy()
        self.in_ = costs.in_.copy()
        self.out = costs.out.copy()
        self.conf = costs.conf.copy()
        self.debug = debug
        self.counter = OperationCounter()

    def costs(self) -> ReparametrizedCosts:
        """Live view on the current reparametrized costs"""
        return ReparametrizedCosts(self.graph, self.det, self.in_, self.out, self.conf)

    def detection_costs(self, u: int) -> DetectionCosts:
        g = self.graph
        self.counter.reads += 1 + (g.in_ptr[u + 1] - g.in_ptr[u]) + (g.out_ptr[u + 1] - g.out_ptr[u])
        return DetectionCosts(float(self.det[u]), self.in_[g.in_range(u)], self.out[g.out_range(u)])

    def conflict_costs(self, c: int) -> np.ndarray:
        r = self.graph.conf_range(c)
        self.counter.reads += r.stop - r.start
        return self.conf[r]

    def dual_value(self) -> float:
        return self.costs().dual_value()

    def apply(self, update: DualUpdate):
        if not len(update.coords):
            return
        before = self.dual_value() if self.debug else None

        g = self.graph
        coords, deltas = update.coords, update.deltas
        np.add.at(self.lam.values, coords, deltas)
        transition = coords < g.transition_coord_count
        tc, td = coords[transition], deltas[transition]
        if len(tc):
            np.add.at(self.in_, g.coord_in_slot[tc], td)
            np.add.at(self.out, g.coord_out_slot[tc], -td)
        slots, cd = coords[~transition] - g.transition_coord_count, deltas[~transition]
        if len(slots):
            np.add.at(self.conf, slots, cd)
            np.add.at(self.det, g.conf_slot_det[slots], -cd)
        self.counter.writes += 3 * len(coords)

        if before is not None:
            after = self.dual_value()
            if after < before - 1e-9 * (1 + abs(before)):
                raise DualDecreaseError(f"dual decreased from {before!r} to {after!r}")


# ============================================================
# Updates
# ============================================================

def conflict_update_detection(state: DualState, u: int) -> DualUpdate:
    """Move the best active cost of detection u evenly onto its conflict edges"""
    coords = state.graph.conflict_coords_of(u)
    if not len(coords):
        return DualUpdate.empty()
    m = min_active_detection_factor(state.detection_costs(u)).value
    return DualUpdate(coords.copy(), np.full(len(coords), m / len(coords)))


def conflict_update_conflict(state: DualState, c: int) -> DualUpdate:
    """Level every member cost of conflict c to the mean of its best two states"""
    costs = state.conflict_costs(c)
    best, second = min_conflict_factor(costs)
    level = 0.5 * (best.value + second.value)
    return DualUpdate(state.graph.conf_slot_coord[state.graph.conf_range(c)].copy(), level - costs)


def _two_smallest(options: np.ndarray) -> Tuple[float, float]:
    # options always holds the "no edge" choice at cost 0
    values = np.concatenate(([0.0], options))
    low = np.partition(values, 1)
    return float(low[0]), float(low[1])


def transition_update_forward(state: DualState, u: int) -> DualUpdate:
    """
    Equalize the outgoing options of u at m_out, the mean of the best active
    cost and the best active cost with a different outgoing choice (capped at 0).
    A division edge splits its increment evenly over both child coordinates.
    """
    g = state.graph
    costs = state.detection_costs(u)
    if not len(costs.out):
        return DualUpdate.empty()
    base = costs.det + (min(0.0, float(costs.in_.min())) if len(costs.in_) else 0.0)
    b1, b2 = _two_smallest(costs.out)
    m_out = min(0.0, base + 0.5 * (b1 + b2))
    q = base + costs.out - m_out

    coords, deltas = [], []
    for slot_coords, inc in zip(g.out_slot_coords[g.out_range(u)], q):
        share = inc / len(slot_coords)
        coords.extend(slot_coords)
        deltas.extend([share] * len(slot_coords))
    return DualUpdate(np.array(coords, dtype=np.intp), np.array(deltas, dtype=np.float64))


def transition_update_backward(state: DualState, v: int) -> DualUpdate:
    """
    Mirror of the forward update on the incoming options of v. Only the
    coordinate belonging to v changes for a division edge.
    """
    g = state.graph
    costs = state.detection_costs(v)
    if not len(costs.in_):
        return DualUpdate.empty()
    base = costs.det + (min(0.0, float(costs.out.min())) if len(costs.out) else 0.0)
    b1, b2 = _two_smallest(costs.in_)
    m_in = min(0.0, base + 0.5 * (b1 + b2))
    return DualUpdate(g.in_slot_coord[g.in_range(v)].copy(), m_in - (base + costs.in_))


# ============================================================
# Sweeps and solver loop
# ============================================================

PrimalHook = Callable[[int, ReparametrizedCosts], None]


def sweep(state: DualState, direction: Direction, primal_hook: Optional[PrimalHook] = None) -> float:
    """
    One pass over all frames in the given direction: conflict updates of the
    frame, the optional primal hook, then transition updates towards the next
    frame. Returns the dual value afterwards.
    """
    g = state.graph
    frames = range(g.frame_count)
    if direction is Direction.BACKWARD:
        frames = reversed(frames)
    transition_update = transition_update_forward if direction is Direction.FORWARD else transition_update_backward

    for t in frames:
        dets = g.frames[t]
        for u in dets:
            state.apply(conflict_update_detection(state, u))
        for c in g.conflicts_by_frame[t]:
            state.apply(conflict_update_conflict(state, c))
        if primal_hook is not None:
            primal_hook(t + 1, state.costs())
        for u in dets:
            state.apply(transition_update(state, u))
    return state.dual_value()


def synchronized_primal(
    graph: DecomposedGraph,
    lam: Reparametrization,
    directions: Sequence[Direction] = BOTH_DIRECTIONS
) -> PrimalSolution:
    """
    Primal assignment from lam with the frame estimator riding on a replayed sweep.

    Each direction sweeps a private copy of lam, so every frame is assigned
    after the transition costs of the frames before it have been pushed
    towards it. lam itself is left untouched. Forward wins ties.
    """
    best = None
    for direction in directions:
        estimator = FramePrimalEstimator(graph, direction)
        sweep(DualState(graph, lam), direction, estimator)
        solution = estimator.finish()
        logger.debug("%s replayed primal energy %.10g", direction.value, solution.energy)
        if best is None or solution.energy < best.energy:
            best = solution
    return best


def run(graph: DecomposedGraph, config: Optional[SolverConfig] = None) -> SolveResult:
    """
    Alternate forward and backward sweeps until the relative gap, a stall of
    the dual or the sweep limit stops the loop.

    With frame_primal on, every sweep also yields a primal assignment. A
    replayed primal (see synchronized_primal) is taken after the first sweep,
    every primal_period sweeps and at termination; the best one is returned.
    """
    config = config or SolverConfig()
    state = DualState(graph, debug=config.debug)
    directions = config.primal_directions
    start = time.perf_counter()

    best: Optional[PrimalSolution] = None
    records: List[ConvergenceRecord] = []
    previous = state.dual_value()
    stalled = 0
    termination = "max_sweeps"
    extracted_last = False

    def keep(candidate: PrimalSolution) -> float:
        nonlocal best
        if best is None or candidate.energy < best.energy:
            best = candidate
        return candidate.energy

    for n in range(1, config.max_sweeps + 1):
        direction = Direction.FORWARD if n % 2 == 1 else Direction.BACKWARD
        estimator = FramePrimalEstimator(graph, direction) if config.frame_primal and direction in directions else None
        dual = sweep(state, direction, estimator)

        energies = []
        if estimator is not None:
            energies.append(keep(estimator.finish()))
        extracted_last = n == 1 or n % config.primal_period == 0
        if extracted_last:
            energies.append(keep(synchronized_primal(graph, state.lam, directions)))
        records.append(ConvergenceRecord(n, direction, dual, min(energies) if energies else None, time.perf_counter() - start))
        logger.debug("sweep %d (%s): dual %.10g, primal %s", n, direction.value, dual, records[-1].primal_energy)

        if best is not None and relative_gap(best.energy, dual) <= config.gap_tolerance:
            termination = "gap"
            break
        stalled = stalled + 1 if dual - previous < config.stall_tolerance * (1 + abs(dual)) else 0
        previous = dual
        if stalled >= config.stall_sweeps:
            termination = "stall"
            break

    if not extracted_last:
        energy = keep(synchronized_primal(graph, state.lam, directions))
        last = records[-1]
        primal = energy if last.primal_energy is None else min(energy, last.primal_energy)
        records[-1] = replace(last, primal_energy=primal)

    dual_bound = max(r.dual_bound for r in records)
    logger.info(
        "stopped after %d sweeps (%s): primal %.10g, dual %.10g, gap %.3g",
        len(records), termination, best.energy, dual_bound, relative_gap(best.energy, dual_bound),
    )
    return SolveResult(best.assignment, best.energy, dual_bound, records, state.lam, termination, state.counter)

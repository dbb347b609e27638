"""
Shared helpers for the test modules: random instances, assignments, dual vectors
and brute-force enumerations
"""

import itertools
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from decomposition import DecomposedGraph, DetectionCosts, DetectionFactorState, Reparametrization
from instance_model import (
    Assignment,
    ConflictSet,
    Detection,
    DetectionId,
    Instance,
    Transition,
    TransitionKind,
)

# multiples of 0.25 add up exactly in binary floating point
GRID = np.arange(-12, 13) * 0.25


def draw_cost(rng: np.random.Generator, grid: bool = False, scale: float = 1.0) -> float:
    if grid:
        return float(rng.choice(GRID))
    # mix of exact zeros, repeated values and continuous draws
    kind = rng.random()
    if kind < 0.1:
        return 0.0
    if kind < 0.25:
        return float(rng.choice([-1.0, -0.5, 0.5, 1.0]))
    return float(rng.normal(0.0, scale))


def random_instance(
    rng: np.random.Generator,
    max_frames: int = 3,
    max_per_frame: int = 3,
    move_prob: float = 0.4,
    division_prob: float = 0.15,
    conflict_prob: float = 0.4,
    boundary_costs: bool = True,
    grid: bool = False,
    allow_divisions: bool = True,
) -> Instance:
    """A valid instance with random structure and costs; detection costs lean negative"""
    T = int(rng.integers(1, max_frames + 1))
    frames: Dict[int, List[DetectionId]] = {}
    detections = []
    for t in range(1, T + 1):
        n = int(rng.integers(0, max_per_frame + 1))
        frames[t] = [DetectionId(t, i) for i in range(n)]
        for det_id in frames[t]:
            app = abs(draw_cost(rng, grid, 0.5)) if boundary_costs else 0.0
            dis = abs(draw_cost(rng, grid, 0.5)) if boundary_costs else 0.0
            detections.append(Detection(det_id, draw_cost(rng, grid) - 0.5, app, dis))

    transitions = []
    for t in range(1, T):
        for u in frames[t]:
            targets = frames[t + 1]
            for v in targets:
                if rng.random() < move_prob:
                    transitions.append(Transition.move(u, v, draw_cost(rng, grid)))
            if allow_divisions:
                for v, w in itertools.combinations(targets, 2):
                    if rng.random() < division_prob:
                        transitions.append(Transition.division(u, v, w, draw_cost(rng, grid)))

    conflicts = []
    for t in range(1, T + 1):
        ids = frames[t]
        if len(ids) < 2:
            continue
        for size in range(2, len(ids) + 1):
            for members in itertools.combinations(ids, size):
                if rng.random() < conflict_prob / size:
                    conflicts.append(ConflictSet.of(members))

    order = rng.permutation(len(transitions))
    return Instance(T, tuple(detections), tuple(transitions[k] for k in order), tuple(conflicts))


def small_instance(rng: np.random.Generator, max_variables: int = 20, **kwargs) -> Instance:
    """A random instance with at most max_variables binary variables"""
    while True:
        instance = random_instance(rng, **kwargs)
        if instance.variable_count <= max_variables:
            return instance


def random_feasible_assignment(instance: Instance, rng: np.random.Generator) -> Assignment:
    on = {d.id: 0 for d in instance.detections}
    blocked = set()
    for idx in rng.permutation(len(instance.detections)):
        det_id = instance.detections[idx].id
        if det_id in blocked or rng.random() < 0.3:
            continue
        on[det_id] = 1
        for conf in instance.conflicts:
            if det_id in conf.members:
                blocked.update(conf.members)

    trans_on = [0] * len(instance.transitions)
    has_in, has_out = set(), set()
    for k in rng.permutation(len(instance.transitions)):
        tr = instance.transitions[k]
        if rng.random() < 0.3:
            continue
        if not on[tr.source] or tr.source in has_out:
            continue
        if any(not on[t] or t in has_in for t in tr.targets):
            continue
        trans_on[k] = 1
        has_out.add(tr.source)
        has_in.update(tr.targets)
    return Assignment(on, tuple(trans_on))


def random_lambda(graph: DecomposedGraph, rng: np.random.Generator, scale: float = 1.0) -> Reparametrization:
    return Reparametrization(rng.normal(0.0, scale, size=graph.size))


def random_detection_costs(rng: np.random.Generator, n_in: int, n_out: int, grid: bool = False) -> DetectionCosts:
    return DetectionCosts(
        draw_cost(rng, grid),
        np.array([draw_cost(rng, grid) for _ in range(n_in)], dtype=np.float64),
        np.array([draw_cost(rng, grid) for _ in range(n_out)], dtype=np.float64),
    )


def detection_states(costs: DetectionCosts) -> List[DetectionFactorState]:
    """Every state of a detection factor: off first, then (in, out) with "none" before slots"""
    states = [DetectionFactorState()]
    ins: List[Optional[int]] = [None] + list(range(len(costs.in_)))
    outs: List[Optional[int]] = [None] + list(range(len(costs.out)))
    states += [DetectionFactorState(1, i, o) for i in ins for o in outs]
    return states


def enumerate_detection_minimum(costs: DetectionCosts, active_only: bool = False) -> Tuple[float, DetectionFactorState]:
    states = detection_states(costs)
    if active_only:
        states = states[1:]
    best = min(states, key=lambda s: costs.active_cost(s))
    return costs.active_cost(best), best


def enumerate_conflict_states(costs: Sequence[float]) -> List[Tuple[float, Optional[int]]]:
    """All states as (cost, member or None), sorted with off first among ties, then by member"""
    states = [(0.0, None)] + [(float(c), i) for i, c in enumerate(costs)]
    return sorted(states, key=lambda s: (s[0], -1 if s[1] is None else s[1]))


def enumerate_packing(scores: Sequence[float], conflicts: Sequence[Sequence[int]]) -> Tuple[float, Tuple[int, ...]]:
    """Lexicographically first optimal 0/1 vector by exhaustive enumeration"""
    best_value, best = None, None
    for mu in itertools.product((0, 1), repeat=len(scores)):
        if any(sum(mu[i] for i in set(c)) > 1 for c in conflicts):
            continue
        value = 0.0
        for s, m in zip(scores, mu):
            if m:
                value += s
        if best_value is None or value < best_value:
            best_value, best = value, mu
    return best_value, best


def constraints_hold(instance: Instance, x: Assignment) -> bool:
    """Independent evaluation of the activation, uniqueness and conflict constraints"""
    for k, tr in enumerate(instance.transitions):
        if x.transition_on[k] and not all(x.detection_on[e] for e in tr.endpoints):
            return False
    for det in instance.detections:
        incoming = sum(x.transition_on[k] for k, tr in enumerate(instance.transitions) if det.id in tr.targets)
        outgoing = sum(x.transition_on[k] for k, tr in enumerate(instance.transitions) if tr.source == det.id)
        if incoming > 1 or outgoing > 1:
            return False
    return all(sum(x.detection_on[m] for m in conf.members) <= 1 for conf in instance.conflicts)


def chain_instance(
    length: int = 3,
    det_cost: float = -1.0,
    move_cost: float = 0.1,
    boundary: float = 0.5,
) -> Instance:
    """One detection per frame, linked by moves"""
    ids = [DetectionId(t, 0) for t in range(1, length + 1)]
    return Instance(
        length,
        tuple(Detection(d, det_cost, boundary, boundary) for d in ids),
        tuple(Transition.move(a, b, move_cost) for a, b in zip(ids, ids[1:])),
    )


def reverse_instance(instance: Instance) -> Instance:
    """Time reversal of an instance without divisions; transition order is kept"""
    T = instance.frame_count

    def flip(d: DetectionId) -> DetectionId:
        return DetectionId(T + 1 - d.frame, d.index)

    if any(tr.kind is TransitionKind.DIVISION for tr in instance.transitions):
        raise ValueError("divisions cannot be reversed")
    return Instance(
        T,
        tuple(Detection(flip(d.id), d.cost, d.disappearance_cost, d.appearance_cost) for d in instance.detections),
        tuple(Transition.move(flip(tr.targets[0]), flip(tr.source), tr.cost) for tr in instance.transitions),
        tuple(ConflictSet.of([flip(m) for m in c.members]) for c in instance.conflicts),
    )

"""
Weighted Set Packing
Exact per-frame conflict resolution by branch-and-bound over conflict components
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)

_VISIT, _TAKE, _UNDO = 0, 1, 2


@dataclass(frozen=True)
class PackingProblem:
    """Minimize <scores, mu> with at most one selected item per conflict set"""
    scores: Tuple[float, ...]
    conflicts: Tuple[Tuple[int, ...], ...] = ()

    def __post_init__(self):
        n = len(self.scores)
        for members in self.conflicts:
            if any(not 0 <= i < n for i in members):
                raise ValueError(f"conflict {members} references an item outside 0..{n - 1}")

    @classmethod
    def of(cls, scores: Sequence[float], conflicts: Sequence[Sequence[int]] = ()) -> "PackingProblem":
        return cls(tuple(float(s) for s in scores), tuple(tuple(int(i) for i in c) for c in conflicts))


def packing_value(problem: PackingProblem, mu: Sequence[int]) -> float:
    """Objective of a selection, summed in index order"""
    value = 0.0
    for s, m in zip(problem.scores, mu):
        if m:
            value += s
    return value


def is_packing(problem: PackingProblem, mu: Sequence[int]) -> bool:
    return all(sum(mu[i] for i in set(c)) <= 1 for c in problem.conflicts)


def solve_packing(problem: PackingProblem) -> np.ndarray:
    """
    Exact minimizer of the packing problem.

    Only items with negative score can be selected. Items and conflict sets
    are split into connected components which are solved independently.
    Among equally good selections the lexicographically smallest is returned.

    Args:
        problem: Scores and conflict sets

    Returns:
        0/1 vector of length |scores|
    """
    scores = problem.scores
    mu = np.zeros(len(scores), dtype=np.int8)
    candidates = [i for i, s in enumerate(scores) if s < 0]
    if not candidates:
        return mu

    # item-set incidence graph, sets kept explicit
    graph = nx.Graph()
    graph.add_nodes_from(("item", i) for i in candidates)
    negative = set(candidates)
    for j, members in enumerate(problem.conflicts):
        for i in set(members):
            if i in negative:
                graph.add_edge(("item", i), ("set", j))

    for component in nx.connected_components(graph):
        items = sorted(i for kind, i in component if kind == "item")
        if len(items) == 1:
            mu[items[0]] = 1
            continue
        sets_of = {
            i: sorted(j for kind, j in graph.neighbors(("item", i)))
            for i in items
        }
        for i in _branch_and_bound(items, sets_of, scores):
            mu[i] = 1
    return mu


def _branch_and_bound(
    items: List[int],
    sets_of: Dict[int, List[int]],
    scores: Sequence[float]
) -> List[int]:
    """Lexicographically smallest optimal packing of one component (items ascending)"""
    n = len(items)
    used: Dict[int, int] = {}

    def available(i: int) -> bool:
        return not any(j in used for j in sets_of[i])

    def bound(pos: int) -> float:
        # at most one item per free conflict set: group each item under its first free set
        groups: Dict[int, float] = {}
        total = 0.0
        for i in items[pos:]:
            if not available(i):
                continue
            if not sets_of[i]:
                total += scores[i]
                continue
            group = sets_of[i][0]
            if group not in groups or scores[i] < groups[group]:
                groups[group] = scores[i]
        return total + sum(groups.values())

    best_sel = _greedy(items, sets_of, scores)
    best_value = sum(scores[i] for i in sorted(best_sel))
    found = False
    chosen: List[int] = []
    explored = 0

    stack: List[Tuple] = [(_VISIT, 0, 0.0, -1)]
    while stack:
        action, pos, value, item = stack.pop()
        if action == _UNDO:
            for j in sets_of[item]:
                used.pop(j)
            chosen.pop()
            continue
        if action == _TAKE:
            for j in sets_of[item]:
                used[j] = item
            chosen.append(item)
        explored += 1

        optimistic = value + bound(pos)
        if optimistic > best_value or (found and optimistic >= best_value):
            continue
        if pos == n:
            if value < best_value or not found:
                best_value, best_sel, found = value, list(chosen), True
            continue

        i = items[pos]
        if available(i):
            stack.append((_UNDO, pos, 0.0, i))
            stack.append((_TAKE, pos + 1, value + scores[i], i))
        stack.append((_VISIT, pos + 1, value, -1))

    logger.debug("packing component of %d items: %d nodes, value %.6g", n, explored, best_value)
    return sorted(best_sel)


def _greedy(items: List[int], sets_of: Dict[int, List[int]], scores: Sequence[float]) -> List[int]:
    used = set()
    selected = []
    for i in sorted(items, key=lambda i: (scores[i], i)):
        if not any(j in used for j in sets_of[i]):
            used.update(sets_of[i])
            selected.append(i)
    return selected

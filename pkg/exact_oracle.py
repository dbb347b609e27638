"""
Exact Oracle
Brute-force enumeration of the standard model for tiny instances
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional

from instance_model import (
    Assignment,
    DetectionId,
    Instance,
    InstanceValidationError,
    energy,
    validate,
)

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 24


class OracleBudgetExceeded(ValueError):
    """The instance has more binary variables than the enumeration budget allows"""


@dataclass(frozen=True)
class OracleResult:
    optimum: float
    argmin: Assignment
    explored: int


def brute_force_solve(instance: Instance, budget: int = DEFAULT_BUDGET) -> OracleResult:
    """
    Exact minimum of the standard model by enumeration.

    Detections are fixed frame by frame (a branch dies as soon as a conflict
    set holds two active members), then transitions (a branch dies when an
    endpoint is inactive or a slot is already taken). Variables are ordered
    detections first, then transitions; the lexicographically smallest
    minimizer is returned.

    Args:
        instance: Valid instance
        budget: Maximum number of binary variables

    Raises:
        OracleBudgetExceeded: if the instance is larger than the budget
        InstanceValidationError: if the instance is not well-formed
    """
    n = instance.variable_count
    if n > budget:
        raise OracleBudgetExceeded(f"instance has {n} binary variables, oracle budget is {budget}")
    report = validate(instance)
    if not report.ok:
        raise InstanceValidationError(report)

    det_order: List[DetectionId] = sorted(d.id for d in instance.detections)
    conflicts_of: Dict[DetectionId, List[int]] = {d: [] for d in det_order}
    for j, conf in enumerate(instance.conflicts):
        for m in set(conf.members):
            conflicts_of[m].append(j)
    transitions = instance.transitions

    on: Dict[DetectionId, int] = {d: 0 for d in det_order}
    trans_on = [0] * len(transitions)
    conflict_used = [0] * len(instance.conflicts)
    in_used: Dict[DetectionId, int] = {d: 0 for d in det_order}
    out_used: Dict[DetectionId, int] = {d: 0 for d in det_order}

    best_value = math.inf
    best: Optional[Assignment] = None
    explored = 0

    def leaf():
        nonlocal best_value, best, explored
        explored += 1
        x = Assignment(dict(on), tuple(trans_on))
        value = energy(instance, x)
        if value < best_value:
            best_value, best = value, x

    def assign_transition(k: int):
        if k == len(transitions):
            leaf()
            return
        assign_transition(k + 1)
        tr = transitions[k]
        if not on[tr.source] or out_used[tr.source]:
            return
        if any(not on[t] or in_used[t] for t in tr.targets):
            return
        trans_on[k] = 1
        out_used[tr.source] = 1
        for t in tr.targets:
            in_used[t] = 1
        assign_transition(k + 1)
        trans_on[k] = 0
        out_used[tr.source] = 0
        for t in tr.targets:
            in_used[t] = 0

    def assign_detection(i: int):
        if i == len(det_order):
            assign_transition(0)
            return
        det_id = det_order[i]
        assign_detection(i + 1)
        if any(conflict_used[j] for j in conflicts_of[det_id]):
            return
        on[det_id] = 1
        for j in conflicts_of[det_id]:
            conflict_used[j] = 1
        assign_detection(i + 1)
        on[det_id] = 0
        for j in conflicts_of[det_id]:
            conflict_used[j] = 0

    assign_detection(0)
    logger.debug("oracle enumerated %d feasible assignments of %d variables", explored, n)
    return OracleResult(best_value, best, explored)

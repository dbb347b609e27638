"""
Synthetic Instance Generator
Random-walk cell populations with divisions, overlapping hypotheses and known ground truth
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from cost_model import CostParams, DetectionFeatures, LinkCandidates, build_instance
from instance_model import Assignment, DetectionId, Instance, TransitionKind

logger = logging.getLogger(__name__)


class GenParams(BaseModel):
    """Parameters of the synthetic cell population"""
    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    frames: int = Field(10, ge=1, description="Number of frames T")
    initial_objects: int = Field(5, ge=0, description="Cells present in the first frame")
    division_prob: float = Field(0.05, ge=0, le=1, description="Division probability per cell and frame")
    motion_sigma: float = Field(3.0, ge=0, description="Random walk step deviation (pixels)")
    hypotheses_per_object: int = Field(2, ge=1, description="Overlapping hypotheses per cell")
    candidate_radius: float = Field(15.0, gt=0, description="Link gating distance (pixels)")
    seed: int = Field(0, ge=0, lt=2 ** 64, description="Seed of the random streams")
    arena_size: float = Field(200.0, gt=0, description="Side of the square arena (pixels)")
    mean_area: float = Field(100.0, gt=0, description="Mean cell area (pixels)")
    jitter: float = Field(1.5, ge=0, description="Centroid jitter of spurious hypotheses (pixels)")


@dataclass(frozen=True)
class _Cell:
    x: float
    y: float
    area: float
    orientation: float


@dataclass
class _Frame:
    features: List[DetectionFeatures]
    true_index: List[int]          # per cell, its true hypothesis
    hypotheses: List[List[int]]    # per cell, all of its hypotheses


def _boundary_distance(c: _Cell, size: float) -> float:
    return max(0.0, min(c.x, c.y, size - c.x, size - c.y))


def _features(c: _Cell, rng: np.random.Generator, size: float) -> DetectionFeatures:
    hull = c.area * (1.0 + rng.uniform(0.0, 0.05))
    return DetectionFeatures(c.area, hull, (c.x, c.y), c.orientation, _boundary_distance(c, size))


def _hypotheses(cells: List[_Cell], rng: np.random.Generator, p: GenParams) -> _Frame:
    frame = _Frame([], [], [])
    for cell in cells:
        variants = [cell]
        for _ in range(p.hypotheses_per_object - 1):
            dx, dy = rng.normal(0.0, p.jitter, size=2)
            # spurious hypotheses are partial segments of the cell
            variants.append(_Cell(cell.x + dx, cell.y + dy, cell.area * rng.uniform(0.5, 0.95), cell.orientation))
        order = rng.permutation(len(variants))
        indices = []
        for k in order:
            indices.append(len(frame.features))
            frame.features.append(_features(variants[k], rng, p.arena_size))
        frame.true_index.append(indices[int(np.flatnonzero(order == 0)[0])])
        frame.hypotheses.append(sorted(indices))
    return frame


def _inside(c: _Cell, size: float) -> bool:
    return 0.0 <= c.x <= size and 0.0 <= c.y <= size


def _advance(
    cells: List[_Cell],
    rng: np.random.Generator,
    p: GenParams
) -> Tuple[List[_Cell], List[Tuple[int, ...]]]:
    """Next frame's cells and, per current cell, the indices of its successors"""
    nxt: List[_Cell] = []
    successors: List[Tuple[int, ...]] = []
    for cell in cells:
        if rng.random() < p.division_prob:
            half = 0.5 * math.sqrt(cell.area)
            ux, uy = math.cos(cell.orientation), math.sin(cell.orientation)
            children = []
            for sign in (1.0, -1.0):
                dx, dy = rng.normal(0.0, p.motion_sigma, size=2)
                children.append(_Cell(
                    cell.x + sign * half * ux + dx,
                    cell.y + sign * half * uy + dy,
                    0.5 * cell.area * rng.uniform(0.9, 1.1),
                    float(rng.uniform(0.0, math.pi)),
                ))
        else:
            dx, dy = rng.normal(0.0, p.motion_sigma, size=2)
            growth = 1.0 + 0.02 * rng.standard_normal()
            children = [_Cell(cell.x + dx, cell.y + dy, max(1.0, cell.area * growth), cell.orientation)]
        kept = []
        for child in children:
            if _inside(child, p.arena_size):
                kept.append(len(nxt))
                nxt.append(child)
        # a division with one daughter leaving the arena continues as a move
        successors.append(tuple(kept))
    return nxt, successors


def _distance(a: DetectionFeatures, b: DetectionFeatures) -> float:
    return math.hypot(a.centroid[0] - b.centroid[0], a.centroid[1] - b.centroid[1])


def _candidates(
    frames: List[_Frame],
    successors: List[List[Tuple[int, ...]]],
    p: GenParams
) -> LinkCandidates:
    links = LinkCandidates()
    r = p.candidate_radius
    for t in range(1, len(frames)):
        here, there = frames[t - 1], frames[t]
        owner = {i: cell for cell, hyps in enumerate(there.hypotheses) for i in hyps}
        moves = set()
        divisions = set()
        for u, fu in enumerate(here.features):
            near = [v for v, fv in enumerate(there.features) if _distance(fu, fv) <= r]
            moves.update((t, u, v) for v in near)
            if p.division_prob > 0:
                for a in range(len(near)):
                    for b in range(a + 1, len(near)):
                        v1, v2 = near[a], near[b]
                        if owner[v1] != owner[v2]:
                            divisions.add((t, u, v1, v2))
        for cell, succ in enumerate(successors[t - 1]):
            u = here.true_index[cell]
            children = [there.true_index[c] for c in succ]
            if len(children) == 1:
                moves.add((t, u, children[0]))
            elif len(children) == 2:
                divisions.add((t, u) + tuple(sorted(children)))
        links.moves.extend(sorted(moves))
        links.divisions.extend(sorted(divisions))
    for t, frame in enumerate(frames, start=1):
        links.conflicts.extend((t, tuple(h)) for h in frame.hypotheses if len(h) > 1)
    return links


def _ground_truth(
    instance: Instance,
    frames: List[_Frame],
    successors: List[List[Tuple[int, ...]]]
) -> Assignment:
    on = {d.id: 0 for d in instance.detections}
    for t, frame in enumerate(frames, start=1):
        for i in frame.true_index:
            on[DetectionId(t, i)] = 1

    index = {tr.key: k for k, tr in enumerate(instance.transitions)}
    trans_on = [0] * len(instance.transitions)
    for t in range(1, len(frames)):
        for cell, succ in enumerate(successors[t - 1]):
            if not succ:
                continue
            source = DetectionId(t, frames[t - 1].true_index[cell])
            targets = tuple(sorted(DetectionId(t + 1, frames[t].true_index[c]) for c in succ))
            kind = TransitionKind.MOVE if len(targets) == 1 else TransitionKind.DIVISION
            trans_on[index[(kind, source, targets)]] = 1
    return Assignment(on, tuple(trans_on))


def generate(p: GenParams, cost_params: Optional[CostParams] = None) -> Tuple[Instance, Assignment]:
    """
    Simulate a cell population and turn it into a tracking instance.

    Every frame draws from its own PCG64 stream spawned from the seed, so the
    output depends on the seed alone. Reproducing an instance outside Python
    needs numpy's PCG64 and SeedSequence definitions, including the way
    Generator methods consume the stream.

    The returned ground truth activates the true hypothesis of every cell and
    the true move/division links; it is always feasible.
    """
    cost_params = cost_params or CostParams()
    streams = [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(p.seed).spawn(p.frames + 1)]

    init = streams[0]
    low, high = 0.1 * p.arena_size, 0.9 * p.arena_size
    cells = [
        _Cell(
            float(init.uniform(low, high)),
            float(init.uniform(low, high)),
            p.mean_area * float(init.uniform(0.8, 1.2)),
            float(init.uniform(0.0, math.pi)),
        )
        for _ in range(p.initial_objects)
    ]

    frames: List[_Frame] = []
    successors: List[List[Tuple[int, ...]]] = []
    for t in range(1, p.frames + 1):
        rng = streams[t]
        frames.append(_hypotheses(cells, rng, p))
        if t < p.frames:
            cells, succ = _advance(cells, rng, p)
            successors.append(succ)

    links = _candidates(frames, successors, p)
    instance = build_instance([f.features for f in frames], links, cost_params)
    truth = _ground_truth(instance, frames, successors)

    divisions = sum(1 for succ in successors for s in succ if len(s) == 2)
    logger.info(
        "generated %d frames, %d detections, %d transitions, %d conflict sets (%d true divisions)",
        instance.frame_count, len(instance.detections), len(instance.transitions),
        len(instance.conflicts), divisions,
    )
    return instance, truth


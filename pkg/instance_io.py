"""
Instance I/O
Line-oriented text formats for instances, solutions and convergence logs
"""

import csv
import io
import math
import re
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from instance_model import (
    Assignment,
    ConflictSet,
    Detection,
    DetectionId,
    Instance,
    Transition,
    TransitionKind,
    check_feasible,
    relative_gap,
    validate,
)

_INT = re.compile(r"[+-]?\d+")
_FLOAT = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")

_KIND_ORDER = {"H": 0, "MOVE": 1, "DIV": 2, "CONFSET": 3}

CSV_HEADER = ("sweep", "direction", "dual_bound", "primal_energy", "wall_time_s")


class InstanceParseError(ValueError):
    """Malformed or invalid instance file; line is 1-based (0 when not tied to a line)"""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class SolutionParseError(ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def format_float(x: float) -> str:
    return f"{x:.17g}"


def _int(token: str, line: int, error=InstanceParseError) -> int:
    if not _INT.fullmatch(token):
        raise error(line, f"expected an integer, got {token!r}")
    return int(token)


def _float(token: str, line: int) -> float:
    if not _FLOAT.fullmatch(token):
        raise InstanceParseError(line, f"expected a decimal number, got {token!r}")
    return float(token)


def _records(text: str) -> Iterable[Tuple[int, List[str]]]:
    for number, raw in enumerate(text.split("\n"), start=1):
        tokens = raw.split("#", 1)[0].split()
        if tokens:
            yield number, tokens


# ============================================================
# Instances
# ============================================================

def parse_instance(text: str) -> Instance:
    """
    Parse an instance file.

    Records are read in a first pass; ids may be referenced before they are
    defined. The assembled instance is then validated and the first violation
    is reported at the line of the offending record.

    Raises:
        InstanceParseError: on grammar errors or invalid instances
    """
    detections: List[Detection] = []
    transitions: List[Transition] = []
    conflicts: List[ConflictSet] = []
    line_of: Dict[int, int] = {}
    frames: Optional[int] = None
    frames_line = 0
    highest = 0

    def arity(tokens: List[str], n: int, line: int, usage: str):
        if len(tokens) != n:
            raise InstanceParseError(line, f"{tokens[0]} takes {n - 1} fields: {usage}")

    for line, tokens in _records(text):
        kind = tokens[0]
        if kind == "H":
            arity(tokens, 6, line, "H <frame> <id> <det_cost> <app_cost> <disapp_cost>")
            frame, index = _int(tokens[1], line), _int(tokens[2], line)
            record = Detection(DetectionId(frame, index), *(_float(t, line) for t in tokens[3:]))
            detections.append(record)
            highest = max(highest, frame)
        elif kind == "MOVE":
            arity(tokens, 5, line, "MOVE <from_frame> <from_id> <to_id> <cost>")
            frame = _int(tokens[1], line)
            record = Transition.move(
                DetectionId(frame, _int(tokens[2], line)),
                DetectionId(frame + 1, _int(tokens[3], line)),
                _float(tokens[4], line),
            )
            transitions.append(record)
            highest = max(highest, frame + 1)
        elif kind == "DIV":
            arity(tokens, 6, line, "DIV <from_frame> <from_id> <to_id1> <to_id2> <cost>")
            frame = _int(tokens[1], line)
            record = Transition.division(
                DetectionId(frame, _int(tokens[2], line)),
                DetectionId(frame + 1, _int(tokens[3], line)),
                DetectionId(frame + 1, _int(tokens[4], line)),
                _float(tokens[5], line),
            )
            transitions.append(record)
            highest = max(highest, frame + 1)
        elif kind == "CONFSET":
            if len(tokens) < 4:
                raise InstanceParseError(line, "CONFSET needs a frame and at least 2 ids")
            frame = _int(tokens[1], line)
            members = tuple(DetectionId(frame, _int(t, line)) for t in tokens[2:])
            record = ConflictSet(frame, tuple(sorted(members)))
            conflicts.append(record)
            highest = max(highest, frame)
        elif kind == "FRAMES":
            arity(tokens, 2, line, "FRAMES <count>")
            if frames is not None:
                raise InstanceParseError(line, f"FRAMES already given at line {frames_line}")
            frames, frames_line = _int(tokens[1], line), line
            continue
        else:
            raise InstanceParseError(line, f"unknown record type {kind!r}")
        line_of[id(record)] = line

    instance = Instance(
        frames if frames is not None else max(1, highest),
        tuple(detections),
        tuple(transitions),
        tuple(conflicts),
    )
    report = validate(instance)
    if not report.ok:
        first = report.violations[0]
        line = line_of.get(id(first.record), frames_line)
        extra = len(report.violations) - 1
        suffix = f" (+{extra} more)" if extra else ""
        raise InstanceParseError(line, f"{first}{suffix}")
    return instance


def _detection_line(d: Detection) -> str:
    return " ".join(
        ["H", str(d.id.frame), str(d.id.index)]
        + [format_float(c) for c in (d.cost, d.appearance_cost, d.disappearance_cost)]
    )


def _transition_line(tr: Transition) -> str:
    return " ".join(
        [tr.kind.value, str(tr.source.frame), str(tr.source.index)]
        + [str(t.index) for t in tr.targets]
        + [format_float(tr.cost)]
    )


def _conflict_line(conf: ConflictSet) -> str:
    return " ".join(["CONFSET", str(conf.frame)] + [str(i) for i in sorted(m.index for m in conf.members)])


def _transition_sort_key(tr: Transition) -> Tuple:
    kind = "MOVE" if tr.kind is TransitionKind.MOVE else "DIV"
    return (tr.source.frame, _KIND_ORDER[kind], (tr.source.index,) + tuple(t.index for t in tr.targets))


def canonical(instance: Instance) -> Instance:
    """The same instance with every record list in file order"""
    return Instance(
        instance.frame_count,
        tuple(sorted(instance.detections, key=lambda d: d.id)),
        tuple(sorted(instance.transitions, key=_transition_sort_key)),
        tuple(sorted(
            (ConflictSet(c.frame, tuple(sorted(c.members))) for c in instance.conflicts),
            key=lambda c: (c.frame, tuple(m.index for m in c.members)),
        )),
    )


def _highest_frame(instance: Instance) -> int:
    frames = [d.id.frame for d in instance.detections]
    frames += [tr.source.frame + 1 for tr in instance.transitions]
    frames += [c.frame for c in instance.conflicts]
    return max(frames, default=0)


def write_instance(instance: Instance) -> str:
    """
    Canonical text of an instance: records sorted by frame, then kind
    (H, MOVE, DIV, CONFSET), then ids. A FRAMES record leads the file only
    when trailing frames are empty.
    """
    keyed = [((d.id.frame, 0, (d.id.index,)), _detection_line(d)) for d in instance.detections]
    keyed += [(_transition_sort_key(tr), _transition_line(tr)) for tr in instance.transitions]
    keyed += [
        ((c.frame, 3, tuple(sorted(m.index for m in c.members))), _conflict_line(c))
        for c in instance.conflicts
    ]
    lines = [text for _, text in sorted(keyed, key=lambda pair: pair[0])]
    if instance.frame_count > max(1, _highest_frame(instance)):
        lines.insert(0, f"FRAMES {instance.frame_count}")
    return "".join(line + "\n" for line in lines)


def read_instance(path: str) -> Instance:
    with open(path, "r", encoding="utf-8") as f:
        return parse_instance(f.read())


def save_instance(instance: Instance, path: str):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(write_instance(instance))


# ============================================================
# Solutions
# ============================================================

@dataclass(frozen=True)
class SolutionFile:
    assignment: Assignment
    energy: float
    dual_bound: float
    gap: float


def write_solution(instance: Instance, x: Assignment, energy: float, dual_bound: float) -> str:
    """
    Solution text: ENERGY/BOUND/GAP header, then the active detections and
    transitions in canonical order.

    Raises:
        ValueError: if the assignment is infeasible
    """
    report = check_feasible(instance, x)
    if not report.feasible:
        raise ValueError(
            "refusing to write an infeasible solution: "
            + "; ".join(str(v) for v in report.violations[:3])
        )
    lines = [
        f"ENERGY {format_float(energy)}",
        f"BOUND {format_float(dual_bound)}",
        f"GAP {format_float(relative_gap(energy, dual_bound))}",
    ]
    lines += [f"ON {d.frame} {d.index}" for d in x.active_detections()]
    active = sorted((instance.transitions[k] for k in x.active_transitions()), key=_transition_sort_key)
    lines += ["LINK " + " ".join(_transition_line(tr).split()[:-1]) for tr in active]
    return "".join(line + "\n" for line in lines)


def parse_solution(instance: Instance, text: str) -> SolutionFile:
    """
    Inverse of write_solution against a known instance. Detections and
    transitions not listed are off.

    Raises:
        SolutionParseError: on grammar errors or references to unknown records
    """
    transition_index = {tr.key: k for k, tr in enumerate(instance.transitions)}
    known = instance.detection_index
    on = {d.id: 0 for d in instance.detections}
    trans_on = [0] * len(instance.transitions)
    header: Dict[str, float] = {}

    for line, tokens in _records(text):
        kind = tokens[0]
        if kind in ("ENERGY", "BOUND", "GAP"):
            if len(tokens) != 2:
                raise SolutionParseError(line, f"{kind} takes one value")
            try:
                header[kind] = float(tokens[1])
            except ValueError:
                raise SolutionParseError(line, f"expected a number, got {tokens[1]!r}") from None
        elif kind == "ON":
            if len(tokens) != 3:
                raise SolutionParseError(line, "ON takes <frame> <id>")
            det_id = DetectionId(_int(tokens[1], line, SolutionParseError), _int(tokens[2], line, SolutionParseError))
            if det_id not in known:
                raise SolutionParseError(line, f"unknown detection {det_id}")
            on[det_id] = 1
        elif kind == "LINK":
            if len(tokens) < 2 or tokens[1] not in ("MOVE", "DIV"):
                raise SolutionParseError(line, "LINK takes MOVE or DIV")
            expected = 5 if tokens[1] == "MOVE" else 6
            if len(tokens) != expected:
                raise SolutionParseError(line, f"LINK {tokens[1]} takes {expected - 2} fields")
            ints = [_int(t, line, SolutionParseError) for t in tokens[2:]]
            source = DetectionId(ints[0], ints[1])
            targets = tuple(sorted(DetectionId(ints[0] + 1, i) for i in ints[2:]))
            key = (TransitionKind(tokens[1]), source, targets)
            if key not in transition_index:
                raise SolutionParseError(line, f"unknown transition {' '.join(tokens[1:])}")
            trans_on[transition_index[key]] = 1
        else:
            raise SolutionParseError(line, f"unknown record type {kind!r}")

    missing = [k for k in ("ENERGY", "BOUND", "GAP") if k not in header]
    if missing:
        raise SolutionParseError(0, f"missing header line(s): {', '.join(missing)}")
    return SolutionFile(Assignment(on, tuple(trans_on)), header["ENERGY"], header["BOUND"], header["GAP"])


# ============================================================
# Convergence logs
# ============================================================

def write_convergence_csv(records: Sequence) -> str:
    """One row per sweep; the primal field stays empty for sweeps without extraction"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([
            r.sweep,
            r.direction.value,
            format_float(r.dual_bound),
            "" if r.primal_energy is None or math.isnan(r.primal_energy) else format_float(r.primal_energy),
            f"{r.wall_time:.6f}",
        ])
    return buffer.getvalue()

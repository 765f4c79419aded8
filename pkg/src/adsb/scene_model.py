"""Scene, scenario and event primitives shared by every engine.

A scene is a snapshot made of three aspects: static scenery (canonical
element -> attribute pairs), actors, and the relations between them.
Scenarios chain scenes through events.  This module also owns the
ego-centered 5x5 position grid and the numeric feature encoding used by
the experience engine.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "ALL_POSITION_LABELS",
    "Actor",
    "ActorClass",
    "DerivedSpec",
    "ElementSpec",
    "EncodingSchema",
    "Event",
    "FeatureVector",
    "Kinematics",
    "PositionCode",
    "RelationEdge",
    "Scenario",
    "ScenarioStep",
    "Scene",
    "SceneError",
    "SchemaMismatchError",
    "SUBJECT_LABEL",
    "encode_map",
    "encode_scene",
    "hour_bucket",
    "is_variable",
    "load_scenario",
    "load_scene",
    "parse_event",
    "parse_position",
    "position_label",
    "scenario_from_dict",
    "scene_from_dict",
    "scene_to_dict",
    "validate_scenario",
    "validate_scene",
]


class SceneError(Exception):
    """Malformed scene, scenario or position data."""


# ---------------------------------------------------------------------------
# Position grid
# ---------------------------------------------------------------------------

SUBJECT_LABEL = "S"

_LANE_LETTERS = {2: "LL", 1: "L", 0: "", -1: "R", -2: "RR"}
_LETTER_LANES = {v: k for k, v in _LANE_LETTERS.items() if v}
_LABEL_RE = re.compile(r"^(-)?(LL|RR|L|R)?([12])?$")


@dataclass(frozen=True)
class PositionCode:
    """Cell of the ego-centered grid.

    lane_offset: positive counts lanes to the left of the subject,
    negative to the right.  longitudinal_offset: positive is forward.
    (0, 0) is reserved for the subject vehicle itself.
    """

    lane_offset: int
    longitudinal_offset: int

    def __post_init__(self) -> None:
        if not (-2 <= self.lane_offset <= 2 and -2 <= self.longitudinal_offset <= 2):
            raise SceneError(
                f"position offsets out of grid range: ({self.lane_offset}, {self.longitudinal_offset})"
            )

    @property
    def is_subject(self) -> bool:
        return self.lane_offset == 0 and self.longitudinal_offset == 0

    def mirrored(self) -> "PositionCode":
        """The same cell seen from the other vehicle's frame."""
        return PositionCode(-self.lane_offset, -self.longitudinal_offset)


def position_label(code: PositionCode) -> str:
    """Render a grid cell as its canonical label (for example "-LL2")."""
    if code.is_subject:
        return SUBJECT_LABEL
    sign = "-" if code.longitudinal_offset < 0 else ""
    letters = _LANE_LETTERS[code.lane_offset]
    digit = str(abs(code.longitudinal_offset)) if code.longitudinal_offset != 0 else ""
    return f"{sign}{letters}{digit}"


def parse_position(label: str) -> PositionCode:
    """Inverse of :func:`position_label`; raises SceneError on unknown labels."""
    text = label.strip()
    if text.upper() in (SUBJECT_LABEL, "SUBJECT"):
        return PositionCode(0, 0)
    m = _LABEL_RE.match(text.upper())
    if not m or not text:
        raise SceneError(f"unknown position label: {label!r}")
    sign, letters, digit = m.groups()
    if digit is None and (sign or not letters):
        raise SceneError(f"unknown position label: {label!r}")
    lane = _LETTER_LANES[letters] if letters else 0
    longitudinal = int(digit) if digit else 0
    if sign:
        longitudinal = -longitudinal
    return PositionCode(lane, longitudinal)


ALL_POSITION_LABELS: tuple[str, ...] = tuple(
    position_label(PositionCode(lane, lon))
    for lane in (2, 1, 0, -1, -2)
    for lon in (-2, -1, 0, 1, 2)
    if not (lane == 0 and lon == 0)
)


# ---------------------------------------------------------------------------
# Events
# ---------------------------------------------------------------------------

_VARIABLE_TOKEN_RE = re.compile(r"^\{[a-z][a-z0-9_]*\}$")
_BARE_VARIABLE_RE = re.compile(r"^[xyz]$", re.IGNORECASE)
_ARTICLES = ("a", "an", "the")
_PUNCT_STRIP = str.maketrans("", "", ".,!?;:\"'")


def is_variable(token: str) -> bool:
    """True for slot-variable tokens such as "{x}"."""
    return bool(_VARIABLE_TOKEN_RE.match(token))


def _load_lexicon() -> dict[str, frozenset[str]]:
    words: dict[str, set[str]] = {"aux": set(), "verb": set(), "particle": set()}
    text = resources.files("adsb.data").joinpath("event_lexicon.txt").read_text("utf-8")
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, _, rest = line.partition(" ")
        if kind not in words:
            raise SceneError(f"unknown lexicon section {kind!r}")
        words[kind].update(w.lower() for w in rest.split())
    return {k: frozenset(v) for k, v in words.items()}


_LEXICON: dict[str, frozenset[str]] | None = None


def _lexicon() -> dict[str, frozenset[str]]:
    global _LEXICON
    if _LEXICON is None:
        _LEXICON = _load_lexicon()
    return _LEXICON


@dataclass(frozen=True)
class Event:
    """An actor state transfer expressed as subject / predicate / object.

    The subject slot holds an actor reference ("vehicle@RR2", an actor id)
    or a slot variable ("{x}"); it is empty only for low-confidence parses
    where no verb could be located.
    """

    subject: str
    predicate: str
    object: str = ""
    raw_text: str = ""
    low_confidence: bool = False

    @property
    def normalized(self) -> str:
        parts = [p for p in (self.subject, self.predicate, self.object) if p]
        return " ".join(parts)

    def tokens(self) -> tuple[str, ...]:
        return tuple(self.normalized.split())


def _normalize_token(token: str) -> str:
    token = token.translate(_PUNCT_STRIP)
    if not token:
        return ""
    if _VARIABLE_TOKEN_RE.match(token.lower()):
        return token.lower()
    # bare slot letters: x/y/z in any case, or any other single capital
    # except the words "A" and "I"
    if _BARE_VARIABLE_RE.match(token) or (
        len(token) == 1 and token.isalpha() and token.isupper() and token not in "AI"
    ):
        return "{" + token.lower() + "}"
    if "@" in token:
        head, _, label = token.partition("@")
        try:
            canonical = position_label(parse_position(label))
        except SceneError:
            return token.lower()
        return f"{head.lower()}@{canonical}"
    return token.lower()


def _fold_positions(tokens: list[str]) -> list[str]:
    """Collapse "<np> at position_RR2" (or "... position rr2") into "<np>@RR2"."""
    out: list[str] = []
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        label: str | None = None
        consumed = 1
        if tok.startswith("position_") or tok.startswith("position-"):
            label = tok[9:]
        elif tok == "position" and i + 1 < len(tokens):
            label = tokens[i + 1]
            consumed = 2
        if label is not None:
            try:
                canonical = position_label(parse_position(label))
            except SceneError:
                out.append(tok)
                i += consumed
                continue
            if out and out[-1] == "at":
                out.pop()
            if out and out[-1] not in _ARTICLES and "@" not in out[-1]:
                out[-1] = f"{out[-1]}@{canonical}"
            else:
                out.append(f"@{canonical}")
            i += consumed
            continue
        out.append(tok)
        i += 1
    return out


def parse_event(text: str, *, subject_hint: str = "") -> Event:
    """Parse free text into a normalized event.

    Normalization lowercases, collapses whitespace, folds "at position_X"
    into an "@X" suffix, rewrites bare slot letters to "{x}" form and
    strips the article that opens the subject slot.  The predicate is the
    first auxiliary (optionally followed by a participle and a particle)
    or the first finite verb from the shipped lexicon.  Parsing is total:
    text without a recognizable verb comes back with the whole text as
    predicate, flagged low-confidence.
    """
    if not text or not text.strip():
        raise SceneError("cannot parse an empty event")
    lex = _lexicon()
    raw_tokens = [_normalize_token(t) for t in text.split()]
    tokens = _fold_positions([t for t in raw_tokens if t])

    def is_verbish(tok: str) -> bool:
        return tok in lex["verb"] or (len(tok) > 4 and tok.endswith("ing"))

    start = end = -1
    for i, tok in enumerate(tokens):
        if tok in lex["aux"]:
            start, end = i, i + 1
            if end < len(tokens) and is_verbish(tokens[end]):
                end += 1
                if end < len(tokens) and tokens[end] in lex["particle"]:
                    end += 1
            break
        if (
            tok == "to"
            and i == 0
            and i + 1 < len(tokens)
            and (tokens[i + 1] in lex["verb"] or tokens[i + 1] in lex["aux"])
        ):
            start, end = i, i + 2
            break
        if tok in lex["verb"]:
            start, end = i, i + 1
            if end < len(tokens) and tokens[end] in lex["particle"]:
                end += 1
            break

    if start < 0:
        return Event(
            subject=subject_hint,
            predicate=" ".join(tokens),
            object="",
            raw_text=text,
            low_confidence=True,
        )

    subject_tokens = tokens[:start]
    if subject_tokens and subject_tokens[0] in _ARTICLES:
        subject_tokens = subject_tokens[1:]
    subject = " ".join(subject_tokens) or subject_hint
    return Event(
        subject=subject,
        predicate=" ".join(tokens[start:end]),
        object=" ".join(tokens[end:]),
        raw_text=text,
    )


# ---------------------------------------------------------------------------
# Actors and scenes
# ---------------------------------------------------------------------------


class ActorClass(str, Enum):
    CAR = "car"
    BUS = "bus"
    LORRY = "lorry"
    MOTORCYCLE = "motorcycle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"
    ANIMAL = "animal"
    OBJECT = "object"
    OTHER = "other"


LARGE_VEHICLE_CLASSES = frozenset({ActorClass.BUS, ActorClass.LORRY})


@dataclass(frozen=True)
class Kinematics:
    """Longitudinal state and capability envelope, SI units.

    Braking capability is a positive magnitude.
    """

    speed: float | None = None
    accel_cap_max: float | None = None
    brake_cap_max: float | None = None

    def __post_init__(self) -> None:
        for name in ("accel_cap_max", "brake_cap_max"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise SceneError(f"{name} must be strictly positive, got {value}")
        if self.speed is not None and self.speed < 0:
            raise SceneError(f"speed must be non-negative, got {self.speed}")


@dataclass(frozen=True)
class Actor:
    actor_id: str
    actor_class: ActorClass = ActorClass.CAR
    state: str = ""
    position: PositionCode | None = None
    kinematics: Kinematics | None = None
    subject: bool = False


@dataclass(frozen=True)
class RelationEdge:
    """An edge between two scene entities (actor ids or scenery element ids).

    Metric relations (gap_longitudinal, gap_lateral) carry a value in the
    given unit; purely topological or descriptive relations leave it None.
    """

    source: str
    relation: str
    target: str
    value: float | None = None
    unit: str = ""
    description: str = ""


@dataclass(frozen=True)
class Scene:
    scenery: Mapping[str, str] = field(default_factory=dict)
    actors: tuple[Actor, ...] = ()
    relations: tuple[RelationEdge, ...] = ()

    def subject(self) -> Actor:
        subjects = [a for a in self.actors if a.subject]
        if len(subjects) != 1:
            raise SceneError(f"scene must have exactly one subject actor, found {len(subjects)}")
        return subjects[0]

    def actor(self, actor_id: str) -> Actor | None:
        for a in self.actors:
            if a.actor_id == actor_id:
                return a
        return None

    def actor_at(self, label: str) -> Actor | None:
        code = parse_position(label)
        for a in self.actors:
            if a.position == code and not a.subject:
                return a
        return None

    def occupied(self, label: str) -> bool:
        return self.actor_at(label) is not None

    def gap_to(self, actor_id: str, relation: str) -> float | None:
        """Measured gap between the subject and another actor, if recorded."""
        try:
            subject_id = self.subject().actor_id
        except SceneError:
            return None
        for edge in self.relations:
            if edge.relation != relation or edge.value is None:
                continue
            ends = {edge.source, edge.target}
            if ends == {subject_id, actor_id}:
                return float(edge.value)
        return None


def validate_scene(scene: Scene, *, tag: str = "scene") -> list[str]:
    """Invariant check; returns violation strings instead of raising."""
    violations: list[str] = []
    subjects = [a for a in scene.actors if a.subject]
    if len(subjects) != 1:
        violations.append(f"{tag}: expected exactly one subject actor, found {len(subjects)}")
    for a in subjects:
        if a.position is not None and not a.position.is_subject:
            violations.append(f"{tag}: subject actor {a.actor_id!r} is not at the grid center")
    ids = [a.actor_id for a in scene.actors]
    if len(set(ids)) != len(ids):
        violations.append(f"{tag}: duplicate actor ids")
    known = set(ids) | set(scene.scenery)
    for edge in scene.relations:
        for end in (edge.source, edge.target):
            if end not in known:
                violations.append(f"{tag}: relation {edge.relation!r} references unknown entity {end!r}")
    return violations


@dataclass(frozen=True)
class ScenarioStep:
    event: Event
    resulting_scene: Scene
    metrics: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    initial: Scene
    steps: tuple[ScenarioStep, ...] = ()


def _event_references(event: Event) -> tuple[list[str], list[str]]:
    """Positional ("@L1") and id-style references carried by an event subject."""
    positions: list[str] = []
    ids: list[str] = []
    subject = event.subject
    if not subject or is_variable(subject):
        return positions, ids
    if "@" in subject:
        positions.append(subject.rsplit("@", 1)[1])
    elif " " not in subject:
        ids.append(subject)
    return positions, ids


def validate_scenario(scenario: Scenario) -> list[str]:
    """Check scene invariants plus event/scene cross references.

    A positional subject reference must be occupied in the scene preceding
    the event; an id-style reference must resolve in the preceding or the
    resulting scene (events may introduce actors into view).  Id-style
    checks apply only to ids that appear somewhere in the scenario, so
    free-text subjects stay unconstrained.
    """
    violations = validate_scene(scenario.initial, tag="initial scene")
    all_ids = {a.actor_id for a in scenario.initial.actors}
    for step in scenario.steps:
        all_ids.update(a.actor_id for a in step.resulting_scene.actors)

    previous = scenario.initial
    for i, step in enumerate(scenario.steps):
        tag = f"step {i}"
        violations.extend(validate_scene(step.resulting_scene, tag=tag))
        positions, ids = _event_references(step.event)
        for label in positions:
            try:
                if not previous.occupied(label):
                    violations.append(
                        f"{tag}: event references position {label!r} vacant in the preceding scene"
                    )
            except SceneError:
                violations.append(f"{tag}: event references invalid position label {label!r}")
        for ref in ids:
            if ref in all_ids and previous.actor(ref) is None and step.resulting_scene.actor(ref) is None:
                violations.append(f"{tag}: event references actor {ref!r} absent from adjacent scenes")
        previous = step.resulting_scene
    return violations


# ---------------------------------------------------------------------------
# Feature encoding
# ---------------------------------------------------------------------------


class SchemaMismatchError(Exception):
    """Vector/schema fingerprints differ or an element is not covered."""


@dataclass(frozen=True)
class ElementSpec:
    """Encoding recipe for one canonical element.

    Categorical elements expand into one-hot slots plus a trailing unknown
    slot; numeric elements take two slots: standardized value and an
    unknown flag.
    """

    element_id: str
    kind: str  # "categorical" | "numeric"
    categories: tuple[str, ...] = ()
    unknown_id: str = "unknown"
    mean: float = 0.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("categorical", "numeric"):
            raise ValueError(f"unknown element kind {self.kind!r}")
        if self.kind == "numeric" and self.scale <= 0:
            raise ValueError(f"numeric scale must be positive for {self.element_id!r}")

    @property
    def width(self) -> int:
        return len(self.categories) + 1 if self.kind == "categorical" else 2


HOUR_BUCKETS = ("night", "dawn", "day", "dusk")


def hour_bucket(hour: int) -> str:
    if 5 <= hour <= 7:
        return "dawn"
    if 8 <= hour <= 17:
        return "day"
    if 18 <= hour <= 20:
        return "dusk"
    return "night"


@dataclass(frozen=True)
class DerivedSpec:
    """Engineered features appended after the element blocks.

    speed/limit feed the speed-over-limit delta; the hour element feeds
    the time-of-day buckets.  Elements set to None (or absent from the
    schema) switch the corresponding block off.
    """

    speed_element: str | None = None
    limit_element: str | None = None
    hour_element: str | None = None


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    fingerprint: str

    def __post_init__(self) -> None:
        self.values.setflags(write=False)


@dataclass(frozen=True)
class EncodingSchema:
    elements: tuple[ElementSpec, ...]
    derived: DerivedSpec = DerivedSpec()

    def __post_init__(self) -> None:
        ids = [e.element_id for e in self.elements]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate element ids in encoding schema")

    @property
    def fingerprint(self) -> str:
        """Hash of element order, category sets and derived wiring.

        Standardization statistics are deliberately excluded so refitting
        means/scales keeps vectors comparable.
        """
        payload = {
            "elements": [
                [e.element_id, e.kind, list(e.categories), e.unknown_id] for e in self.elements
            ],
            "derived": [self.derived.speed_element, self.derived.limit_element, self.derived.hour_element],
        }
        digest = hashlib.sha256(json.dumps(payload, separators=(",", ":")).encode("utf-8"))
        return digest.hexdigest()[:16]

    def _has_speed_block(self) -> bool:
        ids = {e.element_id for e in self.elements}
        d = self.derived
        return bool(d.speed_element and d.limit_element and d.speed_element in ids and d.limit_element in ids)

    def _has_hour_block(self) -> bool:
        return bool(self.derived.hour_element and self.derived.hour_element in {e.element_id for e in self.elements})

    @property
    def width(self) -> int:
        total = sum(e.width for e in self.elements)
        if self._has_speed_block():
            total += 2
        if self._has_hour_block():
            total += len(HOUR_BUCKETS) + 1
        return total

    def block(self, element_id: str) -> slice:
        offset = 0
        for e in self.elements:
            if e.element_id == element_id:
                return slice(offset, offset + e.width)
            offset += e.width
        raise SchemaMismatchError(f"element {element_id!r} is not covered by the schema")

    def feature_names(self) -> list[str]:
        names: list[str] = []
        for e in self.elements:
            if e.kind == "categorical":
                names.extend(f"{e.element_id}={c}" for c in e.categories)
                names.append(f"{e.element_id}={e.unknown_id}")
            else:
                names.extend((f"{e.element_id}", f"{e.element_id}:unknown"))
        if self._has_speed_block():
            names.extend(("speed_over_limit", "speed_over_limit:unknown"))
        if self._has_hour_block():
            names.extend(f"hour_bucket={b}" for b in HOUR_BUCKETS)
            names.append("hour_bucket=unknown")
        return names


def _numeric_value(raw: str | None, spec: ElementSpec) -> float | None:
    if raw is None or raw == spec.unknown_id:
        return None
    try:
        return float(raw)
    except (TypeError, ValueError):
        return None


def encode_map(data: Mapping[str, str], schema: EncodingSchema) -> FeatureVector:
    """Encode a canonical element->attribute map into a feature vector.

    Elements absent from the map (or carrying an unrecognized attribute)
    light the unknown slot of their block.  An element present in the map
    but missing from the schema is an error naming that element.
    """
    covered = {e.element_id for e in schema.elements}
    for key in data:
        if key not in covered:
            raise SchemaMismatchError(f"element {key!r} is not covered by the schema")

    values = np.zeros(schema.width, dtype=np.float64)
    offset = 0
    for spec in schema.elements:
        raw = data.get(spec.element_id)
        if spec.kind == "categorical":
            slot = len(spec.categories)  # unknown slot
            if raw is not None and raw in spec.categories:
                slot = spec.categories.index(raw)
            values[offset + slot] = 1.0
        else:
            num = _numeric_value(raw, spec)
            if num is None:
                values[offset + 1] = 1.0
            else:
                values[offset] = (num - spec.mean) / spec.scale
        offset += spec.width

    if schema._has_speed_block():
        speed_spec = next(e for e in schema.elements if e.element_id == schema.derived.speed_element)
        limit_spec = next(e for e in schema.elements if e.element_id == schema.derived.limit_element)
        speed = _numeric_value(data.get(speed_spec.element_id), speed_spec)
        limit = _numeric_value(data.get(limit_spec.element_id), limit_spec)
        if speed is None or limit is None:
            values[offset + 1] = 1.0
        else:
            values[offset] = speed - limit
        offset += 2

    if schema._has_hour_block():
        hour_spec = next(e for e in schema.elements if e.element_id == schema.derived.hour_element)
        hour = _numeric_value(data.get(hour_spec.element_id), hour_spec)
        if hour is None or not (0 <= hour <= 23):
            values[offset + len(HOUR_BUCKETS)] = 1.0
        else:
            values[offset + HOUR_BUCKETS.index(hour_bucket(int(hour)))] = 1.0
        offset += len(HOUR_BUCKETS) + 1

    return FeatureVector(values=values, fingerprint=schema.fingerprint)


def encode_scene(scene: Scene, schema: EncodingSchema) -> FeatureVector:
    """Encode a scene's scenery; the subject's speed backfills the travel
    speed element when the scenery does not state it."""
    data = dict(scene.scenery)
    speed_element = schema.derived.speed_element
    if speed_element and speed_element not in data:
        try:
            kin = scene.subject().kinematics
        except SceneError:
            kin = None
        if kin is not None and kin.speed is not None:
            data[speed_element] = repr(float(kin.speed))
    return encode_map(data, schema)


# ---------------------------------------------------------------------------
# Interchange format (JSON)
# ---------------------------------------------------------------------------


def _actor_from_dict(obj: Mapping) -> Actor:
    kin = None
    if obj.get("kinematics"):
        k = obj["kinematics"]
        kin = Kinematics(
            speed=k.get("speed"),
            accel_cap_max=k.get("accel_cap_max"),
            brake_cap_max=k.get("brake_cap_max"),
        )
    position = None
    if obj.get("position"):
        position = parse_position(str(obj["position"]))
    try:
        actor_class = ActorClass(obj.get("class", "car"))
    except ValueError as exc:
        raise SceneError(f"unknown actor class {obj.get('class')!r}") from exc
    return Actor(
        actor_id=str(obj["id"]),
        actor_class=actor_class,
        state=str(obj.get("state", "")),
        position=position,
        kinematics=kin,
        subject=bool(obj.get("subject", False)),
    )


def _actor_to_dict(a: Actor) -> dict:
    obj: dict = {"id": a.actor_id, "class": a.actor_class.value}
    if a.subject:
        obj["subject"] = True
    if a.state:
        obj["state"] = a.state
    if a.position is not None:
        obj["position"] = position_label(a.position)
    if a.kinematics is not None:
        kin = {
            k: v
            for k, v in (
                ("speed", a.kinematics.speed),
                ("accel_cap_max", a.kinematics.accel_cap_max),
                ("brake_cap_max", a.kinematics.brake_cap_max),
            )
            if v is not None
        }
        if kin:
            obj["kinematics"] = kin
    return obj


def scene_from_dict(obj: Mapping) -> Scene:
    scenery = {str(k): str(v) for k, v in (obj.get("scenery") or {}).items()}
    actors = tuple(_actor_from_dict(a) for a in obj.get("actors") or ())
    relations = tuple(
        RelationEdge(
            source=str(r["source"]),
            relation=str(r["relation"]),
            target=str(r["target"]),
            value=(float(r["value"]) if r.get("value") is not None else None),
            unit=str(r.get("unit", "")),
            description=str(r.get("description", "")),
        )
        for r in obj.get("relations") or ()
    )
    return Scene(scenery=scenery, actors=actors, relations=relations)


def scene_to_dict(scene: Scene) -> dict:
    return {
        "scenery": dict(scene.scenery),
        "actors": [_actor_to_dict(a) for a in scene.actors],
        "relations": [
            {
                k: v
                for k, v in (
                    ("source", r.source),
                    ("relation", r.relation),
                    ("target", r.target),
                    ("value", r.value),
                    ("unit", r.unit or None),
                    ("description", r.description or None),
                )
                if v is not None
            }
            for r in scene.relations
        ],
    }


def scenario_from_dict(obj: Mapping) -> Scenario:
    initial = scene_from_dict(obj)
    steps = []
    for raw in obj.get("steps") or ():
        steps.append(
            ScenarioStep(
                event=parse_event(str(raw["event"])),
                resulting_scene=scene_from_dict(raw.get("scene") or {}),
                metrics={str(k): float(v) for k, v in (raw.get("metrics") or {}).items()},
            )
        )
    return Scenario(initial=initial, steps=tuple(steps))


def load_scene(path: str | Path) -> Scene:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))


def load_scenario(path: str | Path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_dict(json.load(fh))

"""Goal and Value Keeper: safety-state distance rules, surrounding-pattern
doctrine and behavior conformance checks.

Distance requirements combine a worst-case braking model with the
time-gap rule of thumb; both are widened by correction factors for road
surface, weather and light.  Defensive-driving prose (boxed-in, escape
route, the no-zone of large vehicles) is formalized on the ego-centered
position grid.
"""

from __future__ import annotations

import functools
import json
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .scene_model import (
    Actor,
    ActorClass,
    Event,
    LARGE_VEHICLE_CLASSES,
    PositionCode,
    Scene,
    SceneError,
    position_label,
)

logger = logging.getLogger(__name__)

CONDITION_CLASSES = ("normal", "adverse", "severe_adverse")

DISTANCE_KINDS = frozenset({"following_distance", "trailing_distance", "lateral_distance"})
PATTERN_KINDS = frozenset({"boxed_in", "no_escape_route", "no_zone", "lane_use"})


class ConfigError(Exception):
    """Safety configuration violates an invariant."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VehicleCaps:
    accel_cap_max: float = 3.5
    brake_cap_min: float = 4.0
    brake_cap_max: float = 8.0


@dataclass(frozen=True)
class BehaviorRule:
    rule_id: str
    keywords: tuple[str, ...]
    metric: str
    bound: float
    mode: str  # "min": measured must be >= bound; "max": measured must be <= bound
    unit: str = ""
    scale_with_conditions: bool = False


@dataclass(frozen=True)
class MonitorThresholds:
    severe_distance_ratio: float = 0.5
    cie_hazard_hops: int = 2
    max_hops: int = 3


@dataclass(frozen=True)
class SafetyConfig:
    response_time: float = 1.0
    time_gaps: Mapping[str, float] = field(
        default_factory=lambda: {"normal": 2.0, "adverse": 2.5, "severe_adverse": 3.0}
    )
    road_surface_factors: Mapping[str, float] = field(default_factory=dict)
    atmosphere_factors: Mapping[str, float] = field(default_factory=dict)
    light_factors: Mapping[str, float] = field(default_factory=dict)
    condition_elements: Mapping[str, str] = field(
        default_factory=lambda: {
            "road_surface": "roadway_surface_condition",
            "atmosphere": "atmospheric_conditions",
            "light": "light_condition",
            "speed_limit": "speed_limit",
        }
    )
    lateral_clearance_min: float = 1.0
    no_zone: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    lane_rules: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    lane_element: str = "subject_lane_tag"
    vehicle_caps: Mapping[str, VehicleCaps] = field(
        default_factory=lambda: {"default": VehicleCaps()}
    )
    behavior_rules: tuple[BehaviorRule, ...] = ()
    monitor: MonitorThresholds = MonitorThresholds()

    def __post_init__(self) -> None:
        if self.response_time <= 0:
            raise ConfigError(f"response time must be positive, got {self.response_time}")
        gaps = [self.time_gaps.get(c) for c in CONDITION_CLASSES]
        if any(g is None or g <= 0 for g in gaps):
            raise ConfigError("time gaps must be positive for normal/adverse/severe_adverse")
        if not (gaps[0] <= gaps[1] <= gaps[2]):
            raise ConfigError("time gaps must be non-decreasing with condition severity")
        for table_name in ("road_surface_factors", "atmosphere_factors", "light_factors"):
            for attr, factor in getattr(self, table_name).items():
                if factor < 1.0:
                    raise ConfigError(f"{table_name}[{attr!r}] = {factor} is below 1.0")
        if self.lateral_clearance_min < 0:
            raise ConfigError("lateral clearance must be non-negative")

    def caps_for(self, actor_class: ActorClass | str) -> VehicleCaps:
        key = actor_class.value if isinstance(actor_class, ActorClass) else str(actor_class)
        return self.vehicle_caps.get(key) or self.vehicle_caps.get("default") or VehicleCaps()

    @classmethod
    def from_dict(cls, obj: Mapping) -> "SafetyConfig":
        factors = obj.get("correction_factors") or {}
        caps = {
            name: VehicleCaps(**{k: float(v) for k, v in spec.items()})
            for name, spec in (obj.get("vehicle_caps") or {}).items()
        }
        rules = tuple(
            BehaviorRule(
                rule_id=r["rule_id"],
                keywords=tuple(r.get("keywords", ())),
                metric=r["metric"],
                bound=float(r["bound"]),
                mode=r.get("mode", "min"),
                unit=r.get("unit", ""),
                scale_with_conditions=bool(r.get("scale_with_conditions", False)),
            )
            for r in obj.get("behavior_rules") or ()
        )
        monitor = obj.get("monitor") or {}
        kwargs = dict(
            road_surface_factors=dict(factors.get("road_surface") or {}),
            atmosphere_factors=dict(factors.get("atmosphere") or {}),
            light_factors=dict(factors.get("light") or {}),
            no_zone={k: tuple(v) for k, v in (obj.get("no_zone") or {}).items()},
            lane_rules={k: tuple(v) for k, v in (obj.get("lane_rules") or {}).items()},
            vehicle_caps=caps or {"default": VehicleCaps()},
            behavior_rules=rules,
            monitor=MonitorThresholds(
                severe_distance_ratio=float(monitor.get("severe_distance_ratio", 0.5)),
                cie_hazard_hops=int(monitor.get("cie_hazard_hops", 2)),
                max_hops=int(monitor.get("max_hops", 3)),
            ),
        )
        for key in ("response_time", "lateral_clearance_min"):
            if key in obj:
                kwargs[key] = float(obj[key])
        for key in ("time_gaps", "condition_elements"):
            if key in obj:
                kwargs[key] = dict(obj[key])
        if "lane_element" in obj:
            kwargs["lane_element"] = str(obj["lane_element"])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "SafetyConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def default(cls) -> "SafetyConfig":
        return _default_config()


@functools.lru_cache(maxsize=1)
def _default_config() -> SafetyConfig:
    # SafetyConfig is immutable, so the shipped defaults are shared
    text = resources.files("adsb.data").joinpath("safety_defaults.json").read_text("utf-8")
    return SafetyConfig.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Violations and recommendations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GvkViolation:
    rule_id: str
    kind: str
    explanation: str
    measured: float | None = None
    measured_unit: str = ""
    required: float | None = None
    required_unit: str = ""

    def __post_init__(self) -> None:
        if self.kind in DISTANCE_KINDS and (self.measured is None or self.required is None):
            raise ValueError(f"distance violation {self.rule_id!r} must carry measured and required")


@dataclass(frozen=True)
class Recommendation:
    action: str
    detail: str
    target_speed: float | None = None


@dataclass(frozen=True)
class GvkAssessment:
    violations: tuple[GvkViolation, ...] = ()
    recommendations: tuple[Recommendation, ...] = ()
    available: bool = True


# ---------------------------------------------------------------------------
# Distance rules
# ---------------------------------------------------------------------------


def rss_min_longitudinal(
    v_rear: float,
    v_front: float,
    response_time: float,
    accel_max: float,
    brake_min: float,
    brake_max_front: float,
) -> float:
    """Worst-case minimum longitudinal gap, clamped at zero.

    The rear vehicle accelerates at its cap for the response time and then
    brakes at its committed minimum; the front vehicle brakes at its
    maximum throughout.
    """
    values = (v_rear, v_front, response_time, accel_max, brake_min, brake_max_front)
    if not all(math.isfinite(v) for v in values):
        raise ValueError(f"non-finite input to the distance model: {values}")
    if v_rear < 0 or v_front < 0:
        raise ValueError("speeds must be non-negative")
    if response_time <= 0 or accel_max <= 0 or brake_min <= 0 or brake_max_front <= 0:
        raise ValueError("response time and acceleration magnitudes must be positive")
    rho = response_time
    v_reached = v_rear + rho * accel_max
    rear_travel = v_rear * rho + 0.5 * accel_max * rho**2 + v_reached**2 / (2.0 * brake_min)
    front_travel = v_front**2 / (2.0 * brake_max_front)
    return max(0.0, rear_travel - front_travel)


def correction_factors(scene: Scene, config: SafetyConfig) -> tuple[float, float, float]:
    """(road, weather, light) multipliers for the scene's conditions."""
    elements = config.condition_elements

    def factor(table: Mapping[str, float], element_key: str) -> float:
        attr = scene.scenery.get(elements.get(element_key, ""), "")
        return float(table.get(attr, 1.0))

    return (
        factor(config.road_surface_factors, "road_surface"),
        factor(config.atmosphere_factors, "atmosphere"),
        factor(config.light_factors, "light"),
    )


def condition_class(scene: Scene, config: SafetyConfig) -> str:
    """normal / adverse / severe_adverse by the number of degraded
    condition aspects (any aspect whose correction factor exceeds 1)."""
    degraded = sum(1 for f in correction_factors(scene, config) if f > 1.0)
    if degraded == 0:
        return "normal"
    if degraded == 1:
        return "adverse"
    return "severe_adverse"


def time_gap_requirement(v: float, cls: str, config: SafetyConfig) -> float:
    """The two/two-and-a-half/three-second rule term: v times the gap."""
    if cls not in config.time_gaps:
        raise ConfigError(f"unknown condition class {cls!r}")
    return v * float(config.time_gaps[cls])


@dataclass(frozen=True)
class RequiredDistance:
    meters: float
    condition_class: str
    factor: float  # product of the three correction multipliers
    rss_used: bool  # False when kinematics were missing (time-gap term only)


def required_following_distance(
    v_s: float, scene: Scene, config: SafetyConfig, lead: Actor | None = None
) -> RequiredDistance:
    """Required gap to the vehicle ahead.

    max(worst-case braking distance, time-gap term), widened by the
    correction factors.  Without lead kinematics only the time-gap term
    applies, flagged via rss_used=False.
    """
    if v_s < 0:
        raise ValueError("subject speed must be non-negative")
    cls = condition_class(scene, config)
    a_r, a_w, a_l = correction_factors(scene, config)
    factor = a_r * a_w * a_l
    gap_term = time_gap_requirement(v_s, cls, config)

    rss_term = None
    if lead is not None and lead.kinematics is not None and lead.kinematics.speed is not None:
        try:
            subject = scene.subject()
            subject_caps = config.caps_for(subject.actor_class)
            accel = (
                subject.kinematics.accel_cap_max
                if subject.kinematics is not None and subject.kinematics.accel_cap_max is not None
                else subject_caps.accel_cap_max
            )
            lead_caps = config.caps_for(lead.actor_class)
            front_brake = (
                lead.kinematics.brake_cap_max
                if lead.kinematics.brake_cap_max is not None
                else lead_caps.brake_cap_max
            )
            rss_term = rss_min_longitudinal(
                v_rear=v_s,
                v_front=float(lead.kinematics.speed),
                response_time=config.response_time,
                accel_max=accel,
                brake_min=subject_caps.brake_cap_min,
                brake_max_front=front_brake,
            )
        except (SceneError, ValueError):
            rss_term = None

    base = gap_term if rss_term is None else max(gap_term, rss_term)
    return RequiredDistance(
        meters=base * factor,
        condition_class=cls,
        factor=factor,
        rss_used=rss_term is not None,
    )


def _subject_speed(scene: Scene) -> float | None:
    try:
        kin = scene.subject().kinematics
    except SceneError:
        return None
    return None if kin is None or kin.speed is None else float(kin.speed)


def check_distances(scene: Scene, config: SafetyConfig) -> list[GvkViolation]:
    """Following, trailing and lateral gap checks against measured gaps.

    Cells without a recorded gap measurement are skipped: distance rules
    need metric evidence, topology alone is handled by the surrounding
    pattern checks.
    """
    try:
        subject = scene.subject()
    except SceneError:
        return []
    violations: list[GvkViolation] = []
    a_r, a_w, a_l = correction_factors(scene, config)
    factor = a_r * a_w * a_l
    v_s = _subject_speed(scene)

    lead = scene.actor_at("1") or scene.actor_at("2")
    if lead is not None and v_s is not None:
        measured = scene.gap_to(lead.actor_id, "gap_longitudinal")
        if measured is not None:
            required = required_following_distance(v_s, scene, config, lead=lead)
            if measured < required.meters:
                basis = "braking model + time gap" if required.rss_used else "time gap only"
                violations.append(
                    GvkViolation(
                        rule_id="following_distance",
                        kind="following_distance",
                        measured=measured,
                        measured_unit="m",
                        required=required.meters,
                        required_unit="m",
                        explanation=(
                            f"gap to {lead.actor_id} is {measured:.1f} m, "
                            f"need {required.meters:.1f} m ({required.condition_class}, {basis})"
                        ),
                    )
                )

    trailing = scene.actor_at("-1")
    if trailing is not None and v_s is not None:
        measured = scene.gap_to(trailing.actor_id, "gap_longitudinal")
        t_kin = trailing.kinematics
        if measured is not None and t_kin is not None and t_kin.speed is not None:
            t_caps = config.caps_for(trailing.actor_class)
            subject_caps = config.caps_for(subject.actor_class)
            subject_brake = (
                subject.kinematics.brake_cap_max
                if subject.kinematics is not None and subject.kinematics.brake_cap_max is not None
                else subject_caps.brake_cap_max
            )
            required_m = (
                rss_min_longitudinal(
                    v_rear=float(t_kin.speed),
                    v_front=v_s,
                    response_time=config.response_time,
                    accel_max=t_kin.accel_cap_max or t_caps.accel_cap_max,
                    brake_min=t_caps.brake_cap_min,
                    brake_max_front=subject_brake,
                )
                * factor
            )
            if measured < required_m:
                violations.append(
                    GvkViolation(
                        rule_id="trailing_distance",
                        kind="trailing_distance",
                        measured=measured,
                        measured_unit="m",
                        required=required_m,
                        required_unit="m",
                        explanation=(
                            f"gap to trailing {trailing.actor_id} is {measured:.1f} m, "
                            f"worst-case braking needs {required_m:.1f} m"
                        ),
                    )
                )

    required_lateral = config.lateral_clearance_min * factor
    for label in ("L", "R"):
        neighbor = scene.actor_at(label)
        if neighbor is None:
            continue
        measured = scene.gap_to(neighbor.actor_id, "gap_lateral")
        if measured is not None and measured < required_lateral:
            violations.append(
                GvkViolation(
                    rule_id="lateral_distance",
                    kind="lateral_distance",
                    measured=measured,
                    measured_unit="m",
                    required=required_lateral,
                    required_unit="m",
                    explanation=(
                        f"lateral clearance to {neighbor.actor_id} at {label} is "
                        f"{measured:.2f} m, need {required_lateral:.2f} m"
                    ),
                )
            )
    return violations


# ---------------------------------------------------------------------------
# Surrounding pattern
# ---------------------------------------------------------------------------


def check_surrounding_pattern(scene: Scene, config: SafetyConfig) -> list[GvkViolation]:
    """Boxed-in, lost escape route, large-vehicle no-zone and lane-use."""
    try:
        subject = scene.subject()
    except SceneError:
        return []
    violations: list[GvkViolation] = []

    if scene.occupied("L") and scene.occupied("R") and scene.occupied("1"):
        violations.append(
            GvkViolation(
                rule_id="boxed_in",
                kind="boxed_in",
                explanation="sandwiched between occupied lanes on both sides with a lead vehicle ahead",
            )
        )

    if scene.occupied("1") and scene.occupied("L1") and scene.occupied("R1"):
        violations.append(
            GvkViolation(
                rule_id="no_escape_route",
                kind="no_escape_route",
                explanation="lead vehicle ahead and both adjacent forward cells occupied: no escape route",
            )
        )

    for actor in scene.actors:
        if actor.subject or actor.position is None:
            continue
        if actor.actor_class not in LARGE_VEHICLE_CLASSES:
            continue
        zone = config.no_zone.get(actor.actor_class.value, ())
        subject_cell = position_label(actor.position.mirrored())
        if subject_cell in zone:
            violations.append(
                GvkViolation(
                    rule_id="no_zone",
                    kind="no_zone",
                    explanation=(
                        f"subject sits in the {actor.actor_class.value} {actor.actor_id}'s "
                        f"no-zone cell {subject_cell}"
                    ),
                )
            )

    lane_tag = scene.scenery.get(config.lane_element, "")
    if lane_tag:
        prohibited = config.lane_rules.get(subject.actor_class.value, ())
        if lane_tag in prohibited:
            violations.append(
                GvkViolation(
                    rule_id="lane_use",
                    kind="lane_use",
                    explanation=f"lane {lane_tag!r} is prohibited for class {subject.actor_class.value}",
                )
            )
    return violations


# ---------------------------------------------------------------------------
# Behavior conformance
# ---------------------------------------------------------------------------


def check_behavior(
    event: Event,
    params: Mapping[str, float],
    config: SafetyConfig,
    scene: Scene | None = None,
) -> list[GvkViolation]:
    """Compare measured maneuver numbers against configured bounds.

    Minimum bounds scale up (and maximum bounds down) by the correction
    factors when the rule declares condition scaling.  Events without a
    mapped rule return empty with a warning instead of failing.
    """
    tokens = set(event.tokens())
    matched = [r for r in config.behavior_rules if tokens.intersection(r.keywords)]
    if not matched:
        logger.warning("no behavior rule maps event %r", event.normalized)
        return []
    factor = 1.0
    if scene is not None:
        a_r, a_w, a_l = correction_factors(scene, config)
        factor = a_r * a_w * a_l
    violations: list[GvkViolation] = []
    for rule in matched:
        measured = params.get(rule.metric)
        if measured is None:
            continue
        bound = rule.bound
        if rule.scale_with_conditions and factor != 1.0:
            bound = bound * factor if rule.mode == "min" else bound / factor
        broken = measured < bound if rule.mode == "min" else measured > bound
        if broken:
            comparator = "below" if rule.mode == "min" else "above"
            violations.append(
                GvkViolation(
                    rule_id=rule.rule_id,
                    kind="behavior",
                    measured=float(measured),
                    measured_unit=rule.unit,
                    required=float(bound),
                    required_unit=rule.unit,
                    explanation=(
                        f"{rule.metric} = {measured:g} {rule.unit} is {comparator} "
                        f"the bound {bound:g} {rule.unit} for {rule.rule_id}"
                    ),
                )
            )
    return violations


# ---------------------------------------------------------------------------
# Combined evaluation
# ---------------------------------------------------------------------------


def _recommend(violation: GvkViolation, scene: Scene, config: SafetyConfig) -> Recommendation:
    if violation.kind == "following_distance":
        cls = condition_class(scene, config)
        a_r, a_w, a_l = correction_factors(scene, config)
        effective_gap_s = float(config.time_gaps[cls]) * a_r * a_w * a_l
        target = (violation.measured or 0.0) / effective_gap_s if effective_gap_s > 0 else 0.0
        return Recommendation(
            action="reduce_speed",
            detail=f"reduce speed to <= {target:.1f} m/s to restore the following gap",
            target_speed=target,
        )
    if violation.kind == "trailing_distance":
        return Recommendation(
            action="open_trailing_gap",
            detail="ease ahead or change lane to let the trailing vehicle regain its gap",
        )
    if violation.kind == "lateral_distance":
        return Recommendation(
            action="restore_lateral_clearance",
            detail="shift away from the lateral neighbor or adjust speed to offset positions",
        )
    if violation.kind == "boxed_in":
        return Recommendation(
            action="open_escape_cell",
            detail="adjust speed so that a lateral cell opens and the vehicle is no longer sandwiched",
        )
    if violation.kind == "no_escape_route":
        return Recommendation(
            action="restore_escape_route",
            detail="increase the forward gap until an adjacent forward cell frees up",
        )
    if violation.kind == "no_zone":
        return Recommendation(
            action="leave_no_zone",
            detail="drop back or change lane to exit the large vehicle's no-zone",
        )
    if violation.kind == "lane_use":
        return Recommendation(action="change_lane", detail="move to a lane permitted for this vehicle class")
    return Recommendation(
        action="conform_behavior",
        detail=f"bring {violation.rule_id} within its configured bound",
    )


def gvk_evaluate(
    scene: Scene,
    recent_events: Sequence[Event | tuple[Event, Mapping[str, float]]] = (),
    config: SafetyConfig | None = None,
) -> GvkAssessment:
    """Union of distance, surrounding-pattern and behavior checks, with one
    inverted recommendation per violation.  Fail-soft."""
    config = config or SafetyConfig.default()
    try:
        violations = check_distances(scene, config)
        violations.extend(check_surrounding_pattern(scene, config))
        for item in recent_events:
            event, params = item if isinstance(item, tuple) else (item, {})
            violations.extend(check_behavior(event, params, config, scene=scene))
        recommendations = tuple(_recommend(v, scene, config) for v in violations)
        return GvkAssessment(violations=tuple(violations), recommendations=recommendations)
    except Exception:
        logger.exception("goal-and-value evaluation failed; flagged unavailable")
        return GvkAssessment(available=False)

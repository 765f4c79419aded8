"""Strategic monitor: combine the three engines into scene assessments and
gate tactical state-transition requests with GO / INHIBIT / CANCEL.

Fail-soft contract: a faulted or missing engine is flagged unavailable and
can never escalate the verdict; degraded runs cap at INHIBIT so the
strategic layer cannot block tactical execution through its own faults.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Mapping, Sequence

from .cie import CieAssessment, KnowledgeBase, cie_assess
from .ere.labels import SeverityLevel
from .ere.model import EreAssessment, EreModel, ere_assess
from .gvk import DISTANCE_KINDS, GvkAssessment, PATTERN_KINDS, SafetyConfig, gvk_evaluate
from .scene_model import ActorClass, Event, Scenario, Scene, validate_scenario

logger = logging.getLogger(__name__)


class RiskTier(IntEnum):
    NONE = 0
    CAUTION = 1
    HAZARD = 2
    SEVERE = 3


class Verdict(IntEnum):
    GO = 0
    INHIBIT = 2
    CANCEL = 3


VERDICT_BY_RISK = {
    RiskTier.NONE: Verdict.GO,
    RiskTier.CAUTION: Verdict.GO,
    RiskTier.HAZARD: Verdict.INHIBIT,
    RiskTier.SEVERE: Verdict.CANCEL,
}


@dataclass(frozen=True)
class EngineSet:
    """Loaded engines; any engine may be absent (treated as unavailable)."""

    ere: EreModel | None = None
    kb: KnowledgeBase | None = None
    safety: SafetyConfig | None = None


@dataclass(frozen=True)
class Finding:
    engine: str  # "ere" | "cie" | "gvk"
    kind: str
    tier: RiskTier
    detail: str

    def to_dict(self) -> dict:
        return {"engine": self.engine, "kind": self.kind, "tier": int(self.tier), "detail": self.detail}


@dataclass(frozen=True)
class StrategicAssessment:
    ere: EreAssessment | None
    cie: CieAssessment | None
    gvk: GvkAssessment | None
    findings: tuple[Finding, ...]
    overall_risk: RiskTier
    fail_soft: bool  # any engine unavailable


@dataclass(frozen=True)
class MonitorDecision:
    verdict: Verdict
    risk: RiskTier
    reasons: tuple[Finding, ...]
    fail_soft: bool

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.name,
            "risk": self.risk.name,
            "fail_soft": self.fail_soft,
            "reasons": [f.to_dict() for f in self.reasons],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Findings per engine
# ---------------------------------------------------------------------------


def _ere_findings(assessment: EreAssessment) -> list[Finding]:
    if not assessment.similar_found:
        return []
    top = assessment.matches[0]
    base = (
        f"{len(assessment.matches)} similar recorded accidents "
        f"(nearest case {top.case_id}, crash type {top.crash_type}, "
        f"trigger {top.trigger_event}, distance {top.distance:.3f})"
    )
    if assessment.severe_predicted:
        level = assessment.severity_level_predicted
        tier = RiskTier.SEVERE if level is not None and level >= SeverityLevel.IV else RiskTier.HAZARD
        detail = (
            f"{base}; severe damage predicted (p={assessment.severe_probability:.2f})"
            + (f", severity level {level.name}" if level is not None else "")
        )
        return [Finding("ere", "severe_experience", tier, detail)]
    return [Finding("ere", "similar_experience", RiskTier.CAUTION, base)]


def _cie_findings(assessment: CieAssessment, thresholds) -> list[Finding]:
    findings = []
    for f in assessment.foreseen:
        tier = RiskTier.HAZARD if f.hops <= thresholds.cie_hazard_hops else RiskTier.CAUTION
        path = " -> ".join(e.normalized for e in f.chain.events)
        findings.append(
            Finding(
                "cie",
                "foreseen_hazard",
                tier,
                f"{f.hazard.normalized!r} foreseeable in {f.hops} hop(s) via {path} (matched {f.matched})",
            )
        )
    return findings


def _gvk_findings(assessment: GvkAssessment, thresholds) -> list[Finding]:
    findings = []
    for v in assessment.violations:
        if v.kind in DISTANCE_KINDS:
            severe = (
                v.required is not None
                and v.measured is not None
                and v.required > 0
                and v.measured < thresholds.severe_distance_ratio * v.required
            )
            tier = RiskTier.SEVERE if severe else RiskTier.HAZARD
        elif v.kind in PATTERN_KINDS:
            tier = RiskTier.HAZARD
        else:
            tier = RiskTier.CAUTION
        findings.append(Finding("gvk", v.kind, tier, v.explanation))
    return findings


# ---------------------------------------------------------------------------
# Assessment and gating
# ---------------------------------------------------------------------------


def assess(
    engines: EngineSet,
    scene: Scene,
    recent_events: Sequence[Event | tuple[Event, Mapping[str, float]]] = (),
) -> StrategicAssessment:
    """Run every available engine over the scene; faults never propagate."""
    fail_soft = False

    # every engine call is double-guarded: the engines are internally
    # fail-soft and the monitor still refuses to let anything propagate
    ere_result: EreAssessment | None = None
    if engines.ere is not None:
        try:
            ere_result = ere_assess(engines.ere, scene)
        except Exception:
            logger.exception("experience engine fault")
            ere_result = None
        if ere_result is None or not ere_result.available:
            ere_result, fail_soft = None, True
    else:
        fail_soft = True

    triggers: list[str] = []
    if ere_result is not None:
        triggers = [m.trigger_event for m in ere_result.matches if m.trigger_event != "unknown"]

    thresholds = (engines.safety or SafetyConfig.default()).monitor

    cie_result: CieAssessment | None = None
    if engines.kb is not None:
        try:
            cie_result = cie_assess(engines.kb, scene, triggers, max_hops=thresholds.max_hops)
        except Exception:
            logger.exception("common-sense engine fault")
            cie_result = None
        if cie_result is None or not cie_result.available:
            cie_result, fail_soft = None, True
    else:
        fail_soft = True

    gvk_result: GvkAssessment | None = None
    if engines.safety is not None:
        try:
            gvk_result = gvk_evaluate(scene, recent_events, engines.safety)
        except Exception:
            logger.exception("goal-and-value engine fault")
            gvk_result = None
        if gvk_result is None or not gvk_result.available:
            gvk_result, fail_soft = None, True
    else:
        fail_soft = True

    findings: list[Finding] = []
    if ere_result is not None:
        findings.extend(_ere_findings(ere_result))
    if cie_result is not None:
        findings.extend(_cie_findings(cie_result, thresholds))
    if gvk_result is not None:
        findings.extend(_gvk_findings(gvk_result, thresholds))
    findings.sort(key=lambda f: (-int(f.tier), f.engine, f.kind, f.detail))

    overall = max((f.tier for f in findings), default=RiskTier.NONE)
    return StrategicAssessment(
        ere=ere_result,
        cie=cie_result,
        gvk=gvk_result,
        findings=tuple(findings),
        overall_risk=overall,
        fail_soft=fail_soft,
    )


def gate(
    engines: EngineSet,
    current: Scene,
    proposed: Scene,
    recent_events: Sequence[Event | tuple[Event, Mapping[str, float]]] = (),
) -> MonitorDecision:
    """Gate a tactical state-transition request by assessing the proposed
    scene.  Risk maps none/caution -> GO, hazard -> INHIBIT, severe ->
    CANCEL; degraded (fail-soft) runs cap at INHIBIT.
    """
    del current  # the request is judged on the proposed state
    assessment = assess(engines, proposed, recent_events)
    verdict = VERDICT_BY_RISK[assessment.overall_risk]
    if assessment.fail_soft and verdict == Verdict.CANCEL:
        verdict = Verdict.INHIBIT
    return MonitorDecision(
        verdict=verdict,
        risk=assessment.overall_risk,
        reasons=assessment.findings,
        fail_soft=assessment.fail_soft,
    )


# ---------------------------------------------------------------------------
# Driver advisory
# ---------------------------------------------------------------------------

PROFILE_ELEMENT_MAP = {
    "vehicle_type": "body_type",
    "body_type": "body_type",
    "vehicle_weight": "gross_vehicle_weight_rating",
    "weight": "gross_vehicle_weight_rating",
    "sex": "sex",
    "gender": "sex",
    "age": "age",
    "licence_locale": "drivers_zip_code",
    "license_locale": "drivers_zip_code",
}

_HEAVY_PROFILE_CLASSES = {"bus", "lorry", "truck", "heavy"}


@dataclass(frozen=True)
class Advisory:
    safe_speed: float | None
    lane_recommendation: str
    distancing: tuple[tuple[str, float], ...]  # (neighbor actor id, required gap m)
    surrounding_pattern_notes: tuple[str, ...]
    cautions: tuple[str, ...]
    fail_soft: bool

    def to_dict(self) -> dict:
        return {
            "safe_speed": self.safe_speed,
            "lane_recommendation": self.lane_recommendation,
            "distancing": [[a, g] for a, g in self.distancing],
            "surrounding_pattern_notes": list(self.surrounding_pattern_notes),
            "cautions": list(self.cautions),
            "fail_soft": self.fail_soft,
        }


def _merge_profile(scene: Scene, profile: Mapping[str, object]) -> Scene:
    scenery = dict(scene.scenery)
    for key, value in profile.items():
        element = PROFILE_ELEMENT_MAP.get(key)
        if element is None:
            if key != "vehicle_class":
                logger.warning("unknown driver-profile attribute %r ignored", key)
            continue
        scenery[element] = str(value)
    return Scene(scenery=scenery, actors=scene.actors, relations=scene.relations)


def advise(
    engines: EngineSet,
    scene: Scene,
    driver_profile: Mapping[str, object] | None = None,
    config: SafetyConfig | None = None,
) -> Advisory:
    """Aftermarket advisory: safe speed, lane note, per-neighbor required
    gaps and named cautions from matched crash experience.  Pure data out;
    nothing is actuated."""
    from .gvk import condition_class, correction_factors, required_following_distance

    config = config or engines.safety or SafetyConfig.default()
    profile = driver_profile or {}
    merged = _merge_profile(scene, profile)
    assessment = assess(EngineSet(ere=engines.ere, kb=engines.kb, safety=config), merged)

    cls = condition_class(merged, config)
    a_r, a_w, a_l = correction_factors(merged, config)
    factor = a_r * a_w * a_l
    gap_seconds = float(config.time_gaps[cls]) * factor

    limit = None
    limit_element = config.condition_elements.get("speed_limit", "")
    raw_limit = merged.scenery.get(limit_element)
    if raw_limit is not None:
        try:
            limit = float(raw_limit)
        except ValueError:
            limit = None

    subject_class = str(profile.get("vehicle_class", "")).lower()
    heavy = subject_class in _HEAVY_PROFILE_CLASSES

    speeds: list[float] = []
    if limit is not None:
        speeds.append(limit)
    try:
        v_s = merged.subject().kinematics
        subject_speed = v_s.speed if v_s is not None else None
    except Exception:
        subject_speed = None

    scene_for_req = merged
    if heavy:
        # heavy subjects brake worse: required gaps use heavy caps
        actors = tuple(
            replace(a, actor_class=ActorClass.LORRY) if a.subject else a for a in merged.actors
        )
        scene_for_req = Scene(scenery=merged.scenery, actors=actors, relations=merged.relations)

    distancing: list[tuple[str, float]] = []
    for label in ("1", "2"):
        lead = merged.actor_at(label)
        if lead is None:
            continue
        measured = merged.gap_to(lead.actor_id, "gap_longitudinal")
        if measured is not None and gap_seconds > 0:
            speeds.append(measured / gap_seconds)
        if subject_speed is not None:
            required = required_following_distance(float(subject_speed), scene_for_req, config, lead=lead)
            distancing.append((lead.actor_id, round(required.meters, 2)))
        break
    trailing = merged.actor_at("-1")
    if (
        trailing is not None
        and subject_speed is not None
        and trailing.kinematics is not None
        and trailing.kinematics.speed is not None
    ):
        from .gvk import rss_min_longitudinal

        t_caps = config.caps_for(trailing.actor_class)
        subject_caps = config.caps_for(ActorClass.LORRY if heavy else merged.subject().actor_class)
        required_m = rss_min_longitudinal(
            v_rear=float(trailing.kinematics.speed),
            v_front=float(subject_speed),
            response_time=config.response_time,
            accel_max=trailing.kinematics.accel_cap_max or t_caps.accel_cap_max,
            brake_min=t_caps.brake_cap_min,
            brake_max_front=subject_caps.brake_cap_max,
        ) * factor
        distancing.append((trailing.actor_id, round(required_m, 2)))
    for label in ("L", "R"):
        neighbor = merged.actor_at(label)
        if neighbor is not None:
            distancing.append((neighbor.actor_id, round(config.lateral_clearance_min * factor, 2)))

    notes = [f.detail for f in assessment.findings if f.engine == "gvk"]
    lane_note = "keep the current lane"
    for f in assessment.findings:
        if f.kind in ("no_zone", "boxed_in", "lane_use", "no_escape_route"):
            lane_note = f"reposition: {f.detail}"
            break

    cautions = []
    if assessment.ere is not None:
        for m in assessment.ere.matches:
            caution = f"recorded {m.crash_type} accidents in similar scenes (trigger {m.trigger_event})"
            if caution not in cautions:
                cautions.append(caution)
    if assessment.cie is not None:
        for f in assessment.cie.foreseen:
            caution = f"common sense foresees: {f.hazard.normalized}"
            if caution not in cautions:
                cautions.append(caution)

    return Advisory(
        safe_speed=round(min(speeds), 2) if speeds else None,
        lane_recommendation=lane_note,
        distancing=tuple(distancing),
        surrounding_pattern_notes=tuple(notes),
        cautions=tuple(cautions),
        fail_soft=assessment.fail_soft,
    )


# ---------------------------------------------------------------------------
# Scenario replay
# ---------------------------------------------------------------------------


class ScenarioValidationError(Exception):
    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations))


@dataclass(frozen=True)
class ScenarioReport:
    decisions: tuple[MonitorDecision, ...]
    intervention_rate: float
    fail_soft_count: int

    def to_dict(self) -> dict:
        return {
            "decisions": [d.to_dict() for d in self.decisions],
            "intervention_rate": self.intervention_rate,
            "fail_soft_count": self.fail_soft_count,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def run_scenario(engines: EngineSet, scenario: Scenario) -> ScenarioReport:
    """Gate every step against its resulting scene.

    Invalid scenarios raise with the full violation list before any step
    runs; replay itself is deterministic for fixed engines.
    """
    violations = validate_scenario(scenario)
    if violations:
        raise ScenarioValidationError(violations)
    decisions: list[MonitorDecision] = []
    current = scenario.initial
    for step in scenario.steps:
        decision = gate(
            engines,
            current,
            step.resulting_scene,
            recent_events=[(step.event, step.metrics)],
        )
        decisions.append(decision)
        current = step.resulting_scene
    interventions = sum(1 for d in decisions if d.verdict != Verdict.GO)
    return ScenarioReport(
        decisions=tuple(decisions),
        intervention_rate=interventions / len(decisions) if decisions else 0.0,
        fail_soft_count=sum(1 for d in decisions if d.fail_soft),
    )

"""Strategic monitor: assessment fusion, gating, advisories, replay."""

import dataclasses
from importlib import resources

import numpy as np
import pytest

from adsb.cie import KnowledgeBase
from adsb.monitor import (
    EngineSet,
    RiskTier,
    ScenarioValidationError,
    Verdict,
    advise,
    assess,
    gate,
    run_scenario,
)
from adsb.scene_model import (
    Actor,
    ActorClass,
    Kinematics,
    PositionCode,
    Scenario,
    ScenarioStep,
    Scene,
    load_scenario,
    parse_event,
)

import synth


@pytest.fixture()
def engines(tiny_model, seed_kb, safety_config):
    return EngineSet(ere=tiny_model, kb=seed_kb, safety=safety_config)


def _benign_scene():
    return synth.build_scene(
        {
            "light_condition": "daylight",
            "roadway_surface_condition": "dry",
            "atmospheric_conditions": "clear",
            "travel_speed": "9000",  # far from any training exemplar
        },
        subject_speed=20.0,
    )


def test_benign_scene_is_risk_free(engines):
    assessment = assess(engines, _benign_scene())
    assert assessment.overall_risk == RiskTier.NONE
    assert assessment.findings == ()
    assert not assessment.fail_soft


def test_distance_violation_raises_risk_to_hazard(engines):
    scene = synth.build_scene(
        {"travel_speed": "9000"},
        neighbors={"1": (ActorClass.CAR, None)},
        gaps={"1": 30.0},
        subject_speed=30.0,
    )
    assessment = assess(engines, scene)
    assert assessment.overall_risk >= RiskTier.HAZARD
    decision = gate(engines, _benign_scene(), scene)
    assert decision.verdict == Verdict.INHIBIT
    assert decision.reasons


def test_half_gap_distance_violation_is_severe(engines):
    scene = synth.build_scene(
        {"travel_speed": "9000"},
        neighbors={"1": (ActorClass.CAR, None)},
        gaps={"1": 20.0},  # below 50% of the 60 m requirement
        subject_speed=30.0,
    )
    assessment = assess(engines, scene)
    assert assessment.overall_risk == RiskTier.SEVERE
    assert gate(engines, _benign_scene(), scene).verdict == Verdict.CANCEL


def test_broken_ere_engine_degrades_to_fail_soft(engines):
    broken = dataclasses.replace(
        engines,
        ere=dataclasses.replace(
            engines.ere,
            reducer=dataclasses.replace(
                engines.ere.reducer, components=np.zeros((2, 3)), fingerprint=""
            ),
        ),
    )
    assessment = assess(broken, _benign_scene())
    assert assessment.ere is None
    assert assessment.fail_soft


def test_missing_engines_cap_verdict_at_inhibit(engines, tiny_model):
    severe_case = next(
        c for c in synth.make_cases(200, seed=11, rule="binary") if c.binary_severity == 1
    )
    scene = synth.scene_from_causal(dict(severe_case.causal))

    full = assess(engines, scene)
    assert full.overall_risk == RiskTier.SEVERE  # matched severe exemplar, level IV
    assert gate(engines, _benign_scene(), scene).verdict == Verdict.CANCEL

    without_ere = EngineSet(ere=None, kb=engines.kb, safety=engines.safety)
    decision = gate(without_ere, _benign_scene(), scene)
    assert decision.fail_soft
    assert decision.verdict <= Verdict.INHIBIT


def test_disabling_engines_never_raises_verdict(engines):
    scenes = [
        _benign_scene(),
        synth.build_scene(
            {"travel_speed": "9000"},
            neighbors={"1": (ActorClass.LORRY, None)},
            gaps={"1": 25.0},
            subject_speed=30.0,
        ),
    ]
    subsets = [
        EngineSet(
            ere=engines.ere if use_ere else None,
            kb=engines.kb if use_kb else None,
            safety=engines.safety if use_gvk else None,
        )
        for use_ere in (True, False)
        for use_kb in (True, False)
        for use_gvk in (True, False)
    ]
    for scene in scenes:
        full_verdict = gate(engines, _benign_scene(), scene).verdict
        for subset in subsets:
            assert gate(subset, _benign_scene(), scene).verdict <= full_verdict


def test_go_with_empty_reasons_means_no_findings(engines):
    decision = gate(engines, _benign_scene(), _benign_scene())
    assert decision.verdict == Verdict.GO
    assert decision.reasons == ()


def test_decision_serialization_is_deterministic(engines):
    scene = synth.build_scene(
        {"travel_speed": "9000"},
        neighbors={"1": (ActorClass.CAR, None)},
        gaps={"1": 30.0},
        subject_speed=30.0,
    )
    a = gate(engines, _benign_scene(), scene).to_json()
    b = gate(engines, _benign_scene(), scene).to_json()
    assert a == b


# ---------------------------------------------------------------------------
# Advisory
# ---------------------------------------------------------------------------


def test_safe_scene_advisory_uses_limit_and_gap(engines):
    scene = synth.build_scene(
        {"travel_speed": "9000", "speed_limit": "25"},
        neighbors={"1": (ActorClass.CAR, 20.0)},
        gaps={"1": 30.0},
        subject_speed=15.0,
    )
    advisory = advise(engines, scene, {}, engines.safety)
    # gap-feasible speed 30/2 = 15 is the binding constraint vs limit 25
    assert advisory.safe_speed == pytest.approx(15.0)
    assert advisory.distancing and advisory.distancing[0][0] == "n_1"


def test_lorry_no_zone_advisory_note(engines):
    scene = synth.build_scene({"travel_speed": "9000"}, neighbors={"1": (ActorClass.LORRY, None)})
    advisory = advise(engines, scene, {}, engines.safety)
    assert "no-zone" in advisory.lane_recommendation


def test_advisory_covers_all_measured_neighbors(engines):
    scene = synth.build_scene(
        {"travel_speed": "9000"},
        neighbors={
            "1": (ActorClass.CAR, 20.0),
            "-1": (ActorClass.CAR, 22.0),
            "L": (ActorClass.CAR, 20.0),
        },
        gaps={"1": 120.0, "-1": 80.0},
        lateral_gaps={"L": 2.5},
        subject_speed=20.0,
    )
    advisory = advise(engines, scene, {}, engines.safety)
    named = dict(advisory.distancing)
    assert set(named) == {"n_1", "n_m1", "n_L"}
    assert named["n_L"] == pytest.approx(1.0)  # lateral clearance floor
    assert named["n_1"] > 0 and named["n_m1"] > 0


def test_heavy_profile_increases_required_gap(engines):
    scene = synth.build_scene(
        {"travel_speed": "9000"},
        neighbors={"1": (ActorClass.CAR, 20.0)},
        gaps={"1": 120.0},
        subject_speed=20.0,
    )
    light = advise(engines, scene, {"vehicle_class": "car"}, engines.safety)
    heavy = advise(engines, scene, {"vehicle_class": "lorry"}, engines.safety)
    assert heavy.distancing[0][1] > light.distancing[0][1]


def test_unknown_profile_keys_ignored_with_warning(engines, caplog):
    with caplog.at_level("WARNING"):
        advise(engines, _benign_scene(), {"favourite_colour": "teal"}, engines.safety)
    assert any("favourite_colour" in r.message for r in caplog.records)


# ---------------------------------------------------------------------------
# Scenario replay
# ---------------------------------------------------------------------------


def test_zero_step_scenario(engines):
    report = run_scenario(engines, Scenario(initial=_benign_scene()))
    assert report.decisions == ()
    assert report.intervention_rate == 0.0


def test_invalid_scenario_refused_before_running(engines):
    bad = Scenario(
        initial=_benign_scene(),
        steps=(
            ScenarioStep(
                event=parse_event("the car is braking"),
                resulting_scene=Scene(actors=()),  # no subject
            ),
        ),
    )
    with pytest.raises(ScenarioValidationError):
        run_scenario(engines, bad)


def test_ball_scenario_inhibits_with_cie_evidence(engines):
    scenario = load_scenario(
        str(resources.files("adsb.data") / "scenarios" / "ball_intersection.json")
    )
    report = run_scenario(engines, scenario)
    non_go = [d for d in report.decisions if d.verdict != Verdict.GO]
    assert non_go
    cie_reasons = [
        f for d in non_go for f in d.reasons if f.engine == "cie" and "car hits a person" in f.detail
    ]
    assert cie_reasons
    assert report.intervention_rate > 0


def test_scenario_replay_deterministic(engines):
    scenario = load_scenario(
        str(resources.files("adsb.data") / "scenarios" / "ball_intersection.json")
    )
    assert run_scenario(engines, scenario).to_json() == run_scenario(engines, scenario).to_json()

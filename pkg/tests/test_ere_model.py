"""Experience-model training, similarity search, assessment, persistence."""

import numpy as np
import pytest

from adsb.ere.cluster import ClusterModel, ClusterParams
from adsb.ere.forest import ForestParams, train_forest
from adsb.ere.labels import SeverityLevel
from adsb.ere.model import (
    EreModel,
    EreTrainConfig,
    ExemplarIndex,
    build_schema,
    engineer_features,
    ere_assess,
    evaluate,
    find_similar,
    load_model,
    predict_rating,
    predict_severe,
    save_model,
    train_ere,
)
from adsb.ere.reducer import Reducer
from adsb.scene_model import FeatureVector, SchemaMismatchError

import synth


def brute_force_matches(points, query, threshold):
    """Oracle: indices of points within the threshold, by exhaustive scan."""
    distances = np.sqrt(((points - query) ** 2).sum(axis=1))
    return {i for i in range(len(points)) if distances[i] <= threshold}


def _dummy_schema(d):
    # numeric elements take two slots each, so d must be even here
    from adsb.scene_model import ElementSpec, EncodingSchema

    assert d % 2 == 0
    return EncodingSchema(elements=tuple(ElementSpec(f"f{i}", "numeric") for i in range(d // 2)))


def identity_model(points, threshold, seed=0):
    """EreModel over raw points with an identity reducer, for search tests."""
    n, d = points.shape
    schema = _dummy_schema(d)
    labels = np.zeros(n, dtype=np.int64)
    forest = train_forest(
        np.vstack([points, points + 100.0]),
        np.array([0] * n + [1] * n),
        ForestParams(n_trees=3, max_depth=3, min_leaf=1),
        seed=seed,
    )
    return EreModel(
        schema=schema,
        reducer=Reducer(mean=np.zeros(d), components=np.eye(d), fingerprint=schema.fingerprint),
        cluster=ClusterModel(method="kmeans", labels=labels, centroids=points[:1].copy()),
        exemplars=ExemplarIndex(
            reduced=points,
            case_ids=tuple(f"c{i:04d}" for i in range(n)),
            crash_types=tuple("rear_end_stopped" for _ in range(n)),
            triggers=tuple("object_in_roadway" for _ in range(n)),
        ),
        severe_forest=forest,
        rating_forest=forest,
        similarity_threshold=threshold,
        metadata={"seed": seed, "train_size": n},
    )


def test_find_similar_matches_brute_force_scan():
    rng = np.random.default_rng(0)
    for trial in range(10):
        n = int(rng.integers(5, 300))
        d = 4
        points = rng.normal(size=(n, d))
        threshold = float(rng.uniform(0.5, 2.5))
        model = identity_model(points, threshold, seed=trial)
        query = rng.normal(size=d)
        matches = find_similar(model, query)
        got = {model.exemplars.case_ids.index(m.case_id) for m in matches}
        assert got == brute_force_matches(points, query, threshold)
        distances = [m.distance for m in matches]
        assert distances == sorted(distances)


def test_query_equal_to_training_point_is_nearest_at_zero():
    rng = np.random.default_rng(1)
    points = rng.normal(size=(50, 4))
    model = identity_model(points, threshold=1.0)
    matches = find_similar(model, points[17])
    assert matches[0].case_id == "c0017"
    assert matches[0].distance == 0.0


def test_far_query_matches_nothing():
    points = np.random.default_rng(2).normal(size=(30, 4))
    model = identity_model(points, threshold=1.0)
    assert find_similar(model, points.mean(axis=0) + 1000.0) == []


# ---------------------------------------------------------------------------
# Training pipeline on synthetic cases
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def trained(synth_catalog):
    cases = synth.make_cases(300, seed=21, rule="binary")
    config = EreTrainConfig(
        seed=7,
        reduce_k=10,
        cluster=ClusterParams(method="kmeans", k=5),
        forest=ForestParams(n_trees=12, max_depth=10, min_leaf=2, max_features=None),
    )
    return train_ere(cases, synth_catalog, config), cases


def test_training_is_deterministic(synth_catalog, tmp_path):
    cases = synth.make_cases(80, seed=4)
    config = EreTrainConfig(seed=3, reduce_k=6, cluster=ClusterParams(k=3),
                            forest=ForestParams(n_trees=5, max_depth=6, min_leaf=2))
    a_path, b_path = tmp_path / "a.gz", tmp_path / "b.gz"
    save_model(train_ere(cases, synth_catalog, config), a_path)
    save_model(train_ere(cases, synth_catalog, config), b_path)
    assert a_path.read_bytes() == b_path.read_bytes()


def test_assessment_pipeline_short_circuits_on_no_match(trained):
    model, _ = trained
    scene = synth.scene_from_causal(
        {
            "travel_speed": "9999",  # far outside anything seen
            "speed_limit": "1",
            "light_condition": "daylight",
        }
    )
    # out-of-range numeric becomes huge standardized value -> far away
    assessment = ere_assess(model, scene)
    assert assessment.available
    assert not assessment.similar_found
    assert assessment.severe_predicted is None
    assert assessment.severity_level_predicted is None


def test_assessment_finds_training_scene_and_predicts_severe(trained):
    model, cases = trained
    severe_case = next(c for c in cases if c.binary_severity == 1)
    scene = synth.scene_from_causal(dict(severe_case.causal))
    assessment = ere_assess(model, scene)
    assert assessment.similar_found
    assert assessment.matches[0].distance == pytest.approx(0.0, abs=1e-9)
    assert assessment.matches[0].case_id == severe_case.case_id
    assert assessment.severe_predicted is True
    assert assessment.severity_level_predicted is not None
    assert assessment.level_probabilities is not None
    total = sum(p for _, p in assessment.level_probabilities)
    assert total == pytest.approx(1.0, abs=1e-9)


def test_trigger_event_passes_through_from_training_case(trained):
    model, cases = trained
    case = cases[0]
    scene = synth.scene_from_causal(dict(case.causal))
    matches = find_similar(model, engineer_features(case, model.schema))
    me = next(m for m in matches if m.case_id == case.case_id)
    assert me.trigger_event == case.causal["critical_event_precrash"]
    assert me.crash_type == case.effects.crash_type


def test_fingerprint_mismatch_fails_fast(trained, synth_catalog):
    model, cases = trained
    other_schema = build_schema(synth_catalog, config=EreTrainConfig(hour_element=None))
    vector = FeatureVector(values=np.zeros(other_schema.width), fingerprint=other_schema.fingerprint)
    with pytest.raises(SchemaMismatchError):
        find_similar(model, vector)


def test_predict_helpers(trained):
    model, cases = trained
    vec = engineer_features(cases[0], model.schema)
    label, prob = predict_severe(model, vec)
    assert label in (0, 1)
    assert 0.0 <= prob <= 1.0
    level, probs = predict_rating(model, vec)
    assert isinstance(level, SeverityLevel)
    pairs = dict(probs)
    assert max(pairs, key=pairs.get) == int(level)


def test_evaluate_supports_sum_to_holdout(trained):
    model, cases = trained
    report = evaluate(model, cases[:100], target="binary")
    assert sum(e.support for e in report.entries) == 100
    report = evaluate(model, cases[:100], target="rating")
    assert report.total_support == 100


def test_serialization_round_trip_and_version_guards(trained, tmp_path):
    model, cases = trained
    path = tmp_path / "model.json.gz"
    save_model(model, path)
    restored = load_model(path)
    vec = engineer_features(cases[5], model.schema)
    assert predict_severe(restored, vec) == predict_severe(model, vec)
    assert restored.similarity_threshold == model.similarity_threshold
    assert np.array_equal(restored.exemplars.reduced, model.exemplars.reduced)

    import gzip, json

    payload = json.loads(gzip.open(path).read())
    payload["version"] = "adsb-ere/999"
    bad = tmp_path / "bad.json.gz"
    with gzip.open(bad, "wt") as fh:
        json.dump(payload, fh)
    with pytest.raises(ValueError, match="version"):
        load_model(bad)

    payload = json.loads(gzip.open(path).read())
    payload["fingerprint"] = "deadbeef"
    corrupt = tmp_path / "corrupt.json.gz"
    with gzip.open(corrupt, "wt") as fh:
        json.dump(payload, fh)
    with pytest.raises(SchemaMismatchError):
        load_model(corrupt)


def test_empty_training_set_rejected(synth_catalog):
    with pytest.raises(ValueError):
        train_ere([], synth_catalog, EreTrainConfig())


def test_hdbscan_backed_training_and_search(synth_catalog, tmp_path):
    cases = synth.make_cases(120, seed=14)
    config = EreTrainConfig(
        seed=2,
        reduce_k=6,
        cluster=ClusterParams(method="hdbscan", min_cluster_size=5),
        forest=ForestParams(n_trees=5, max_depth=6, min_leaf=2),
    )
    model = train_ere(cases, synth_catalog, config)
    assert model.cluster.method == "hdbscan"
    assert len(model.cluster.labels) == len(cases)
    scene = synth.scene_from_causal(dict(cases[3].causal))
    assessment = ere_assess(model, scene)
    assert assessment.similar_found
    assert assessment.matches[0].case_id == cases[3].case_id
    path = tmp_path / "hdbscan_model.json.gz"
    save_model(model, path)
    restored = load_model(path)
    assert restored.cluster.method == "hdbscan"
    assert np.array_equal(restored.cluster.labels, model.cluster.labels)

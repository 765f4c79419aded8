"""Experience engine: schema building, training, similarity search and
scene assessment against historical crash records."""

from __future__ import annotations

import gzip
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from ..scene_model import (
    DerivedSpec,
    ElementSpec,
    EncodingSchema,
    FeatureVector,
    Scene,
    SchemaMismatchError,
    encode_map,
    encode_scene,
)
from .cluster import ClusterModel, ClusterParams, train_similar_search
from .forest import ForestParams, RandomForest, train_forest
from .labels import SeverityLevel
from .reducer import Reducer, fit_reducer, reduce_matrix, reduce_vector
from .report import ClassificationReport, classification_report

if TYPE_CHECKING:  # avoids a runtime import cycle with catalog_ingest
    from ..catalog_ingest import ConsolidatedCase, ElementCatalog

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = "adsb-ere/1"


@dataclass(frozen=True)
class EreTrainConfig:
    seed: int = 0
    reduce_k: int = 32
    cluster: ClusterParams = field(default_factory=ClusterParams)
    forest: ForestParams = field(default_factory=ForestParams)
    rating_forest: ForestParams | None = None
    threshold_percentile: float = 95.0
    similarity_threshold: float | None = None
    trigger_element: str = "critical_event_precrash"
    speed_element: str | None = "travel_speed"
    limit_element: str | None = "speed_limit"
    hour_element: str | None = "hour_of_crash"


@dataclass(frozen=True)
class ExemplarIndex:
    """Training exemplars in reduced space plus their outcome metadata."""

    reduced: np.ndarray  # (n, k)
    case_ids: tuple[str, ...]
    crash_types: tuple[str, ...]
    triggers: tuple[str, ...]


@dataclass
class EreModel:
    schema: EncodingSchema
    reducer: Reducer
    cluster: ClusterModel
    exemplars: ExemplarIndex
    severe_forest: RandomForest
    rating_forest: RandomForest
    similarity_threshold: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.reducer.fingerprint and self.reducer.fingerprint != self.schema.fingerprint:
            raise SchemaMismatchError("reducer and schema fingerprints differ")


@dataclass(frozen=True)
class SimilarMatch:
    cluster_id: int
    case_id: str
    crash_type: str
    trigger_event: str
    distance: float


@dataclass(frozen=True)
class EreAssessment:
    similar_found: bool = False
    matches: tuple[SimilarMatch, ...] = ()
    severe_predicted: bool | None = None
    severe_probability: float | None = None
    severity_level_predicted: SeverityLevel | None = None
    level_probabilities: tuple[tuple[int, float], ...] | None = None
    available: bool = True


# ---------------------------------------------------------------------------
# Schema and features
# ---------------------------------------------------------------------------


def build_schema(
    catalog: "ElementCatalog",
    cases: Sequence["ConsolidatedCase"] | None = None,
    config: EreTrainConfig | None = None,
) -> EncodingSchema:
    """Encoding schema over the catalog's causal elements.

    Numeric standardization statistics come from the training cases when
    provided; they do not affect the schema fingerprint.
    """
    config = config or EreTrainConfig()
    elements = []
    for entry in catalog.causal_entries():
        if entry.kind == "numeric":
            mean, scale = 0.0, 1.0
            if cases:
                values = []
                for case in cases:
                    raw = case.causal.get(entry.element_id)
                    if raw is None or raw == entry.unknown_id:
                        continue
                    try:
                        values.append(float(raw))
                    except ValueError:
                        continue
                if values:
                    mean = float(np.mean(values))
                    std = float(np.std(values))
                    scale = std if std > 0 else 1.0
            elements.append(
                ElementSpec(entry.element_id, "numeric", unknown_id=entry.unknown_id, mean=mean, scale=scale)
            )
        else:
            # identifier-kind elements consolidate to unknown by design;
            # they become a single-slot block here.
            elements.append(
                ElementSpec(
                    entry.element_id,
                    "categorical",
                    categories=entry.categories() if entry.kind == "categorical" else (),
                    unknown_id=entry.unknown_id,
                )
            )
    ids = {e.element_id for e in elements}
    derived = DerivedSpec(
        speed_element=config.speed_element if config.speed_element in ids else None,
        limit_element=config.limit_element if config.limit_element in ids else None,
        hour_element=config.hour_element if config.hour_element in ids else None,
    )
    return EncodingSchema(elements=tuple(elements), derived=derived)


def engineer_features(case: "ConsolidatedCase", schema: EncodingSchema) -> FeatureVector:
    """Feature vector for a consolidated case, including the derived
    speed-over-limit delta and time-of-day buckets."""
    return encode_map(case.causal, schema)


def _feature_matrix(cases: Sequence["ConsolidatedCase"], schema: EncodingSchema) -> np.ndarray:
    return np.stack([engineer_features(c, schema).values for c in cases])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def _nearest_neighbor_distances(Z: np.ndarray) -> np.ndarray:
    n = len(Z)
    out = np.empty(n)
    chunk = max(1, (1 << 22) // max(1, n))
    for start in range(0, n, chunk):
        block = Z[start : start + chunk]
        d2 = ((block[:, None, :] - Z[None, :, :]) ** 2).sum(axis=2)
        for i in range(len(block)):
            d2[i, start + i] = np.inf
        out[start : start + chunk] = np.sqrt(d2.min(axis=1))
    return out


def train_ere(
    cases: Sequence["ConsolidatedCase"],
    catalog: "ElementCatalog",
    config: EreTrainConfig | None = None,
) -> EreModel:
    """Full training pipeline: encode, reduce, cluster, fit both forests.

    All component seeds derive from config.seed, so repeated runs produce
    byte-identical artifacts.
    """
    config = config or EreTrainConfig()
    if not cases:
        raise ValueError("cannot train on an empty dataset")

    schema = build_schema(catalog, cases, config)
    X = _feature_matrix(cases, schema)
    k = min(config.reduce_k, X.shape[1])
    reducer = fit_reducer(X, k, fingerprint=schema.fingerprint)
    Z = reduce_matrix(reducer, X)

    seeds = np.random.SeedSequence(config.seed).generate_state(3)
    cluster = train_similar_search(Z, replace(config.cluster, seed=int(seeds[0])))

    if config.similarity_threshold is not None:
        threshold = float(config.similarity_threshold)
    elif len(Z) >= 2:
        threshold = float(np.percentile(_nearest_neighbor_distances(Z), config.threshold_percentile))
    else:
        threshold = 0.0

    severe_forest = train_forest(
        X, np.asarray([c.binary_severity for c in cases]), config.forest, seed=int(seeds[1])
    )
    rating_forest = train_forest(
        X,
        np.asarray([int(c.severity_level) for c in cases]),
        config.rating_forest or config.forest,
        seed=int(seeds[2]),
    )

    exemplars = ExemplarIndex(
        reduced=Z,
        case_ids=tuple(c.case_id for c in cases),
        crash_types=tuple(c.effects.crash_type for c in cases),
        triggers=tuple(str(c.causal.get(config.trigger_element, "unknown")) for c in cases),
    )
    return EreModel(
        schema=schema,
        reducer=reducer,
        cluster=cluster,
        exemplars=exemplars,
        severe_forest=severe_forest,
        rating_forest=rating_forest,
        similarity_threshold=threshold,
        metadata={"seed": config.seed, "train_size": len(cases), "version": ARTIFACT_VERSION},
    )


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def _as_full_vector(model: EreModel, vector: FeatureVector | np.ndarray) -> np.ndarray:
    if isinstance(vector, FeatureVector):
        if vector.fingerprint != model.schema.fingerprint:
            raise SchemaMismatchError("feature vector fingerprint does not match the model schema")
        return vector.values
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (model.reducer.input_dim,):
        raise SchemaMismatchError(
            f"expected a vector of dimension {model.reducer.input_dim}, got {v.shape}"
        )
    return v


def find_similar(model: EreModel, vector: FeatureVector | np.ndarray) -> list[SimilarMatch]:
    """Training exemplars within the similarity threshold, nearest first.

    An empty list means no recorded experience marks the scene dangerous.
    """
    full = _as_full_vector(model, vector)
    z = reduce_vector(model.reducer, full)
    distances = np.sqrt(((model.exemplars.reduced - z) ** 2).sum(axis=1))
    hits = np.nonzero(distances <= model.similarity_threshold)[0]
    matches = [
        SimilarMatch(
            cluster_id=int(model.cluster.labels[i]),
            case_id=model.exemplars.case_ids[i],
            crash_type=model.exemplars.crash_types[i],
            trigger_event=model.exemplars.triggers[i],
            distance=float(distances[i]),
        )
        for i in hits
    ]
    matches.sort(key=lambda m: (m.distance, m.case_id))
    return matches


def predict_severe(model: EreModel, vector: FeatureVector | np.ndarray) -> tuple[int, float]:
    """(label, vote fraction of the winning label) from the binary forest."""
    full = _as_full_vector(model, vector)
    return model.severe_forest.predict_one(full)


def predict_rating(
    model: EreModel, vector: FeatureVector | np.ndarray
) -> tuple[SeverityLevel, tuple[tuple[int, float], ...]]:
    """(level, per-level vote fractions); the level is the probability argmax."""
    full = _as_full_vector(model, vector)
    probs = model.rating_forest.predict_proba(full.reshape(1, -1))[0]
    code = int(np.argmax(probs))
    level = SeverityLevel(model.rating_forest.classes[code])
    pairs = tuple((int(c), float(p)) for c, p in zip(model.rating_forest.classes, probs))
    return level, pairs


def ere_assess(model: EreModel, scene: Scene) -> EreAssessment:
    """Encode -> reduce -> similar search -> severe detection -> rating.

    Internal faults never propagate; they come back as an unavailable
    assessment.
    """
    try:
        vector = encode_scene(scene, model.schema)
        matches = tuple(find_similar(model, vector))
        if not matches:
            return EreAssessment(similar_found=False)
        label, prob = predict_severe(model, vector)
        if label != 1:
            return EreAssessment(
                similar_found=True, matches=matches, severe_predicted=False, severe_probability=prob
            )
        level, level_probs = predict_rating(model, vector)
        return EreAssessment(
            similar_found=True,
            matches=matches,
            severe_predicted=True,
            severe_probability=prob,
            severity_level_predicted=level,
            level_probabilities=level_probs,
        )
    except Exception:
        logger.exception("experience assessment failed; flagged unavailable")
        return EreAssessment(available=False)


def evaluate(
    model: EreModel, holdout: Sequence["ConsolidatedCase"], target: str = "binary"
) -> ClassificationReport:
    """Holdout report for the severe detector or the severity rater."""
    if not holdout:
        raise ValueError("holdout must be non-empty")
    X = _feature_matrix(holdout, model.schema)
    if target == "binary":
        y_true = [c.binary_severity for c in holdout]
        y_pred = model.severe_forest.predict(X).tolist()
    elif target == "rating":
        y_true = [int(c.severity_level) for c in holdout]
        y_pred = model.rating_forest.predict(X).tolist()
    else:
        raise ValueError(f"unknown target {target!r}")
    return classification_report(y_true, y_pred)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _schema_to_dict(schema: EncodingSchema) -> dict:
    return {
        "elements": [
            {
                "element_id": e.element_id,
                "kind": e.kind,
                "categories": list(e.categories),
                "unknown_id": e.unknown_id,
                "mean": e.mean,
                "scale": e.scale,
            }
            for e in schema.elements
        ],
        "derived": {
            "speed_element": schema.derived.speed_element,
            "limit_element": schema.derived.limit_element,
            "hour_element": schema.derived.hour_element,
        },
    }


def _schema_from_dict(obj: dict) -> EncodingSchema:
    return EncodingSchema(
        elements=tuple(
            ElementSpec(
                element_id=e["element_id"],
                kind=e["kind"],
                categories=tuple(e["categories"]),
                unknown_id=e["unknown_id"],
                mean=float(e["mean"]),
                scale=float(e["scale"]),
            )
            for e in obj["elements"]
        ),
        derived=DerivedSpec(**obj["derived"]),
    )


def save_model(model: EreModel, path: str | Path) -> None:
    """Single versioned artifact; byte-identical for identical models."""
    payload = {
        "version": ARTIFACT_VERSION,
        "fingerprint": model.schema.fingerprint,
        "schema": _schema_to_dict(model.schema),
        "reducer": {
            "mean": model.reducer.mean.tolist(),
            "components": model.reducer.components.tolist(),
        },
        "cluster": {
            "method": model.cluster.method,
            "labels": model.cluster.labels.tolist(),
            "centroids": model.cluster.centroids.tolist() if model.cluster.centroids is not None else None,
            "params": model.cluster.params,
        },
        "exemplars": {
            "reduced": model.exemplars.reduced.tolist(),
            "case_ids": list(model.exemplars.case_ids),
            "crash_types": list(model.exemplars.crash_types),
            "triggers": list(model.exemplars.triggers),
        },
        "severe_forest": model.severe_forest.to_dict(),
        "rating_forest": model.rating_forest.to_dict(),
        "similarity_threshold": model.similarity_threshold,
        "metadata": model.metadata,
    }
    raw = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        # filename="" and mtime=0 keep identical models byte-identical
        with gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
            gz.write(raw)


def load_model(path: str | Path) -> EreModel:
    """Refuses artifacts with a different version or a corrupted schema
    fingerprint."""
    with gzip.open(path, "rb") as fh:
        payload = json.loads(fh.read().decode("utf-8"))
    version = payload.get("version")
    if version != ARTIFACT_VERSION:
        raise ValueError(f"unsupported model artifact version {version!r}, expected {ARTIFACT_VERSION!r}")
    schema = _schema_from_dict(payload["schema"])
    if schema.fingerprint != payload.get("fingerprint"):
        raise SchemaMismatchError("stored fingerprint does not match the stored schema")
    reducer = Reducer(
        mean=np.asarray(payload["reducer"]["mean"], dtype=np.float64),
        components=np.asarray(payload["reducer"]["components"], dtype=np.float64),
        fingerprint=schema.fingerprint,
    )
    cl = payload["cluster"]
    cluster = ClusterModel(
        method=cl["method"],
        labels=np.asarray(cl["labels"], dtype=np.int64),
        centroids=np.asarray(cl["centroids"], dtype=np.float64) if cl["centroids"] is not None else None,
        params=cl["params"],
    )
    ex = payload["exemplars"]
    exemplars = ExemplarIndex(
        reduced=np.asarray(ex["reduced"], dtype=np.float64),
        case_ids=tuple(ex["case_ids"]),
        crash_types=tuple(ex["crash_types"]),
        triggers=tuple(ex["triggers"]),
    )
    return EreModel(
        schema=schema,
        reducer=reducer,
        cluster=cluster,
        exemplars=exemplars,
        severe_forest=RandomForest.from_dict(payload["severe_forest"]),
        rating_forest=RandomForest.from_dict(payload["rating_forest"]),
        similarity_threshold=float(payload["similarity_threshold"]),
        metadata=payload["metadata"],
    )

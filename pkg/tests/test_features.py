from __future__ import annotations

import numpy as np
import pytest

from detector.models.schemas import FeatureConfig, ImputerState, SpamStats
from detector.services.features import (
    apply_pipeline,
    compute_missingness,
    fit_medians,
    fit_pipeline,
    fit_spam_stats,
    select_features,
    transform,
)
from detector.utils.errors import EmptyTrainingSet, NoFeaturesRetained, SchemaMismatch, UnlabeledRow


@pytest.fixture
def schema(make_schema):
    return make_schema(("size", "numeric"), ("user", "categorical"), ("ts", "dropped"))


# ── missingness and selection ─────────────────────────

def test_missingness_fractions(schema, record):
    rows = [record(f"r{i}", [None if i < 3 else 1.0, "u", None], False) for i in range(10)]
    report = compute_missingness(rows, schema)
    assert report == {"size": 0.3, "user": 0.0}


def test_missingness_needs_rows(schema):
    with pytest.raises(EmptyTrainingSet):
        compute_missingness([], schema)


def test_threshold_is_strictly_greater(schema):
    assert select_features({"size": 0.25, "user": 0.26}, schema).names == ["size"]


def test_dropped_features_never_retained(schema):
    assert "ts" not in select_features({"size": 0.0, "user": 0.0}, schema).names


def test_everything_excluded(schema):
    with pytest.raises(NoFeaturesRetained):
        select_features({"size": 0.5, "user": 0.9}, schema)


# ── medians ───────────────────────────────────────────

@pytest.mark.parametrize(
    "values, expected",
    [([1.0, 2.0, 3.0], 2.0), ([1.0, 2.0, 3.0, 4.0], 2.5), ([5.0, None, 7.0], 6.0)],
)
def test_medians(make_schema, record, values, expected):
    retained = make_schema(("size", "numeric"))
    rows = [record(f"r{i}", [v], False) for i, v in enumerate(values)]
    assert fit_medians(rows, retained).medians == {"size": expected}


# ── spam counts ───────────────────────────────────────

def test_spam_counts(schema, record):
    rows = [
        record("r1", [1.0, "User1", None], True),
        record("r2", [1.0, "User1", None], False),
        record("r3", [1.0, "User2", None], False),
        record("r4", [1.0, None, None], True),
    ]
    stats = fit_spam_stats(rows, "user", schema, smoothing=0)
    assert stats.counts == {"User1": (2, 1), "User2": (1, 0)}
    assert stats.global_rate == pytest.approx(1 / 3)


def test_spam_counts_need_labels(schema, record):
    with pytest.raises(UnlabeledRow):
        fit_spam_stats([record("r1", [1.0, "u", None], None)], "user", schema)


def test_fitted_tables_match_hand_tallies(schema, record):
    rng = np.random.default_rng(12)
    for _ in range(50):
        n = int(rng.integers(1, 120))
        rows = []
        for i in range(n):
            size = None if rng.random() < 0.2 else float(rng.integers(0, 9))
            user = None if rng.random() < 0.3 else f"u{int(rng.integers(0, 6))}"
            rows.append(record(f"r{i}", [size, user, None], bool(rng.random() < 0.4)))

        tally: dict[str, list[int]] = {}
        for r in rows:
            if r.values[1] is not None:
                seen = tally.setdefault(r.values[1], [0, 0])
                seen[0] += 1
                seen[1] += int(r.label)
        stats = fit_spam_stats(rows, "user", schema)
        assert stats.counts == {v: tuple(c) for v, c in sorted(tally.items())}
        assert list(stats.counts) == sorted(tally)

        report = compute_missingness(rows, schema)
        assert report["size"] == pytest.approx(sum(r.values[0] is None for r in rows) / n, abs=1e-15)
        assert report["user"] == pytest.approx(sum(r.values[1] is None for r in rows) / n, abs=1e-15)

        sizes = [r.values[0] for r in rows if r.values[0] is not None]
        if sizes:
            medians = fit_medians(rows, schema.subset({"size"})).medians
            assert medians == {"size": float(np.median(sizes))}


def test_unsmoothed_ratio():
    stats = SpamStats(feature="user", counts={"v": (4, 1)}, global_rate=0.25, smoothing=0)
    assert stats.encode("v") == (0.25, 1.0)


def test_smoothed_probability():
    stats = SpamStats(feature="user", counts={"v": (1, 1)}, global_rate=0.1, smoothing=1)
    assert stats.encode("v")[0] == pytest.approx(0.55)


def test_encoded_pair_for_a_frequent_vandal():
    stats = SpamStats(feature="userName", counts={"User1": (350, 300)}, global_rate=0.6, smoothing=10)
    prob, count = stats.encode("User1")
    assert prob == pytest.approx(0.85)
    assert count == 300.0


def test_smoothing_pulls_toward_global_rate():
    g = 0.1
    distances = []
    for alpha in [0, 0.5, 1, 5, 10, 100, 1000]:
        stats = SpamStats(feature="u", counts={}, global_rate=g, smoothing=alpha)
        distances.append(abs(stats.probability(4, 3) - g))
    assert distances[0] == pytest.approx(0.75 - g)
    assert all(a > b for a, b in zip(distances, distances[1:]))
    assert SpamStats(feature="u", counts={}, global_rate=g, smoothing=10).probability(0, 0) == g


def test_unseen_and_missing_values_encode_to_global_rate():
    stats = SpamStats(feature="user", counts={"seen": (3, 1)}, global_rate=0.038, smoothing=10)
    assert stats.encode("never-seen") == (0.038, 0.0)
    assert stats.encode(None) == (0.038, 0.0)


# ── transform ─────────────────────────────────────────

def test_transform_imputes_and_encodes(schema, record):
    retained = schema.subset({"size", "user"})
    imputer = ImputerState(medians={"size": 2.5}, fitted_on=4)
    spam = {"user": SpamStats(feature="user", counts={"v": (1, 1)}, global_rate=0.038, smoothing=0)}
    rows = [record("a", [None, "v", "t"], True), record("b", [7.0, "unseen", "t"], False)]
    m = transform(rows, retained, imputer, spam)
    assert m.column_names == ["size", "user.spam_prob", "user.spam_count"]
    np.testing.assert_array_equal(m.values, [[2.5, 1.0, 1.0], [7.0, 0.038, 0.0]])
    np.testing.assert_array_equal(m.labels, [1, 0])


def test_transform_rejects_wrong_width(schema, record):
    state = fit_pipeline([record("a", [1.0, "u", "t"], True), record("b", [2.0, "v", "t"], False)], schema, FeatureConfig())
    with pytest.raises(SchemaMismatch):
        apply_pipeline(state, [record("c", [1.0, "u"], None)])


def _random_rows(record, rng, n, n_num, n_cat, missing, prefix, vocab):
    rows = []
    for i in range(n):
        values = []
        for _ in range(n_num):
            values.append(None if (i > 0 and rng.random() < missing) else float(rng.normal()))
        for _ in range(n_cat):
            values.append(None if rng.random() < missing else str(rng.choice(vocab)))
        rows.append(record(f"{prefix}{i:04d}", values, bool(rng.random() < 0.3)))
    return rows


def test_pipeline_output_is_always_finite(make_schema, record):
    rng = np.random.default_rng(7)
    for trial in range(100):
        n_num, n_cat = int(rng.integers(1, 5)), int(rng.integers(0, 4))
        schema = make_schema(
            *[(f"n{j}", "numeric") for j in range(n_num)],
            *[(f"c{j}", "categorical") for j in range(n_cat)],
        )
        missing = float(rng.uniform(0, 0.9))
        train = _random_rows(record, rng, int(rng.integers(5, 60)), n_num, n_cat, missing, "t", ["a", "b", "c"])
        test = _random_rows(record, rng, 30, n_num, n_cat, missing, "v", ["a", "x", "y", "z"])
        state = fit_pipeline(train, schema, FeatureConfig(missingness_threshold=1.0))
        m = apply_pipeline(state, test)
        assert np.isfinite(m.values).all()
        assert m.n_cols == n_num + 2 * n_cat
        assert m.column_names == state.column_names


def test_refitting_is_not_rerun_by_transform(schema, record):
    rng = np.random.default_rng(1)
    rows = _random_rows(record, rng, 40, 1, 1, 0.1, "t", ["a", "b"])
    rows = [record(r.revision_id, [*r.values, "t"], r.label) for r in rows]
    state = fit_pipeline(rows, schema, FeatureConfig())
    first = apply_pipeline(state, rows)
    second = apply_pipeline(state, rows)
    np.testing.assert_array_equal(first.values, second.values)


def test_exclusion_commutes_with_transform(make_schema, record):
    rng = np.random.default_rng(2)
    schema = make_schema(("a", "numeric"), ("u", "categorical"), ("b", "numeric"))
    rows = _random_rows(record, rng, 50, 2, 1, 0.1, "t", ["x", "y"])
    rows = [record(r.revision_id, [r.values[0], r.values[2], r.values[1]], r.label) for r in rows]
    state = fit_pipeline(rows, schema, FeatureConfig())
    full = apply_pipeline(state, rows)

    narrow = schema.subset({"a", "b"})
    narrowed = transform(rows, narrow, state.imputer, state.spam)
    keep = [i for i, c in enumerate(full.column_names) if c in narrow.column_names()]
    np.testing.assert_array_equal(full.values[:, keep], narrowed.values)


def test_pipeline_records_exclusion_reasons(schema, record):
    rows = [record(f"r{i}", [None if i < 4 else 1.0, "u", "t"], i % 2 == 0) for i in range(10)]
    state = fit_pipeline(rows, schema, FeatureConfig())
    assert state.retained.names == ["user"]
    assert state.exclusions["ts"] == "dropped by schema"
    assert state.exclusions["size"].startswith("missing 0.4000 > 0.25")


def test_spam_scope_override(schema, record):
    train = [record("a", [1.0, "u", "t"], True), record("b", [2.0, "v", "t"], False)]
    extra = train + [record("c", [1.0, "w", "t"], True)]
    state = fit_pipeline(train, schema, FeatureConfig(), spam_rows=extra)
    assert "w" in state.spam["user"].counts

import numpy as np
import pytest

from tabembed.errors import ConfigError, InfeasiblePrevalence
from tabembed.learners import GbtParams, train_gbt
from tabembed.matrix import Imputation, prepare_raw_matrix
from tabembed.metrics import auroc
from tabembed.schema import clinical_deterioration_schema
from tabembed.synth import (
    SynthesisSpec,
    TaskRule,
    expected_best_auroc,
    generate_synthetic,
    null_signal_spec,
    sepsis_like_spec,
    synthesize_with_truth,
)
from tabembed.tabular import split_kfold, validate


class TestGenerate:
    def test_prevalence_in_band_across_seeds(self):
        rates = []
        for seed in range(5):
            rs = generate_synthetic(sepsis_like_spec(n_records=660, seed=seed))
            rates.append(np.mean(rs.tasks["sepsis"]))
        assert all(0.38 <= r <= 0.48 for r in rates), rates

    def test_values_inside_plausible_ranges(self):
        rs = generate_synthetic(sepsis_like_spec(n_records=200, seed=1, missing_rate=0.0))
        assert validate(rs).total_out_of_range == 0

    def test_null_signal_classifier_is_coinflip(self):
        rs = generate_synthetic(null_signal_spec(n_records=400, seed=2))
        y = rs.labels("null")
        folds = split_kfold(rs, 4, seed=0)
        scores = {}
        for f in range(4):
            tr = folds.train_ids(f, rs)
            te = folds.test_ids(f, rs)
            Xtr = prepare_raw_matrix(rs, Imputation("mean-from-train"), record_ids=tr)
            from tabembed.matrix import fit_raw_stats

            stats = fit_raw_stats(rs, tr)
            Xte = prepare_raw_matrix(rs, Imputation("mean-from-train"), stats, te)
            label = dict(zip(rs.ids, y))
            model = train_gbt(
                Xtr.values, [label[r] for r in tr],
                GbtParams(n_estimators=50, max_depth=3),
            )
            for rid, p in zip(te, model.predict_proba(Xte.values)):
                scores[rid] = p
        pooled = np.array([scores[r] for r in rs.ids])
        assert 0.42 <= auroc(pooled, y) <= 0.58

    def test_missing_rate_approximate(self):
        rs = generate_synthetic(sepsis_like_spec(n_records=500, seed=3, missing_rate=0.1))
        report = validate(rs)
        rates = [f.missing_rate for f in report.per_feature]
        assert abs(np.mean(rates) - 0.1) < 0.02

    def test_determinism(self):
        spec = sepsis_like_spec(n_records=100, seed=4)
        a = generate_synthetic(spec)
        b = generate_synthetic(spec)
        assert a.to_dict() == b.to_dict()

    def test_weights_must_reference_schema(self):
        schema = clinical_deterioration_schema()
        with pytest.raises(ConfigError):
            SynthesisSpec(
                schema=schema, n_records=10,
                tasks={"t": TaskRule(weights={"nope": 1.0}, prevalence=0.5)},
            )

    def test_spec_roundtrip(self):
        spec = sepsis_like_spec(n_records=50, seed=5)
        again = SynthesisSpec.from_dict(spec.to_dict())
        assert generate_synthetic(again).to_dict() == generate_synthetic(spec).to_dict()


class TestTruth:
    def test_expected_best_auroc_known_cases(self):
        # deterministic labels: ranking by the true score is perfect
        scores = np.array([0.1, 0.9, 0.4, 0.6])
        probs = np.array([0.0, 1.0, 0.0, 1.0])
        assert expected_best_auroc(scores, probs) == 1.0
        # constant probabilities: every ordering is exchangeable -> 0.5
        assert expected_best_auroc(scores, np.full(4, 0.3)) == pytest.approx(0.5)

    def test_expected_best_auroc_matches_simulation(self):
        rng = np.random.default_rng(6)
        scores = rng.normal(size=200)
        probs = 1 / (1 + np.exp(-scores))
        analytic = expected_best_auroc(scores, probs)
        sims = []
        for _ in range(300):
            labels = (rng.random(200) < probs).astype(int)
            if labels.min() == labels.max():
                continue
            sims.append(auroc(scores, labels))
        assert analytic == pytest.approx(np.mean(sims), abs=0.01)

    def test_noise_excluded_from_oracle_score(self):
        spec = sepsis_like_spec(n_records=300, seed=7, noise_scale=1.5)
        _, truth = synthesize_with_truth(spec)
        t = truth["sepsis"]
        # with heavy label noise the feature-only ceiling drops well below
        # the noise-inclusive ceiling
        feature_only = expected_best_auroc(t["score"], t["prob"])
        noise_inclusive = expected_best_auroc(
            np.log(t["prob"] / (1 - t["prob"])), t["prob"]
        )
        assert feature_only < noise_inclusive - 0.02

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from leveldrop.features import build_cohort
from leveldrop.ingest import ACTIVITY_FIELDS, serialize_log, validate
from leveldrop.models import sigmoid
from leveldrop.simulate import (
    SimConfig,
    SimTruth,
    constant_rate_config,
    default_paper_shaped_config,
    generate,
    planted_log_odds,
)


def test_same_seed_byte_identical():
    cfg = default_paper_shaped_config(n_learners=300, seed=5)
    log_a, truth_a = generate(cfg)
    log_b, truth_b = generate(cfg)
    assert serialize_log(log_a) == serialize_log(log_b)
    assert truth_a.to_json() == truth_b.to_json()


def test_different_seed_differs():
    a, _ = generate(default_paper_shaped_config(n_learners=200, seed=1))
    b, _ = generate(default_paper_shaped_config(n_learners=200, seed=2))
    assert serialize_log(a) != serialize_log(b)


def test_generated_log_validates_cleanly():
    log, _ = generate(default_paper_shaped_config(n_learners=300, seed=8))
    assert validate(log).ok


def test_zero_coefficients_match_base_rate_binomially():
    n = 4000
    rate = 0.2
    cfg = constant_rate_config(n_learners=n, rate=rate, seed=13)
    _, truth = generate(cfg)
    rates = truth.abandonment_rates(cfg.n_levels)
    for level in range(1, cfg.n_levels + 1):
        attempted = sum(
            1 for v in truth.abandoned_level.values() if v is None or v >= level
        )
        sigma = math.sqrt(rate * (1.0 - rate) / attempted)
        assert abs(rates[level] - rate) < 3.0 * sigma + 1e-9


def test_default_config_rates_inside_reported_envelope():
    cfg = default_paper_shaped_config(n_learners=4000, seed=3)
    _, truth = generate(cfg)
    rates = truth.abandonment_rates(cfg.n_levels)
    for level, rate in rates.items():
        assert 0.0 < rate < 0.343, f"level {level} rate {rate} outside envelope"


def test_truth_probabilities_self_consistent():
    cfg = replace(
        constant_rate_config(n_learners=150, rate=0.15, seed=4),
        planted={"total_dur": 0.8, "help_time": -0.5, "activated": -1.0},
        engagement_coef=-0.3,
        never_attempt_fraction=0.0,
    )
    log, truth = generate(cfg)
    for learner_id, per_level in truth.probabilities.items():
        profile = log.profile_map[learner_id]
        cumulative = {name: 0.0 for name in ACTIVITY_FIELDS}
        for level in sorted(per_level):
            rec = log.by_learner[learner_id][level]
            for name in ACTIVITY_FIELDS:
                cumulative[name] += rec.value(name)
            expected = float(
                sigmoid(
                    planted_log_odds(
                        cfg, cumulative, level, profile.activated, truth.engagement[learner_id]
                    )
                )
            )
            assert per_level[level] == expected


def test_missingness_disabled_gives_complete_log():
    cfg = constant_rate_config(n_learners=200, rate=0.2, seed=6)
    log, _ = generate(cfg)
    for rec in log.records:
        for name in ACTIVITY_FIELDS:
            assert rec.value(name) is not None


def test_missingness_rates_apply():
    cfg = default_paper_shaped_config(n_learners=2000, seed=9)
    log, _ = generate(cfg)
    missing = sum(1 for rec in log.records if rec.total_dur is None)
    frac = missing / len(log.records)
    assert 0.01 < frac < 0.06
    assert all(rec.idle_time is not None for rec in log.records)


def test_increasing_positive_coefficient_raises_probabilities():
    base_cfg = replace(
        constant_rate_config(n_learners=400, rate=0.2, seed=10),
        planted={"total_dur": 0.4},
    )
    stronger = replace(base_cfg, planted={"total_dur": 0.8})
    _, truth_a = generate(base_cfg)
    _, truth_b = generate(stronger)
    # common random numbers: same seed, level-1 draws identical
    p_a = np.array([truth_a.probabilities[k][1] for k in sorted(truth_a.probabilities)])
    p_b = np.array([truth_b.probabilities[k][1] for k in sorted(truth_b.probabilities)])
    assert p_b.mean() > p_a.mean()


def test_cohort_shrinkage_monotone():
    log, _ = generate(default_paper_shaped_config(n_learners=800, seed=12))
    sizes = [len(build_cohort(log, n)) for n in range(1, 7)]
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))


def test_default_config_sign_vector():
    cfg = default_paper_shaped_config()
    assert cfg.planted["total_dur"] > 0
    assert cfg.planted["n_step"] > 0
    assert cfg.planted["idle_time"] > 0
    assert cfg.planted["n_restart"] > 0
    assert cfg.planted["help_time"] < 0
    assert cfg.planted["activated"] < 0
    for name in ("code_time", "test_time", "mission_time", "world_time", "n_line", "n_play"):
        assert cfg.planted.get(name, 0.0) == 0.0


def test_default_config_mean_rate_near_reported():
    cfg = default_paper_shaped_config(n_learners=10_000, seed=42)
    _, truth = generate(cfg)
    rates = truth.abandonment_rates(cfg.n_levels)
    mean_rate = sum(rates.values()) / cfg.n_levels
    assert abs(mean_rate - 0.134) < 0.02


def test_abandoned_level_emits_incomplete_record_unless_silent():
    cfg = replace(constant_rate_config(n_learners=300, rate=0.4, seed=2), never_attempt_fraction=0.0)
    log, truth = generate(cfg)
    for learner_id, gave_up in truth.abandoned_level.items():
        if gave_up is None:
            continue
        rec = log.by_learner[learner_id].get(gave_up)
        assert rec is not None and rec.completed is False

    silent = replace(cfg, never_attempt_fraction=1.0)
    log_s, truth_s = generate(silent)
    for learner_id, gave_up in truth_s.abandoned_level.items():
        if gave_up is None:
            continue
        assert gave_up not in log_s.by_learner.get(learner_id, {})


def test_truth_json_round_trip():
    cfg = constant_rate_config(n_learners=50, rate=0.2, seed=1)
    _, truth = generate(cfg)
    again = SimTruth.from_json(truth.to_json())
    assert again.engagement == truth.engagement
    assert again.probabilities == truth.probabilities
    assert again.abandoned_level == truth.abandoned_level


def test_config_validation_errors():
    with pytest.raises(ValueError, match="n_learners"):
        SimConfig(n_learners=0, base_log_odds=(0.0,) * 6).validate()
    with pytest.raises(ValueError, match="base_log_odds"):
        SimConfig(n_learners=10, base_log_odds=(0.0,)).validate()
    with pytest.raises(ValueError, match="unknown feature"):
        SimConfig(n_learners=10, base_log_odds=(0.0,) * 6, planted={"bogus": 1.0}).validate()

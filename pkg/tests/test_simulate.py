import json
import math

import pytest

from meddfr.model import EventKind, envelope_line
from meddfr.simulate import (
    DAY_MS,
    HOUR_MS,
    InjectionSpec,
    InjectionUnit,
    InvalidConfig,
    ScenarioConfig,
    ScenarioId,
    generate,
    letby_preset,
    run_scenario,
    scenario_preset,
)


def bare_config(seed=1, injections=(), duration_days=2, rates=None):
    return ScenarioConfig(
        scenario_id=ScenarioId.MEDICAL_NEGLIGENCE,
        duration_ms=duration_days * DAY_MS,
        entities={"nurse": 2, "device": 1, "clerk": 1},
        event_rates=rates or {},
        injections=list(injections),
        seed=seed,
    )


def test_zero_rates_generate_only_injections():
    spec = InjectionSpec(unit=InjectionUnit.ACCESS_PATTERN, target_entity="nurse-00",
                         at=DAY_MS + 3 * HOUR_MS, magnitude=4.0, count=2)
    scenario = generate(bare_config(injections=[spec]))
    assert len(scenario.records) == 2
    assert all(r.kind == EventKind.CABINET_ACCESS for r in scenario.records)
    assert scenario.injected_record_ids[0] == [r.record_id for r in scenario.records]


def test_same_seed_twice_gives_byte_identical_streams():
    config = letby_preset(seed=12, duration_days=10)
    first = generate(config)
    second = generate(letby_preset(seed=12, duration_days=10))
    a = "\n".join(envelope_line(r) for r in first.records)
    b = "\n".join(envelope_line(r) for r in second.records)
    assert a == b


def test_different_seeds_differ():
    a = generate(letby_preset(seed=1, duration_days=5)).records
    b = generate(letby_preset(seed=2, duration_days=5)).records
    assert "\n".join(envelope_line(r) for r in a) != "\n".join(envelope_line(r) for r in b)


def test_poisson_rate_ten_per_hour_counts_within_three_sigma():
    # rate 10/h for 10h per entity: expect lambda=100, 3*sqrt(100)=30.
    for seed in (1, 2, 3, 4, 5):
        config = ScenarioConfig(
            scenario_id=ScenarioId.MEDICAL_NEGLIGENCE,
            duration_ms=10 * HOUR_MS,
            entities={"nurse": 1},
            event_rates={EventKind.LOGIN: 10.0},
            injections=[], seed=seed)
        count = len(generate(config).records)
        assert abs(count - 100) <= 30, f"seed {seed}: {count}"


def test_injection_outside_duration_rejected():
    spec = InjectionSpec(unit=InjectionUnit.ACCESS_PATTERN, target_entity="nurse-00",
                         at=10 * DAY_MS, magnitude=4.0)
    with pytest.raises(InvalidConfig):
        generate(bare_config(injections=[spec]))


def test_negative_rate_rejected():
    with pytest.raises(InvalidConfig):
        generate(bare_config(rates={EventKind.LOGIN: -1.0}))


def test_ground_truth_soundness():
    config = letby_preset(seed=3, duration_days=20)
    scenario = generate(config)
    by_id = {r.record_id: r for r in scenario.records}
    all_ids = [r.record_id for r in scenario.records]
    assert len(all_ids) == len(set(all_ids))
    for spec, record_ids in zip(config.injections, scenario.injected_record_ids):
        assert len(record_ids) == spec.count
        first = by_id[record_ids[0]]
        assert first.occurred_at == spec.at
        assert first.entity_id == spec.target_entity
        for record_id in record_ids:
            assert "MedicalNegligence" in by_id[record_id].scenario_tags


def test_letby_preset_covers_all_three_units():
    config = letby_preset(seed=1)
    units = {spec.unit for spec in config.injections}
    assert units == {InjectionUnit.ACCESS_PATTERN, InjectionUnit.MEDICATION_ADMIN,
                     InjectionUnit.DEVICE_INTERACTION}
    assert all(spec.magnitude >= 4.0 for spec in config.injections)
    assert all(spec.target_entity == config.target_entity for spec in config.injections)


def test_letby_cohort_baselines_concentrate_in_shift_hours():
    scenario = generate(letby_preset(seed=4, duration_days=15, with_injections=False))
    hours = [
        (r.occurred_at % DAY_MS) // HOUR_MS
        for r in scenario.records
        if r.kind in (EventKind.CABINET_ACCESS, EventKind.DOOR_ACCESS)
    ]
    assert hours
    assert all(8 <= h <= 17 for h in hours)


def test_injected_dose_is_four_sigma_above_entity_mean():
    config = letby_preset(seed=6, duration_days=20)
    scenario = generate(config)
    med_spec = next(s for s in config.injections
                    if s.unit == InjectionUnit.MEDICATION_ADMIN)
    index = config.injections.index(med_spec)
    injected_id = scenario.injected_record_ids[index][0]
    injected = next(r for r in scenario.records if r.record_id == injected_id)
    dose = json.loads(injected.payload)["dose"]

    baseline = [json.loads(r.payload)["dose"] for r in scenario.records
                if r.kind == EventKind.MEDICATION_ADMIN
                and r.entity_id == med_spec.target_entity
                and r.record_id != injected_id]
    mean = sum(baseline) / len(baseline)
    std = math.sqrt(sum((d - mean) ** 2 for d in baseline) / len(baseline))
    assert (dose - mean) / std >= 3.5  # 4 sigma by construction, est. noise aside


def test_scenario_presets_tag_their_rows():
    for scenario_id in (ScenarioId.INSURANCE_CLAIMS, ScenarioId.EMPLOYEE_MISCONDUCT):
        scenario = generate(scenario_preset(scenario_id, seed=2))
        assert scenario.records
        tag = scenario.records[0].scenario_tags[0]
        assert all(tag in r.scenario_tags for r in scenario.records)


def test_run_pipeline_metrics_deterministic():
    config = letby_preset(seed=21, duration_days=20)
    _, _, first = run_scenario(config)
    _, _, second = run_scenario(letby_preset(seed=21, duration_days=20))
    assert first.to_json() == second.to_json()


def test_clean_run_has_undefined_recall_and_low_fp():
    config = letby_preset(seed=22, duration_days=20, with_injections=False)
    _, _, metrics = run_scenario(config)
    assert metrics.injected == 0
    assert metrics.recall is None
    assert metrics.false_positive_rate <= 0.01

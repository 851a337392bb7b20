import json

import pytest

from geam.chem import canonical_smiles, parse_smiles
from geam.errors import ConfigError, EmptyReference
from geam.fingerprints import ecfp
from geam.metrics import (
    HitRule,
    MetricsReport,
    compute_metrics,
    is_hit,
    top_mean_y,
)
from geam.records import (
    GenerationRecord,
    read_records,
    record_from_result,
    write_records,
)
from geam.oracles import motif_oracle


def _record(
    smiles: str,
    y: float,
    ordinal: int = 1,
    cycle: int = 0,
    provenance: str = "sac",
    charged: bool = True,
    vocab_size: int = 5,
    components: tuple = None,
) -> GenerationRecord:
    canon = canonical_smiles(parse_smiles(smiles))
    if components is None:
        components = (("motif", y, y),)
    return GenerationRecord(
        ordinal=ordinal,
        cycle=cycle,
        provenance=provenance,
        smiles=smiles,
        canonical=canon,
        y=y,
        components=components,
        charged=charged,
        vocab_size=vocab_size,
    )


def test_record_json_round_trip():
    rec = _record(
        "CCO", 0.125, ordinal=7, cycle=3, provenance="ga",
        components=(("motif", 0.9, 0.9), ("sa", 2.5, 0.8333333333333334)),
    )
    back = GenerationRecord.from_json(rec.to_json())
    assert back == rec
    # Serialized form is stable and key-sorted.
    assert rec.to_json() == GenerationRecord.from_json(rec.to_json()).to_json()
    assert list(json.loads(rec.to_json())) == sorted(json.loads(rec.to_json()))


def test_record_rejects_unknown_provenance():
    rec = _record("CC", 0.5)
    bad = rec.to_json().replace('"sac"', '"magic"')
    with pytest.raises(ConfigError):
        GenerationRecord.from_json(bad)
    oracle = motif_oracle("c1ccncc1")
    with pytest.raises(ConfigError):
        record_from_result(oracle.evaluate("CC"), "CC", 1, 0, "magic", 3)


def test_record_from_result_copies_fields():
    oracle = motif_oracle("c1ccncc1")
    result = oracle.evaluate("CCc1ccncc1")
    rec = record_from_result(result, "CCc1ccncc1", 4, 2, "prefill", 9)
    assert rec.canonical == result.smiles
    assert rec.y == result.y
    assert rec.components == result.components
    assert rec.charged is True
    assert (rec.ordinal, rec.cycle, rec.vocab_size) == (4, 2, 9)


def test_records_file_round_trip(tmp_path):
    records = [
        _record("CCO", 0.1, ordinal=1),
        _record("CCN", 0.2, ordinal=2, provenance="ga", charged=False),
    ]
    path = tmp_path / "records.jsonl"
    write_records(str(path), records)
    assert read_records(str(path)) == records


def test_hit_rule_parse_and_holds():
    rule = HitRule.parse("motif>=0.5")
    assert (rule.component, rule.op, rule.threshold) == ("motif", "ge", 0.5)
    assert rule.text() == "motif>=0.5"
    assert rule.holds(_record("CC", 0.9))
    assert not rule.holds(_record("CC", 0.4))
    assert HitRule.parse("sa<4").holds(
        _record("CC", 0.5, components=(("sa", 3.0, 0.5),))
    )
    y_rule = HitRule.parse("y>0.5")
    assert y_rule.holds(_record("CC", 0.6))
    with pytest.raises(ConfigError):
        HitRule.parse("motif=0.5")
    with pytest.raises(ConfigError):
        HitRule("motif", "eq", 0.5)
    assert is_hit(_record("CC", 0.9), [rule, y_rule])
    assert not is_hit(_record("CC", 0.45), [rule, y_rule])


def test_compute_metrics_denominators():
    # Reference contains CCO, so CCO scores as non-novel; CCCCCC is novel.
    reference = [ecfp(parse_smiles("CCO"))]
    records = [
        _record("CCO", 0.9, ordinal=1),                  # hit, not novel
        _record("CCCCCC", 0.9, ordinal=2),               # hit, novel, unique
        _record("CCCCCC", 0.9, ordinal=3, charged=False),  # duplicate
        _record("CCCCCO", 0.1, ordinal=4),               # novel, not a hit
    ]
    report = compute_metrics(
        records, reference, [HitRule.parse("y>=0.5")], primary="motif"
    )
    assert report.n_records == 4
    assert report.oracle_calls == 3
    assert report.n_unique == 3
    assert report.novel_hit_ratio == 100.0 * 1 / 4
    assert report.novelty == 100.0 * 3 / 4
    # Hits: CCO once, CCCCCC twice; two well-separated centers.
    assert report.n_circles_hits == 2
    assert report.novel_top_mean == 0.9
    assert report.vocab_trajectory == ((0, 5),)


def test_compute_metrics_empty_and_reference_guard():
    report = compute_metrics([], [ecfp(parse_smiles("C"))], [], primary="y")
    assert report.n_records == 0
    assert report.novel_hit_ratio == 0.0
    assert report.novelty == 0.0
    assert report.n_circles_hits == 0
    assert report.novel_top_mean is None
    with pytest.raises(EmptyReference):
        compute_metrics([], [], [], primary="y")


def test_top_mean_direction_minimize():
    reference = [ecfp(parse_smiles("c1ccccc1"))]
    records = [
        _record("CCO", 0.9, ordinal=1, components=(("sa", 2.0, 0.9),)),
        _record("CCN", 0.9, ordinal=2, components=(("sa", 5.0, 0.9),)),
        _record("CCC", 0.9, ordinal=3, components=(("sa", 8.0, 0.9),)),
    ]
    rules = [HitRule.parse("y>=0.5")]
    up = compute_metrics(records, reference, rules, primary="sa", maximize=True)
    down = compute_metrics(records, reference, rules, primary="sa",
                           maximize=False)
    # ceil(0.05 * 3) = 1 top molecule either way.
    assert up.novel_top_mean == 8.0
    assert down.novel_top_mean == 2.0


def test_vocab_trajectory_tracks_last_record_per_cycle():
    records = [
        _record("CCO", 0.5, ordinal=1, cycle=0, vocab_size=10),
        _record("CCN", 0.5, ordinal=2, cycle=1, vocab_size=10),
        _record("CCC", 0.5, ordinal=3, cycle=1, vocab_size=13),
        _record("CCS", 0.5, ordinal=4, cycle=2, vocab_size=15),
    ]
    report = compute_metrics(
        records, [ecfp(parse_smiles("C"))], [], primary="motif"
    )
    assert report.vocab_trajectory == ((0, 10), (1, 13), (2, 15))


def test_report_serialization_shapes():
    report = compute_metrics(
        [_record("CCO", 0.9)],
        [ecfp(parse_smiles("c1ccccc1"))],
        [HitRule.parse("y>=0.5")],
        primary="motif",
    )
    doc = json.loads(report.to_json())
    assert list(doc) == sorted(doc)
    rebuilt = MetricsReport(
        **{**doc,
           "hit_rules": tuple(doc["hit_rules"]),
           "vocab_trajectory": tuple(
               tuple(p) for p in doc["vocab_trajectory"])}
    )
    assert rebuilt.to_json() == report.to_json()
    lines = report.to_csv().splitlines()
    assert len(lines) == 2
    assert len(lines[0].split(",")) == len(lines[1].split(","))


def test_top_mean_y_unique_best():
    records = [
        _record("CCO", 0.2, ordinal=1),
        _record("CCO", 0.6, ordinal=2),  # same molecule, better score
        _record("CCN", 0.4, ordinal=3),
    ]
    assert top_mean_y(records, k=1) == 0.6
    assert top_mean_y(records, k=2) == pytest.approx(0.5)
    assert top_mean_y(records, k=100) == pytest.approx(0.5)
    assert top_mean_y([], k=10) == 0.0

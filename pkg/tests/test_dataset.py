import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgx.dataset import (
    ArrayStore,
    ModelBundle,
    SyntheticSubjectParams,
    cache_features,
    load_bundle,
    load_dataset,
    read_manifest,
    save_bundle,
    segment_dataset,
    stack_blocks,
    synthesize_cohort,
    synthesize_ecg,
    write_dataset,
    write_record_table,
)
from ecgx.errors import (
    ChecksumMismatch,
    DataError,
    EmptyInput,
    FlatLead,
    InvalidParams,
    LeadMismatch,
    ManifestInvalid,
    RecordUnreadable,
    VersionUnsupported,
)
from ecgx.records import EcgRecord


# ------------------------------------------------------------------ synthetic generator

def test_synth_length_and_determinism():
    params = SyntheticSubjectParams()
    a, peaks_a = synthesize_ecg(params, 10.0, seed=5)
    b, peaks_b = synthesize_ecg(params, 10.0, seed=5)
    assert a.samples.shape == (1, 5000)
    np.testing.assert_array_equal(a.samples, b.samples)
    np.testing.assert_array_equal(peaks_a, peaks_b)


def test_synth_regular_rhythm():
    _, peaks = synthesize_ecg(SyntheticSubjectParams(heart_rate=60.0, hr_jitter=0.0), 10.0)
    assert len(peaks) == 10
    assert np.all(np.diff(peaks) == 500)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"heart_rate": 30.0},
        {"heart_rate": 200.0},
        {"noise_std": -1.0},
        {"waves": ((0.1, -0.2, 0.02), (-0.1, -0.03, 0.01), (0.05, 0.0, 0.01), (-0.3, 0.03, 0.01), (0.3, 0.28, 0.05))},
        {"waves": ((0.1, -0.2, 0.0), (-0.1, -0.03, 0.01), (1.0, 0.0, 0.01), (-0.3, 0.03, 0.01), (0.3, 0.28, 0.05))},
        {"lead_gains": ((1.0, 1.0),)},
    ],
)
def test_synth_rejects_bad_params(kwargs):
    with pytest.raises(InvalidParams):
        synthesize_ecg(SyntheticSubjectParams(**kwargs), 10.0)


def test_synth_rejects_too_short():
    with pytest.raises(InvalidParams):
        synthesize_ecg(SyntheticSubjectParams(heart_rate=60.0), 1.5)


def test_cohort_is_seeded_and_multilead():
    a = synthesize_cohort(3, 2, 5.0, seed=1, n_leads=12)
    b = synthesize_cohort(3, 2, 5.0, seed=1, n_leads=12)
    assert [(r.subject_id, r.session_index) for r in a.records] == [
        ("S001", 1), ("S001", 2), ("S002", 1), ("S002", 2), ("S003", 1), ("S003", 2)
    ]
    assert a.records[0].lead_labels[0] == "I" and a.records[0].n_leads == 12
    for x, y in zip(a.records, b.records):
        np.testing.assert_array_equal(x.samples, y.samples)
    assert a.records[3].session_day_offset == 30
    with pytest.raises(InvalidParams):
        synthesize_cohort(0)


# ------------------------------------------------------------------ manifests and records

def test_write_and_load_dataset(tmp_path):
    cohort = synthesize_cohort(2, 2, 4.0, seed=0)
    path = write_dataset(cohort.records, tmp_path / "ds", name="tiny")
    ds = load_dataset(path)
    assert len(ds) == 4
    assert [(r.subject_id, r.session_index) for r in ds] == [("S001", 1), ("S001", 2), ("S002", 1), ("S002", 2)]
    assert ds.subject_ids == ["S001", "S002"]
    for original, loaded in zip(cohort.records, ds.records):
        np.testing.assert_allclose(loaded.samples, original.samples, atol=5e-7)
    assert read_manifest(path).name == "tiny"


def _manifest(tmp_path, leads, columns, write=True):
    record = tmp_path / "r.csv"
    if write:
        write_record_table(record, np.zeros((len(columns), 100)), columns)
    data = {
        "name": "m", "sampling_rate": 500, "lead_labels": leads,
        "subjects": [{"subject_id": "A", "sessions": [{"session_index": 1, "day_offset": 0, "record_path": "r.csv"}]}],
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(data))
    return path


def test_lead_mismatch(tmp_path):
    twelve = ["I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"]
    with pytest.raises(LeadMismatch, match="r.csv"):
        load_dataset(_manifest(tmp_path, twelve, ["I", "II", "III"]))


def test_missing_record(tmp_path):
    with pytest.raises(RecordUnreadable, match="r.csv"):
        load_dataset(_manifest(tmp_path, ["I"], ["I"], write=False))


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("subjects"),
        lambda d: d.update(sampling_rate=0),
        lambda d: d.update(recording_mode="InTheAir"),
        lambda d: d.update(format_version=99),
        lambda d: d["subjects"][0]["sessions"].append({"session_index": 1, "day_offset": 5, "record_path": "x"}),
        lambda d: d["subjects"][0]["sessions"].append({"session_index": 2, "day_offset": -5, "record_path": "x"}),
    ],
)
def test_manifest_validation(tmp_path, mutate):
    path = _manifest(tmp_path, ["I"], ["I"])
    data = json.loads(path.read_text())
    mutate(data)
    path.write_text(json.dumps(data))
    with pytest.raises(ManifestInvalid):
        read_manifest(path)


def test_manifest_not_json(tmp_path):
    path = tmp_path / "m.json"
    path.write_text("{nope")
    with pytest.raises(ManifestInvalid):
        read_manifest(path)


# ------------------------------------------------------------------ stores

def test_store_round_trip_bit_exact(tmp_path, features):
    path = tmp_path / "f.bin"
    features.save(path)
    loaded = ArrayStore.load(path)
    assert loaded.keys() == features.keys()
    for key, block in features.items():
        assert loaded.get(*key).tobytes() == block.tobytes()
    assert loaded.inventory() == features.inventory()
    assert path.read_bytes()[:8] == b"ECGXSTOR"


def test_store_is_append_only(features):
    key = features.keys()[0]
    with pytest.raises(DataError):
        features.add(*key, np.zeros((1, 1, 2, 25)))
    with pytest.raises(ValueError):
        features.get(*key)[0, 0, 0, 0] = 1.0


def _corrupt(path, offset):
    raw = bytearray(path.read_bytes())
    raw[offset] ^= 0x01
    path.write_bytes(bytes(raw))


@pytest.mark.parametrize("where", ["header", "payload", "index", "digest"])
def test_store_corruption_detected(tmp_path, features, where):
    path = tmp_path / "f.bin"
    features.save(path)
    size = path.stat().st_size
    offset = {"header": 9, "payload": 100, "index": size - 80, "digest": size - 1}[where]
    _corrupt(path, offset)
    with pytest.raises(ChecksumMismatch):
        ArrayStore.load(path)


def test_truncated_files_rejected(tmp_path, features):
    path = tmp_path / "f.bin"
    features.save(path)
    raw = path.read_bytes()
    for cut in (4, 30, len(raw) // 2, len(raw) - 1):
        path.write_bytes(raw[:cut])
        with pytest.raises(ChecksumMismatch):
            ArrayStore.load(path)


def _bundle():
    rng = np.random.default_rng(0)
    return ModelBundle("Autoencoder", {"layers": [1, 2]},
                       {"w": rng.standard_normal((3, 4)).astype(np.float32), "b": np.zeros(3, np.float32)},
                       {"note": "x"})


def test_bundle_round_trip(tmp_path):
    bundle = _bundle()
    save_bundle(bundle, tmp_path / "b.bin")
    loaded = load_bundle(tmp_path / "b.bin")
    assert loaded.kind == bundle.kind and loaded.arch_descriptor == bundle.arch_descriptor
    assert loaded.metadata == bundle.metadata and loaded.checksum() == bundle.checksum()
    for name in bundle.parameters:
        assert loaded.parameters[name].tobytes() == bundle.parameters[name].tobytes()


def test_bundle_future_version(tmp_path):
    bundle = _bundle()
    bundle.format_version = 2
    save_bundle(bundle, tmp_path / "b.bin")
    with pytest.raises(VersionUnsupported):
        load_bundle(tmp_path / "b.bin")


def test_bundle_wrong_magic(tmp_path, features):
    features.save(tmp_path / "f.bin")
    with pytest.raises(ChecksumMismatch):
        load_bundle(tmp_path / "f.bin")
    with pytest.raises(DataError):
        ModelBundle("Transformer", {}, {})


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(1, 3)), min_size=1, max_size=8, unique=True),
       st.integers(0, 2**32 - 1))
def test_store_round_trip_property(keys, seed):
    import tempfile
    from pathlib import Path

    rng = np.random.default_rng(seed)
    store = ArrayStore({"seed": seed})
    for subject, session in keys:
        store.add(f"s{subject}", session, "single", rng.standard_normal((int(rng.integers(0, 4)), 2, 400)))
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "s.bin"
        store.save(path)
        loaded = ArrayStore.load(path)
    assert loaded.meta == store.meta and loaded.keys() == store.keys()
    for key, block in store.items():
        assert loaded.get(*key).tobytes() == block.tobytes()


# ------------------------------------------------------------------ pipeline

def test_cache_features_thirty_five_beats(tmp_path, untrained_ae):
    record, peaks = synthesize_ecg(SyntheticSubjectParams(heart_rate=60.0, hr_jitter=0.0), 35.0,
                                   subject_id="A", seed=2)
    assert len(peaks) == 35
    store = cache_features([record], untrained_ae.to_bundle(), tmp_path / "f.bin")
    assert store.inventory() == {"A": {1: {"template": 1, "summary": 3, "single": 33}}}
    assert store.get("A", 1, "single").shape == (33, 1, 2, 25)
    reloaded = ArrayStore.load(tmp_path / "f.bin")
    assert reloaded.get("A", 1, "summary").tobytes() == store.get("A", 1, "summary").tobytes()


def _flat_record():
    good, _ = synthesize_ecg(SyntheticSubjectParams(), 20.0, subject_id="F", seed=1)
    samples = np.stack([good.samples[0], np.zeros(good.n_samples)])
    return EcgRecord("F", 1, 500, ("I", "II"), samples)


def _two_lead(subject, seed):
    record, _ = synthesize_ecg(SyntheticSubjectParams(lead_gains=((1.0,) * 5, (0.5,) * 5)), 20.0,
                               subject_id=subject, seed=seed)
    return record


def test_flat_lead_is_contextual():
    records = [_two_lead("A", 0), _flat_record(), _two_lead("B", 1)]
    with pytest.raises(FlatLead, match="subject F session 1"):
        segment_dataset(records)
    store = segment_dataset(records, on_error="skip")
    assert store.subjects() == ["A", "B"]
    assert len(store.errors) == 1 and "FlatLead" in store.errors[0]
    assert store.meta["errors"] == store.errors


def test_segment_store_shapes(segments, cohort):
    assert len(segments) == 3 * len(cohort.records)
    for (_, _, kind), block in segments.items():
        assert block.shape[1:] == (1, 400)
        if kind == "template":
            assert block.shape[0] == 1
        np.testing.assert_allclose(np.ptp(block, axis=2), 2.0, atol=1e-5)


def test_segment_dataset_policy():
    with pytest.raises(InvalidParams):
        segment_dataset([], on_error="ignore")


def test_stack_blocks(segments):
    singles = stack_blocks(segments, "single")
    assert singles.shape[0] == sum(v["single"] for s in segments.inventory().values() for v in s.values())
    capped = stack_blocks(segments, "single", subjects=["S001"], limit_per_block=4, seed=1)
    assert capped.shape == (8, 1, 400)
    with pytest.raises(EmptyInput):
        stack_blocks(segments, "single", subjects=["nobody"])

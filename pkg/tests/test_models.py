import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from ecgx.dataset import extract_feature_store, load_bundle, save_bundle, segment_dataset, synthesize_cohort
from ecgx.errors import DataError, DimensionMismatch, LeadCountMismatch, ModelError, ShapeMismatch
from ecgx.models import (
    EMBEDDING_SIZE,
    ConvAutoencoder,
    FeatureVector,
    IdentificationHead,
    PairArray,
    SiameseVerifier,
    autoencoder_forward,
    branch_descriptor,
    check_encoder,
    encoder_descriptor,
    extract_features,
    identification_forward,
    module_checksum,
    siamese_forward,
)
from ecgx.nn import output_shape, trace_shapes
from ecgx.protocol import make_single_session_pairs, make_training_pairs, pairs_to_arrays
from ecgx.records import Segment


@pytest.fixture(scope="module")
def ae():
    return ConvAutoencoder(random_state=0).initialize()


@pytest.fixture(scope="module")
def verifier():
    return SiameseVerifier(n_leads=1, random_state=0).initialize()


@pytest.fixture(scope="module")
def verifier12():
    return SiameseVerifier(n_leads=12, random_state=0).initialize()


def _segments(n, leads, seed=0):
    return np.random.default_rng(seed).standard_normal((n, leads, 400)).astype(np.float32)


def _features(n, leads, seed=0):
    return np.random.default_rng(seed).standard_normal((n, leads, 2, 25)).astype(np.float32)


# ------------------------------------------------------------------ architecture

def test_encoder_temporal_sizes():
    shapes = [s for s in trace_shapes(encoder_descriptor(), (1, 400))]
    lengths = [s[-1] for s in shapes]
    for expected in (200, 100, 50, 25):
        assert expected in lengths
    assert output_shape(encoder_descriptor(), (1, 400)) == (2, 25)


def test_encoder_edit_rejected():
    desc = encoder_descriptor()
    desc = [d for i, d in enumerate(desc) if not (d["layer"] == "maxpool" and i == len(desc) - 2)]
    with pytest.raises(ShapeMismatch):
        check_encoder(desc)


@pytest.mark.parametrize("leads", [1, 12])
def test_branch_output_is_1024(leads):
    assert output_shape(branch_descriptor(leads), (2 * leads, 25)) == (EMBEDDING_SIZE,)


# ------------------------------------------------------------------ autoencoder

@pytest.mark.parametrize("leads", [1, 12])
def test_autoencoder_forward_shapes(ae, leads):
    seg = Segment("single", _segments(1, leads)[0])
    latent, recon = autoencoder_forward(seg, ae.to_bundle())
    assert latent.values.shape == (leads, 2, 25)
    assert recon.shape == (leads, 400)
    assert latent.values.size * 8 == seg.samples.size


def test_zero_input_is_finite(ae):
    latent, recon = autoencoder_forward(np.zeros((3, 400)), ae.to_bundle())
    assert np.isfinite(latent.values).all() and np.isfinite(recon).all()


def test_extract_features_deterministic_and_shared(ae):
    bundle = ae.to_bundle()
    seg = Segment("summary", _segments(1, 12)[0], subject_id="A", session_index=2)
    a, b = extract_features(seg, bundle), extract_features(seg, bundle)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.source_segment_kind.value == "summary" and a.subject_id == "A"
    one = extract_features(seg.samples[:1], bundle)
    assert one.values.tobytes() == a.values[:1].tobytes()


def test_extract_rejects_bad_length(ae):
    with pytest.raises(ShapeMismatch):
        extract_features(np.zeros((1, 399)), ae.to_bundle())


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_lead_permutation_equivariance(seed):
    model = ConvAutoencoder(random_state=0).initialize()
    X = _segments(3, 12, seed)
    perm = np.random.default_rng(seed).permutation(12)
    out = model.transform(X)
    np.testing.assert_array_equal(model.transform(X[:, perm]), out[:, perm])


def test_autoencoder_estimator_api(ae):
    params = ae.get_params()
    assert params["learning_rate"] == 1e-3 and params["stop_patience"] == 6
    assert clone(ae).get_params() == params
    with pytest.raises(ShapeMismatch):
        ae.transform(np.zeros((2, 1, 300)))


def test_autoencoder_training_beats_untrained(segments):
    X = segments.get("S001", 1, "single")
    held = segments.get("S002", 1, "single")
    untrained = ConvAutoencoder(random_state=3).initialize().reconstruction_error(held)
    model = ConvAutoencoder(max_epochs=3, random_state=3).fit(X)
    assert model.n_iter_ == 3 and len(model.history_) == 3
    assert model.reconstruction_error(held) < untrained


def test_autoencoder_bundle_round_trip(tmp_path, ae):
    save_bundle(ae.to_bundle(), tmp_path / "ae.bin")
    loaded = ConvAutoencoder.from_bundle(load_bundle(tmp_path / "ae.bin"))
    X = _segments(4, 2)
    assert loaded.transform(X).tobytes() == ae.transform(X).tobytes()
    assert loaded.reconstruct(X).tobytes() == ae.reconstruct(X).tobytes()


def test_bundle_parameter_shapes_checked(ae):
    bundle = ae.to_bundle()
    name = next(iter(bundle.parameters))
    bundle.parameters[name] = np.zeros((1, 1), np.float32)
    with pytest.raises(ShapeMismatch):
        ConvAutoencoder.from_bundle(bundle)


def test_bundle_kind_checked(ae, verifier):
    with pytest.raises(ModelError):
        SiameseVerifier.from_bundle(ae.to_bundle())
    with pytest.raises(ModelError):
        ConvAutoencoder.from_bundle(verifier.to_bundle())


# ------------------------------------------------------------------ siamese

def test_siamese_self_score_is_constant(verifier):
    bundle = verifier.to_bundle()
    scores = {siamese_forward(x, x, bundle) for x in _features(5, 1, seed=9)}
    assert len(scores) == 1
    assert 0 < scores.pop() < 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_siamese_symmetry(seed):
    model = SiameseVerifier(random_state=0).initialize()
    A, B = _features(6, 1, seed), _features(6, 1, seed + 1)
    assert model.score_pairs(A, B).tobytes() == model.score_pairs(B, A).tobytes()


def test_siamese_12_lead(verifier12):
    bundle = verifier12.to_bundle()
    assert bundle.kind == "Siamese12L"
    a, b = _features(2, 12)
    assert siamese_forward(a, b, bundle) == siamese_forward(b, a, bundle)
    with pytest.raises(LeadCountMismatch):
        siamese_forward(a[:1], b[:1], bundle)
    assert verifier12.embed(_features(3, 12)).shape == (3, EMBEDDING_SIZE)


def test_pair_array_matches_dense(verifier):
    pool = _features(5, 1)
    left, right = [0, 1, 2, 3], [4, 3, 2, 1]
    lazy = PairArray(pool, left, right)
    dense = np.stack([pool[left], pool[right]], axis=1)
    assert lazy.shape == dense.shape
    np.testing.assert_array_equal(np.asarray(lazy), dense)
    np.testing.assert_array_equal(lazy[2], dense[2])
    assert verifier.decision_function(lazy).tobytes() == verifier.decision_function(dense).tobytes()
    assert verifier.predict_proba(dense).shape == (4, 2)


def test_siamese_label_validation(verifier):
    X = np.stack([_features(4, 1), _features(4, 1, 1)], axis=1)
    with pytest.raises(DataError):
        clone(verifier).set_params(max_epochs=1).fit(X, [0, 1, 2, 0])


@pytest.fixture(scope="module")
def toy():
    """Verifier trained on a 20-subject synthetic cohort, with its feature store."""
    cohort = synthesize_cohort(20, n_sessions=2, duration_s=45.0, seed=21)
    ae = ConvAutoencoder(random_state=0).initialize()
    feats = extract_feature_store(segment_dataset(cohort), ae)
    X, y = pairs_to_arrays(make_training_pairs(feats, seed=0, genuine_per_subject=10), feats)
    model = SiameseVerifier(max_epochs=8, random_state=0).fit(X, y)
    return model, feats


def test_toy_training_separates(toy):
    model, feats = toy
    X, y = pairs_to_arrays(make_single_session_pairs(feats, seed=1), feats)
    scores = model.decision_function(X)
    assert scores[y == 1].mean() > scores[y == 0].mean()


def test_warm_start_continues(toy):
    model, feats = toy
    X, y = pairs_to_arrays(make_training_pairs(feats, seed=3, genuine_per_subject=2), feats)
    before = module_checksum(model.network_.branch)
    warm = copy.deepcopy(model).set_params(max_epochs=1, warm_start=True).fit(X, y)
    cold = SiameseVerifier(max_epochs=1, random_state=0).fit(X, y)
    assert module_checksum(model.network_.branch) == before
    assert module_checksum(warm.network_.branch) != module_checksum(cold.network_.branch)


# ------------------------------------------------------------------ identification

def test_identification_freezes_backbone(toy):
    model, feats = toy
    before = module_checksum(model.network_.branch)
    X = np.concatenate([feats.get(s, 1, "summary") for s in feats.subjects()])
    y = np.concatenate([[s] * len(feats.get(s, 1, "summary")) for s in feats.subjects()])
    head = IdentificationHead(verifier=model, max_epochs=5, stop_patience=6, random_state=0).fit(X, y)
    assert head.n_iter_ == 5
    assert module_checksum(head.network_.branch) == before == head.backbone_checksum_
    assert module_checksum(model.network_.branch) == before
    probs = head.predict_proba(X)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)
    assert set(head.predict(X)) <= set(feats.subjects())
    bundle = head.to_bundle()
    p = identification_forward(X[0], bundle, len(feats.subjects()))
    np.testing.assert_allclose(p, probs[0], rtol=1e-5, atol=1e-7)
    with pytest.raises(DimensionMismatch):
        identification_forward(X[0], bundle, 3)


def test_identification_113_subjects(verifier):
    X = _features(226, 1, seed=4)
    y = np.repeat([f"P{i:03d}" for i in range(113)], 2)
    head = IdentificationHead(verifier=verifier, max_epochs=1, random_state=0).fit(X, y)
    p = identification_forward(FeatureVector(X[0]), head.to_bundle(), 113)
    assert p.shape == (113,)
    assert abs(p.sum() - 1) <= 1e-6


def test_identification_single_subject(verifier):
    X = _features(6, 1, seed=5)
    head = IdentificationHead(verifier=verifier, max_epochs=1, random_state=0).fit(X, ["only"] * 6)
    np.testing.assert_array_equal(identification_forward(X[0], head.to_bundle(), 1), [1.0])


def test_identification_needs_verifier():
    with pytest.raises(ModelError):
        IdentificationHead().fit(_features(4, 1), [0, 1, 0, 1])


def test_identification_bundle_round_trip(tmp_path, verifier):
    X = _features(12, 1, seed=6)
    y = np.repeat(["a", "b", "c"], 4)
    head = IdentificationHead(verifier=verifier, max_epochs=2, random_state=0).fit(X, y)
    save_bundle(head.to_bundle(), tmp_path / "id.bin")
    loaded = IdentificationHead.from_bundle(load_bundle(tmp_path / "id.bin"))
    assert loaded.predict_proba(X).tobytes() == head.predict_proba(X).tobytes()
    assert list(loaded.classes_) == ["a", "b", "c"]


def test_feature_vector_validation():
    with pytest.raises(ShapeMismatch):
        FeatureVector(np.zeros((1, 2, 24)))
    with pytest.raises(ShapeMismatch):
        FeatureVector(np.full((1, 2, 25), np.nan))

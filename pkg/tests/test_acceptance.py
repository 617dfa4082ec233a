"""One test per acceptance criterion; each prints a PASS/FAIL line in the run summary."""

import json
import time
import zlib

import numpy as np
import pytest

import gradcases
from builders import check_pair_set, inventory
from oracles import eer_sweep, template_oracle
from ecgx.cli import main as cli
from ecgx.dataset import (
    ArrayStore,
    ModelBundle,
    extract_feature_store,
    load_bundle,
    save_bundle,
    segment_dataset,
    stack_blocks,
    synthesize_cohort,
)
from ecgx.errors import ChecksumMismatch
from ecgx.metrics import aggregate_runs, compute_accuracy, compute_eer
from ecgx.models import (
    EMBEDDING_SIZE,
    ConvAutoencoder,
    IdentificationHead,
    SiameseVerifier,
    module_checksum,
)
from ecgx.nn.gradcheck import check_gradients
from ecgx.protocol import (
    make_finetune_pairs,
    make_multi_session_pairs,
    make_single_session_pairs,
    make_training_pairs,
    pair_summary,
    pairs_to_arrays,
    split_identification,
    split_subjects,
)
from ecgx.records import SAMPLES_AFTER_PEAK, SAMPLES_BEFORE_PEAK, Segment
from ecgx.segmentation import build_template, detect_r_peaks, segment_record
from ecgx.signal import default_filters, frequency_response, preprocess_record


def test_criterion_01_gradients(criterion):
    with criterion(1, "finite-difference gradient checks") as c:
        start = time.perf_counter()
        worst = {}
        for op, make in sorted(gradcases.OPS.items()):
            rng = np.random.default_rng(zlib.crc32(op.encode()))
            worst[op] = max(check_gradients(*make(rng), rng, h=gradcases.H)
                            for _ in range(gradcases.CASES_PER_OP))
        elapsed = time.perf_counter() - start
        c.note(f"{len(worst)} ops x {gradcases.CASES_PER_OP} cases, max rel err {max(worst.values()):.2e}, "
               f"{elapsed:.1f}s")
        assert gradcases.CASES_PER_OP >= 20
        bad = {op: err for op, err in worst.items() if not err < 1e-4}
        assert not bad, f"ops over tolerance: {bad}"
        assert elapsed < 120


def test_criterion_02_filter_contract(criterion):
    with criterion(2, "filter cascade response") as c:
        taps = default_filters().cascade()
        fs = 500.0
        stop = frequency_response(taps, np.array([0.0, 50.0]), fs)
        band = frequency_response(taps, np.linspace(5.0, 40.0, 351), fs)
        stop_db = 20 * np.log10(np.maximum(stop, 1e-300))
        c.note(f"DC {stop_db[0]:.1f} dB, 50 Hz {stop_db[1]:.1f} dB, 5-40 Hz gain in "
               f"[{band.min():.4f}, {band.max():.4f}]")
        assert (stop_db <= -40).all()
        assert np.abs(band - 1).max() <= 0.05


def test_criterion_03_segmentation_counts(criterion):
    with criterion(3, "segment counts n-2 and floor((n-2)/10)") as c:
        records = list(synthesize_cohort(10, n_sessions=2, duration_s=40.0, seed=31).records)
        records += list(synthesize_cohort(3, n_sessions=1, duration_s=25.0, seed=32, n_leads=12).records)
        for record in records:
            record = preprocess_record(record)
            peaks = detect_r_peaks(record)
            inner = peaks[1:-1]
            assert (inner >= SAMPLES_BEFORE_PEAK).all() and (inner + SAMPLES_AFTER_PEAK <= record.n_samples).all()
            sset = segment_record(record)
            n = len(peaks)
            assert len(sset.singles) == n - 2
            assert len(sset.summaries) == (n - 2) // 10
            for seg in [sset.template, *sset.summaries, *sset.singles]:
                assert seg.samples.shape == (record.n_leads, 400)
        c.note(f"{len(records)} records checked")


def test_criterion_04_template_oracle(criterion):
    with criterion(4, "template matches brute-force oracle") as c:
        rng = np.random.default_rng(404)
        worst = 0.0
        for _ in range(200):
            n = int(rng.integers(5, 41))
            leads = int(rng.choice([1, 2, 12]))
            stack = rng.standard_normal((n, leads, 400))
            got = build_template([Segment("single", s) for s in stack]).samples
            worst = max(worst, float(np.abs(got - template_oracle(stack)).max()))
        c.note(f"200 sets, max abs diff {worst:.1e}")
        assert worst <= 1e-12


def test_criterion_05_eer_oracle(criterion):
    with criterion(5, "EER equals exhaustive threshold sweep") as c:
        rng = np.random.default_rng(505)
        for _ in range(100):
            g = rng.normal(1.0, 1.0, int(rng.integers(1, 60)))
            i = rng.normal(0.0, 1.0, int(rng.integers(1, 300)))
            if rng.random() < 0.5:
                g, i = np.round(g, 1), np.round(i, 1)
            eer, threshold = compute_eer(g, i)
            far, frr, want_threshold = eer_sweep(g, i)
            # same FAR and FRR fractions, averaged in floating point
            assert threshold == want_threshold
            assert eer == (float(far) + float(frr)) / 2
        assert compute_eer([0.9, 0.8, 0.7], [0.1, 0.2, 0.3, 0.4])[0] == 0.0
        assert compute_eer([0.5] * 4, [0.5] * 20)[0] == 0.5
        c.note("100 random sets exact, separable -> 0, identical -> 0.5")


def test_criterion_06_protocol_counts(criterion):
    with criterion(6, "pair counts per protocol") as c:
        found = {}
        for s in (113, 89, 63):
            found[f"single {s}"] = check_pair_set(make_single_session_pairs(inventory(s), seed=0))
            found[f"multi {s}"] = check_pair_set(make_multi_session_pairs(inventory(s), seed=0))
            assert found[f"single {s}"] == {"genuine": 3 * s, "impostor": 15 * s}
            assert found[f"multi {s}"] == {"genuine": s, "impostor": 5 * s}
        assert found["single 113"] == {"genuine": 339, "impostor": 1695}
        assert found["single 89"] == {"genuine": 267, "impostor": 1335}
        assert found["multi 113"] == {"genuine": 113, "impostor": 565}
        assert found["multi 63"] == {"genuine": 63, "impostor": 315}
        training = pair_summary(make_training_pairs(inventory(18117, singles=5), seed=0))
        assert training == {"genuine": 54351, "impostor": 271755}
        inv = inventory(65, sessions=1, singles=60)
        for part in make_finetune_pairs(inv, sorted(inv)[:10], seed=0):
            counts = check_pair_set(part)
            assert counts["impostor"] == 5 * counts["genuine"]
        c.note("339/1695, 267/1335, 113/565, 63/315, training 54351/271755, fine-tune 1:5")


def test_criterion_07_architecture(criterion):
    with criterion(7, "latent shape, equivariance, embedding size, symmetry") as c:
        rng = np.random.default_rng(707)
        ae = ConvAutoencoder(random_state=0).initialize()
        for leads in (1, 12):
            X = rng.standard_normal((4, leads, 400))
            assert ae.transform(X).shape == (4, leads, 2, 25)
        X = rng.standard_normal((3, 12, 400))
        perm = rng.permutation(12)
        assert ae.transform(X[:, perm]).tobytes() == ae.transform(X)[:, perm].tobytes()
        for leads in (1, 12):
            sv = SiameseVerifier(n_leads=leads, random_state=0).initialize()
            a = rng.standard_normal((5, leads, 2, 25))
            b = rng.standard_normal((5, leads, 2, 25))
            assert sv.embed(a).shape == (5, EMBEDDING_SIZE)
            assert len(set(sv.score_pairs(a, a).tolist())) == 1
            assert sv.score_pairs(a, b).tobytes() == sv.score_pairs(b, a).tobytes()
        c.note("latent [l,2,25] for l=1,12; embedding 1024")


@pytest.mark.slow
def test_criterion_08_synthetic_end_to_end(criterion):
    with criterion(8, "synthetic 50-subject end-to-end benchmark") as c:
        start = time.perf_counter()
        cohort = synthesize_cohort(50, n_sessions=2, duration_s=60.0, seed=2024)
        segments = segment_dataset(cohort)
        train_subjects, test_subjects = split_subjects(segments.subjects(), (0.7, 0.3), seed=0)

        X = stack_blocks(segments, "single", train_subjects, limit_per_block=20)
        held_out = stack_blocks(segments, "single", test_subjects, limit_per_block=5)
        ae = ConvAutoencoder(max_epochs=10, random_state=0).fit(X)
        ratio = ae.reconstruction_error(held_out) / ConvAutoencoder(random_state=0).initialize() \
            .reconstruction_error(held_out)
        c.note(f"AE MSE ratio {ratio:.4f}")

        features = extract_feature_store(segments, ae)
        train_store, test_store = ArrayStore(), ArrayStore()
        for (subject, session, kind), block in features.items():
            target = train_store if subject in train_subjects else test_store
            target.add(subject, session, kind, block)
        PX, y = pairs_to_arrays(make_training_pairs(train_store, seed=0, genuine_per_subject=20), train_store)
        sv = SiameseVerifier(max_epochs=15, random_state=0).fit(PX, y)

        eers = {}
        for name, make in (("single", make_single_session_pairs), ("multi", make_multi_session_pairs)):
            runs = []
            for r in range(10):
                A, yy = pairs_to_arrays(make(test_store, seed=r), test_store)
                s = sv.decision_function(A)
                runs.append(compute_eer(s[yy == 1], s[yy == 0])[0])
            eers[name] = aggregate_runs(runs)[0]
        c.note(f"EER single {eers['single']:.4f}, multi {eers['multi']:.4f}")

        split = split_identification(features, "ident-mixed", seed=0)
        backbone = module_checksum(sv.network_.branch)
        head = IdentificationHead(verifier=sv, random_state=0).fit(
            features.gather(split.train.refs), split.train.labels,
            features.gather(split.val.refs), split.val.labels)
        accuracy = compute_accuracy(head.predict(features.gather(split.test.refs)), split.test.labels)
        elapsed = time.perf_counter() - start
        c.note(f"identification {accuracy:.3f} on {len(split.test.labels)} summaries, {elapsed:.0f}s")

        assert ratio <= 0.2
        assert eers["single"] <= 0.05 and eers["multi"] <= 0.10
        assert head.backbone_checksum_ == backbone == module_checksum(head.network_.branch)
        assert accuracy >= 0.90
        assert elapsed <= 15 * 60


def _pipeline(d):
    def run(*argv):
        assert cli([str(a) for a in argv]) == 0, argv

    run("synth", "--subjects", 8, "--duration", 45, "--seed", 7, "--out", d / "ds")
    run("preprocess", "--manifest", d / "ds" / "manifest.json", "--out", d / "seg.bin")
    run("train-ae", "--segments", d / "seg.bin", "--out", d / "ae.bin", "--max-epochs", 2, "--max-per-record", 10)
    run("extract", "--segments", d / "seg.bin", "--ae", d / "ae.bin", "--out", d / "feat.bin")
    run("train-siamese", "--features", d / "feat.bin", "--out", d / "sv.bin", "--max-epochs", 2)
    for scenario in ("training", "single-session", "multi-session"):
        run("export-pairs", "--store", d / "feat.bin", "--scenario", scenario, "--seed", 3,
            "--out", d / f"{scenario}.csv")
        if scenario != "training":
            run("eval-verify", "--features", d / "feat.bin", "--siamese", d / "sv.bin", "--scenario", scenario,
                "--runs", 3, "--seed", 3, "--out", d / f"{scenario}.json")
    return sorted(p.relative_to(d) for p in d.rglob("*") if p.is_file())


def test_criterion_09_cli_determinism(criterion, tmp_path, capsys):
    with criterion(9, "CLI reruns are byte-identical") as c:
        files = _pipeline(tmp_path / "a")
        assert files == _pipeline(tmp_path / "b")
        differ = [str(f) for f in files if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
        assert json.loads((tmp_path / "a" / "single-session.json").read_text())["runs"] == 3
        c.note(f"{len(files)} files compared")
        assert not differ, f"differ: {differ}"


def _flip(path, offset):
    raw = bytearray(path.read_bytes())
    raw[offset] ^= 0x10
    path.write_bytes(bytes(raw))


def test_criterion_10_persistence(criterion, tmp_path, features):
    with criterion(10, "bundle and feature-store round trips, checksum rejection") as c:
        sv = SiameseVerifier(random_state=0).initialize()
        X = features.get(features.subjects()[0], 1, "summary")
        head = IdentificationHead(verifier=sv, max_epochs=1, random_state=0).fit(
            np.concatenate([X, X]), ["a"] * len(X) + ["b"] * len(X))
        bundles = {
            "ae": ConvAutoencoder(random_state=0).initialize().to_bundle(),
            "siamese": sv.to_bundle(),
            "ident": head.to_bundle(),
        }
        for name, bundle in bundles.items():
            path = tmp_path / f"{name}.bin"
            save_bundle(bundle, path)
            loaded = load_bundle(path)
            assert isinstance(loaded, ModelBundle) and loaded.checksum() == bundle.checksum()
            assert loaded.arch_descriptor == bundle.arch_descriptor and loaded.metadata == bundle.metadata
            for key, value in bundle.parameters.items():
                assert loaded.parameters[key].tobytes() == value.tobytes()
        loaded_sv = SiameseVerifier.from_bundle(load_bundle(tmp_path / "siamese.bin"))
        pair = np.stack([X, X[::-1]], axis=1)
        assert loaded_sv.decision_function(pair).tobytes() == sv.decision_function(pair).tobytes()

        path = tmp_path / "features.bin"
        features.save(path)
        loaded = ArrayStore.load(path)
        assert loaded.keys() == features.keys()
        for key, block in features.items():
            assert loaded.get(*key).tobytes() == block.tobytes()

        rejected = 0
        for name in ("ae", "siamese", "ident", "features"):
            path = tmp_path / f"{name}.bin"
            size = path.stat().st_size
            for offset in (size // 3, size // 2, size - 40):
                fresh = path.read_bytes()
                _flip(path, offset)
                with pytest.raises(ChecksumMismatch):
                    load_bundle(path) if name != "features" else ArrayStore.load(path)
                path.write_bytes(fresh)
                rejected += 1
        c.note(f"3 bundles and 1 store bit-exact, {rejected} corruptions rejected")

import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lesionforge.cli import main
from lesionforge.cli.config import (
    ForgeConfig,
    config_hash,
    config_to_dict,
    load_config,
    parse_config,
)
from lesionforge.cli.errors import ConfigError
from lesionforge.cli.flowio import flow_from_bytes, flow_to_bytes, read_flow
from lesionforge.cli.manifest import (
    DatasetManifest,
    SampleRecord,
    read_manifest,
    validate_manifest_files,
    write_manifest,
)
from lesionforge.imagecore import read_image, write_image, write_binary_mask
from lesionforge.synth import FlowField

from conftest import rng


def tree_digest(root: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file():
            out[str(p.relative_to(root))] = hashlib.sha256(p.read_bytes()).hexdigest()
    return out


@pytest.fixture(scope="module")
def assets_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("assets") / "catalog"
    code = main(["gen-assets", "--out", str(d), "--seed", "5", "--bodies", "2",
                 "--lesions", "4", "--size", "128", "--lesion-size", "40"])
    assert code == 0
    return d


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "config.json"
    p.write_text(json.dumps({
        "synth": {
            "lesions_per_image": [1, 2],
            "min_sep": 36.0,
            "augment": {"scale": [0.8, 1.1], "max_footprint": 80},
        },
        "tracking": {
            "deform": {"translation": 2.0, "rotation": 0.005,
                       "scale_jitter": 0.003, "elastic_magnitude": 1.0,
                       "smoothness_sigma": 10.0},
            "jitter": {"brightness": [0.0, 0.0], "contrast": [1.0, 1.0]},
            "perturb": {"scale_jitter": 0.0},
        },
    }))
    return p


@pytest.fixture(scope="module")
def detect_dataset(tmp_path_factory, assets_dir, small_config):
    out = tmp_path_factory.mktemp("ds") / "detect"
    code = main(["synth-detect", "--config", str(small_config), "--assets",
                 str(assets_dir), "--out", str(out), "--count", "3",
                 "--seed", "7"])
    assert code == 0
    return out


class TestFlowFormat:
    def test_round_trip_bytes_identical(self):
        r = rng(0)
        field = FlowField.from_vectors(r.uniform(-9, 9, size=(13, 17, 2)))
        data = flow_to_bytes(field)
        again = flow_to_bytes(flow_from_bytes(data))
        assert data == again

    def test_payload_length_invariant(self):
        r = rng(1)
        for w, h in [(1, 1), (7, 3), (16, 16), (33, 9)]:
            field = FlowField.from_vectors(r.uniform(-2, 2, size=(h, w, 2)))
            data = flow_to_bytes(field)
            assert len(data) == 14 + 8 * w * h + (w * h + 7) // 8

    @settings(max_examples=25, deadline=None)
    @given(w=st.integers(1, 24), h=st.integers(1, 24), seed=st.integers(0, 9999))
    def test_vectors_and_validity_survive(self, w, h, seed):
        r = rng(seed)
        field = FlowField.from_vectors(r.uniform(-20, 20, size=(h, w, 2)))
        back = flow_from_bytes(flow_to_bytes(field))
        assert np.array_equal(back.valid, field.valid)
        np.testing.assert_allclose(back.vectors, field.vectors, atol=1e-5)

    def test_bad_magic_rejected(self):
        with pytest.raises(ValueError, match="magic"):
            flow_from_bytes(b"NOPE" + bytes(20))

    def test_truncation_rejected(self):
        field = FlowField.zero(4, 4)
        data = flow_to_bytes(field)
        with pytest.raises(ValueError, match="payload"):
            flow_from_bytes(data[:-1])


class TestConfig:
    def test_defaults_parse(self):
        cfg = parse_config({})
        assert cfg.synth.stride == 8

    def test_unknown_key_names_path(self):
        with pytest.raises(ConfigError, match=r"config\.synth\.augment\.rotaton"):
            parse_config({"synth": {"augment": {"rotaton": [0, 0]}}})

    def test_bad_range_names_path(self):
        with pytest.raises(ConfigError, match=r"config\.synth\.min_sep"):
            parse_config({"synth": {"min_sep": -3}})

    def test_bad_blend_mode(self):
        with pytest.raises(ConfigError, match=r"blend\.mode"):
            parse_config({"synth": {"blend": {"mode": "average"}}})

    def test_hash_stable_and_sensitive(self):
        a = parse_config({})
        b = parse_config({"synth": {"stride": 8}})
        c = parse_config({"synth": {"stride": 4}})
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(c)

    def test_round_trip_through_dict(self):
        cfg = parse_config({"synth": {"blend": {"mode": "mixed"}}})
        again = parse_config(config_to_dict(cfg))
        assert config_to_dict(again) == config_to_dict(cfg)

    def test_missing_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.json")


class TestManifest:
    def test_round_trip(self, tmp_path):
        man = DatasetManifest(
            kind="detection", seed=42, config=ForgeConfig(), assets_dir="assets",
            body_ids=("body_0",), lesion_ids=("lesion_0",),
            samples=(SampleRecord(index=0, seed=1, image="samples/a.png",
                                  labels="samples/b.png", body_id="body_0",
                                  width=8, height=8),))
        p = tmp_path / "manifest.json"
        write_manifest(p, man)
        again = read_manifest(p)
        assert again.to_dict() == man.to_dict()

    def test_hash_mismatch_detected(self, tmp_path):
        man = DatasetManifest(kind="detection", seed=1, config=ForgeConfig(),
                              assets_dir="assets")
        obj = man.to_dict()
        obj["config_hash"] = "0" * 64
        p = tmp_path / "manifest.json"
        p.write_text(json.dumps(obj))
        with pytest.raises(ConfigError, match="config_hash"):
            read_manifest(p)

    def test_missing_files_detected(self, tmp_path):
        man = DatasetManifest(
            kind="detection", seed=1, config=ForgeConfig(), assets_dir="assets",
            samples=(SampleRecord(index=0, seed=1, image="gone.png",
                                  labels="gone2.png", body_id="b", width=4,
                                  height=4),))
        p = tmp_path / "manifest.json"
        write_manifest(p, man)
        with pytest.raises(ConfigError, match="missing files"):
            validate_manifest_files(p, man)


class TestSynthDetectCommand:
    def test_zero_count_writes_empty_manifest(self, tmp_path, assets_dir):
        out = tmp_path / "empty"
        code = main(["synth-detect", "--assets", str(assets_dir), "--out",
                     str(out), "--count", "0", "--seed", "1"])
        assert code == 0
        man = read_manifest(out / "manifest.json")
        assert man.samples == ()

    def test_deterministic_trees(self, tmp_path, assets_dir, small_config):
        outs = []
        for name in ("run1", "run2"):
            out = tmp_path / name
            code = main(["synth-detect", "--config", str(small_config),
                         "--assets", str(assets_dir), "--out", str(out),
                         "--count", "2", "--seed", "9"])
            assert code == 0
            outs.append(tree_digest(out))
        assert outs[0] == outs[1]

    def test_manifest_revalidates(self, detect_dataset):
        man = read_manifest(detect_dataset / "manifest.json")
        validate_manifest_files(detect_dataset / "manifest.json", man)
        assert len(man.samples) == 3

    def test_malformed_config_exits_2_without_output(self, tmp_path, assets_dir):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        out = tmp_path / "never"
        code = main(["synth-detect", "--config", str(bad), "--assets",
                     str(assets_dir), "--out", str(out), "--count", "1",
                     "--seed", "1"])
        assert code == 2
        assert not out.exists()
        assert not list(tmp_path.glob(".never*"))   # staging cleaned up

    def test_missing_assets_exits_3(self, tmp_path):
        out = tmp_path / "nope"
        code = main(["synth-detect", "--assets", str(tmp_path / "ghost"),
                     "--out", str(out), "--count", "1", "--seed", "1"])
        assert code == 3
        assert not out.exists()

    def test_existing_output_rejected(self, tmp_path, assets_dir):
        out = tmp_path / "exists"
        out.mkdir()
        code = main(["synth-detect", "--assets", str(assets_dir), "--out",
                     str(out), "--count", "1", "--seed", "1"])
        assert code == 2

    def test_generation_failure_exits_4_and_names_seed(self, tmp_path,
                                                       assets_dir, capsys):
        # Scale 6x on a 128 px body leaves no valid placement margin.
        bad = tmp_path / "impossible.json"
        bad.write_text(json.dumps({
            "synth": {"augment": {"scale": [6.0, 6.0], "max_footprint": 800}},
        }))
        out = tmp_path / "boom"
        code = main(["synth-detect", "--config", str(bad), "--assets",
                     str(assets_dir), "--out", str(out), "--count", "1",
                     "--seed", "1"])
        assert code == 4
        assert "seed" in capsys.readouterr().err
        assert not out.exists()

    def test_jobs_flag_does_not_change_outputs(self, tmp_path, assets_dir,
                                               small_config):
        digests = []
        for name, jobs in (("j1", "1"), ("j2", "2")):
            out = tmp_path / name
            assert main(["synth-detect", "--config", str(small_config),
                         "--assets", str(assets_dir), "--out", str(out),
                         "--count", "3", "--seed", "13", "--jobs", jobs]) == 0
            digests.append(tree_digest(out))
        assert digests[0] == digests[1]

    def test_jobs_env_override(self, monkeypatch):
        from lesionforge.cli.commands import resolve_jobs

        monkeypatch.setenv("LESIONFORGE_JOBS", "3")
        assert resolve_jobs(None) == 3
        assert resolve_jobs(5) == 5          # flag wins over the environment
        monkeypatch.setenv("LESIONFORGE_JOBS", "zebra")
        with pytest.raises(ConfigError):
            resolve_jobs(None)


@pytest.fixture(scope="module")
def zero_deform_config(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg0") / "zero.json"
    p.write_text(json.dumps({
        "tracking": {
            "deform": {"translation": 0.0, "rotation": 0.0,
                       "scale_jitter": 0.0, "elastic_magnitude": 0.0,
                       "smoothness_sigma": 8.0},
            "jitter": {"brightness": [0.0, 0.0], "contrast": [1.0, 1.0]},
            "perturb": {"scale_jitter": 0.0},
        },
    }))
    return p


@pytest.fixture(scope="module")
def track_run(tmp_path_factory, detect_dataset, zero_deform_config):
    base = tmp_path_factory.mktemp("baseline")
    track = base / "track"
    assert main(["synth-track", "--manifest",
                 str(detect_dataset / "manifest.json"), "--config",
                 str(zero_deform_config), "--out", str(track)]) == 0
    preds = base / "preds.json"
    assert main(["baseline-run", "--manifest", str(track / "manifest.json"),
                 "--mode", "track", "--out", str(preds)]) == 0
    return track, preds


class TestSynthTrackCommand:
    def test_zero_deformation_pairs_are_identical_images(
            self, tmp_path, detect_dataset, zero_deform_config):
        out = tmp_path / "track0"
        code = main(["synth-track", "--manifest",
                     str(detect_dataset / "manifest.json"), "--config",
                     str(zero_deform_config), "--out", str(out)])
        assert code == 0
        man = read_manifest(out / "manifest.json")
        assert len(man.pairs) == 3
        for rec in man.pairs:
            a = (out / rec.image_a).read_bytes()
            b = (out / rec.image_b).read_bytes()
            assert a == b
            flow = read_flow(out / rec.flow)
            assert not flow.vectors.any()
            assert flow.valid.all()

    def test_deterministic_trees(self, tmp_path, detect_dataset, small_config):
        digests = []
        for name in ("t1", "t2"):
            out = tmp_path / name
            code = main(["synth-track", "--manifest",
                         str(detect_dataset / "manifest.json"), "--config",
                         str(small_config), "--out", str(out)])
            assert code == 0
            digests.append(tree_digest(out))
        assert digests[0] == digests[1]

    def test_flow_write_failure_exits_5(self, tmp_path, detect_dataset,
                                        small_config, monkeypatch):
        import lesionforge.cli.commands as commands_mod

        def boom(path, flow):
            raise OSError("disk on fire")

        monkeypatch.setattr(commands_mod.flowio, "write_flow", boom)
        out = tmp_path / "t5"
        code = main(["synth-track", "--manifest",
                     str(detect_dataset / "manifest.json"), "--config",
                     str(small_config), "--out", str(out)])
        assert code == 5
        assert not out.exists()

    def test_every_flow_file_reparses(self, tmp_path, detect_dataset,
                                      small_config):
        out = tmp_path / "track"
        assert main(["synth-track", "--manifest",
                     str(detect_dataset / "manifest.json"), "--config",
                     str(small_config), "--out", str(out)]) == 0
        man = read_manifest(out / "manifest.json")
        validate_manifest_files(out / "manifest.json", man)
        for rec in man.pairs:
            data = (out / rec.flow).read_bytes()
            field = flow_from_bytes(data)
            assert flow_to_bytes(field) == data


class TestBaselineAndEval:
    def test_zero_deformation_displacements_are_zero(self, track_run):
        _, preds = track_run
        obj = json.loads(preds.read_text())
        assert obj["pairs"]
        for pair in obj["pairs"]:
            assert pair["points"]
            for pt in pair["points"]:
                if pt["valid"]:
                    assert pt["match"] == pt["query"]

    def test_baseline_rerun_byte_identical(self, tmp_path, track_run):
        track, preds = track_run
        again = tmp_path / "again.json"
        assert main(["baseline-run", "--manifest", str(track / "manifest.json"),
                     "--mode", "track", "--out", str(again)]) == 0
        assert again.read_bytes() == preds.read_bytes()

    def test_track_eval_pck_is_one(self, tmp_path, track_run):
        track, preds = track_run
        metrics = tmp_path / "metrics.json"
        assert main(["eval", "--manifest", str(track / "manifest.json"),
                     "--predictions", str(preds), "--task", "track", "--out",
                     str(metrics), "--alphas", "0.01,0.05"]) == 0
        obj = json.loads(metrics.read_text())
        fractions = {p["alpha"]: p["fraction"] for p in obj["points"]}
        assert fractions[0.05] == 1.0

    def test_eval_rejects_schema_mismatch_with_field_path(self, tmp_path,
                                                          track_run, capsys):
        track, _ = track_run
        bad = tmp_path / "bad_preds.json"
        bad.write_text(json.dumps({
            "schema_version": 1, "task": "track",
            "pairs": [{"index": 0, "points": [{"query": [1], "match": [1, 2]}]}],
        }))
        code = main(["eval", "--manifest", str(track / "manifest.json"),
                     "--predictions", str(bad), "--task", "track", "--out",
                     str(tmp_path / "m.json")])
        assert code == 2
        err = capsys.readouterr().err
        assert "pairs[0].points[0].query" in err

    def test_eval_wrong_task_exits_2(self, tmp_path, track_run):
        track, preds = track_run
        code = main(["eval", "--manifest", str(track / "manifest.json"),
                     "--predictions", str(preds), "--task", "detect", "--out",
                     str(tmp_path / "m.json")])
        assert code == 2

    def test_detect_eval_empty_predictions_auc_zero(self, tmp_path,
                                                    detect_dataset):
        man = read_manifest(detect_dataset / "manifest.json")
        preds = tmp_path / "empty_preds.json"
        preds.write_text(json.dumps({
            "schema_version": 1, "task": "detect",
            "images": [{"index": s.index, "proposals": []} for s in man.samples],
        }))
        metrics = tmp_path / "m.json"
        assert main(["eval", "--manifest", str(detect_dataset / "manifest.json"),
                     "--predictions", str(preds), "--task", "detect", "--out",
                     str(metrics)]) == 0
        obj = json.loads(metrics.read_text())
        assert obj["auc"] == 0.0
        assert all(p["tpr"] == 0.0 for p in obj["points"])

    def test_cross_module_pck_numbers(self, tmp_path):
        """A tiny hand-built pair dataset must reproduce evalkit.pck exactly
        through the CLI: errors of 3 px and 10 px on a 100x100 image."""
        import math

        from lesionforge.evalkit import pck

        base = tmp_path / "handmade"
        (base / "pairs").mkdir(parents=True)
        img = np.tile(np.linspace(0.2, 0.8, 100)[None, :, None], (100, 1, 3))
        for name in ("a", "b"):
            write_image(base / "pairs" / f"pair_00000_{name}.png", img)
        labels = np.zeros((100, 100), dtype=np.uint8)
        from lesionforge.imagecore import write_label_mask

        for name in ("labels_a", "labels_b"):
            write_label_mask(base / "pairs" / f"pair_00000_{name}.png", labels)
        from lesionforge.cli.flowio import write_flow

        write_flow(base / "pairs" / "pair_00000.lflo", FlowField.zero(100, 100))
        from lesionforge.cli.manifest import PairRecord

        man = DatasetManifest(
            kind="tracking", seed=0, config=ForgeConfig(), assets_dir="assets",
            pairs=(PairRecord(index=0, seed=0,
                              image_a="pairs/pair_00000_a.png",
                              image_b="pairs/pair_00000_b.png",
                              labels_a="pairs/pair_00000_labels_a.png",
                              labels_b="pairs/pair_00000_labels_b.png",
                              flow="pairs/pair_00000.lflo", width=100,
                              height=100, source_index=0),))
        write_manifest(base / "manifest.json", man)
        preds = base / "preds.json"
        preds.write_text(json.dumps({
            "schema_version": 1, "task": "track",
            "pairs": [{"index": 0, "points": [
                {"query": [50, 50], "match": [53, 50], "valid": True},
                {"query": [20, 20], "match": [20, 30], "valid": True},
            ]}],
        }))
        metrics = tmp_path / "metrics.json"
        assert main(["eval", "--manifest", str(base / "manifest.json"),
                     "--predictions", str(preds), "--task", "track", "--out",
                     str(metrics), "--alphas", "0.05,0.1"]) == 0
        got = json.loads(metrics.read_text())
        diag = math.hypot(100, 100)
        want = pck(np.array([[53.0, 50.0], [20.0, 30.0]]),
                   np.array([[50.0, 50.0], [20.0, 20.0]]),
                   [0.05, 0.1], diag)
        assert [(p["alpha"], p["fraction"]) for p in got["points"]] \
            == list(want.points)

    def test_overlays_written(self, tmp_path, track_run):
        track, preds = track_run
        metrics = tmp_path / "om" / "metrics.json"
        assert main(["eval", "--manifest", str(track / "manifest.json"),
                     "--predictions", str(preds), "--task", "track", "--out",
                     str(metrics), "--overlay", "--csv"]) == 0
        assert (metrics.parent / "overlays").is_dir()
        assert list((metrics.parent / "overlays").glob("track_*.png"))
        assert metrics.with_suffix(".csv").is_file()


class TestPoissonCloneCommand:
    def test_identity_clone_quantizes_to_target(self, tmp_path, capsys):
        r = rng(30)
        img = np.round(r.random((24, 24, 3)) * 255) / 255
        tgt = tmp_path / "t.png"
        write_image(tgt, img)
        mask = np.zeros((24, 24), dtype=bool)
        mask[6:18, 6:18] = True
        mpath = tmp_path / "m.png"
        write_binary_mask(mpath, mask)
        out = tmp_path / "out.png"
        code = main(["poisson-clone", "--target", str(tgt), "--source",
                     str(tgt), "--mask", str(mpath), "--out", str(out)])
        assert code == 0
        report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert report["converged"] is True
        diff = np.abs(read_image(out) - img).max()
        assert diff <= 1.0 / 255.0 + 1e-9

    def test_constant_fixture_interior_takes_target_level(self, tmp_path):
        tgt = tmp_path / "t.png"
        write_image(tgt, np.full((20, 20, 3), 0.2))
        src = tmp_path / "s.png"
        write_image(src, np.full((20, 20, 3), 0.8))
        mask = np.zeros((20, 20), dtype=bool)
        mask[5:15, 5:15] = True
        mpath = tmp_path / "m.png"
        write_binary_mask(mpath, mask)
        out = tmp_path / "o.png"
        assert main(["poisson-clone", "--target", str(tgt), "--source",
                     str(src), "--mask", str(mpath), "--out", str(out)]) == 0
        result = read_image(out)
        np.testing.assert_allclose(result[10, 10], 0.2, atol=1.0 / 255.0)

    def test_border_mask_warns_and_succeeds(self, tmp_path, capsys):
        r = rng(31)
        write_image(tmp_path / "t.png", r.random((20, 20, 3)))
        write_image(tmp_path / "s.png", r.random((20, 20, 3)))
        write_binary_mask(tmp_path / "m.png", np.ones((20, 20), dtype=bool))
        code = main(["poisson-clone", "--target", str(tmp_path / "t.png"),
                     "--source", str(tmp_path / "s.png"), "--mask",
                     str(tmp_path / "m.png"), "--out", str(tmp_path / "o.png")])
        assert code == 0
        assert "eroded" in capsys.readouterr().err

    def test_missing_input_exits_3(self, tmp_path):
        code = main(["poisson-clone", "--target", str(tmp_path / "ghost.png"),
                     "--source", str(tmp_path / "ghost.png"), "--mask",
                     str(tmp_path / "ghost.png"), "--out",
                     str(tmp_path / "o.png")])
        assert code == 3

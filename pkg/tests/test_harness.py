"""Run harness: config handling, checkpoints, the training loop, CLI verbs."""

import json

import numpy as np
import pytest
import yaml

from kvseg.data import CLASS_TABLE, ClassTable, Dataset
from kvseg.data.synth import SceneSpec
from kvseg.errors import ConfigError, DataError, DivergenceError
from kvseg.harness import (
    AblationPreset,
    RunConfig,
    apply_overrides,
    build_dataset,
    build_manifest,
    check_class_table,
    config_from_dict,
    config_hash,
    dump_config,
    evaluate_checkpoint,
    evaluate_model,
    load_checkpoint,
    load_config,
    overlay_frame,
    render_video,
    restore_model,
    run_ablation,
    sample_reference_frame,
    save_checkpoint,
    track_color,
    train,
)
from kvseg.harness.cli import main
from kvseg.model import VideoSegmenter

TINY_MODEL = [
    "model.channels=16",
    "model.embed_dim=8",
    "model.heads=2",
    "model.ffn_hidden=24",
    "model.backbone_widths=[8,12,16,20]",
    "model.thing_kernels=4",
]


def tiny_config(*extra: str) -> RunConfig:
    return apply_overrides(RunConfig(), TINY_MODEL + ["optim.log_every=0", *extra])


def tiny_dataset(n_videos: int = 2, frames: int = 3, seed0: int = 40) -> Dataset:
    specs = [
        SceneSpec(seed=seed0 + i, height=64, width=64, num_frames=frames, num_things=2)
        for i in range(n_videos)
    ]
    return build_dataset(specs)


class TestConfig:
    def test_defaults_round_trip(self):
        cfg = RunConfig()
        assert config_from_dict(cfg.to_dict()) == cfg

    def test_yaml_file_round_trip(self, tmp_path):
        cfg = tiny_config("seed=3", "optim.steps=17", "flags.fuse=false")
        path = tmp_path / "run.yaml"
        dump_config(cfg, path)
        assert load_config(path) == cfg

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        assert load_config(path) == RunConfig()

    def test_unknown_section_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            config_from_dict({"optim": {"learning_rate": 0.1}})

    def test_unknown_top_level_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown top-level"):
            config_from_dict({"optimizer": {}})

    def test_invalid_yaml_rejected(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("model: [unclosed")
        with pytest.raises(ConfigError, match="invalid YAML"):
            load_config(path)

    def test_inconsistent_model_dims_rejected(self):
        with pytest.raises(ConfigError, match="divisible"):
            config_from_dict({"model": {"channels": 30}})

    def test_override_types(self):
        cfg = apply_overrides(
            RunConfig(),
            ["seed=9", "optim.lr=0.5", "flags.fuse=false", "model.backbone_widths=[4,8,12,16]"],
        )
        assert cfg.seed == 9
        assert cfg.optim.lr == 0.5
        assert cfg.flags.fuse is False
        assert cfg.model.backbone_widths == (4, 8, 12, 16)

    def test_wrongly_typed_values_rejected(self):
        # YAML reads exponents without a decimal point as strings; the config
        # layer has to catch that instead of failing numerically later
        with pytest.raises(ConfigError, match="expects a number"):
            apply_overrides(RunConfig(), ["optim.divergence_factor=1e-9"])
        with pytest.raises(ConfigError, match="expects an integer"):
            apply_overrides(RunConfig(), ["optim.steps=4.5"])
        with pytest.raises(ConfigError, match="expects a boolean"):
            apply_overrides(RunConfig(), ["flags.fuse=maybe"])
        with pytest.raises(ConfigError, match="list of integers"):
            config_from_dict({"model": {"backbone_widths": "wide"}})
        with pytest.raises(ConfigError, match="expects an integer"):
            config_from_dict({"seed": "abc"})

    def test_override_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            apply_overrides(RunConfig(), ["optim.nope=1"])
        with pytest.raises(ConfigError, match="no section"):
            apply_overrides(RunConfig(), ["nosection.lr=1"])
        with pytest.raises(ConfigError, match="key=value"):
            apply_overrides(RunConfig(), ["justakey"])

    def test_hash_is_stable_and_sensitive(self):
        a = config_hash(RunConfig())
        assert len(a) == 12
        assert a == config_hash(RunConfig())
        assert a != config_hash(apply_overrides(RunConfig(), ["seed=1"]))
        assert a != config_hash(apply_overrides(RunConfig(), ["tracker.ttl=3"]))

    def test_hash_ignores_yaml_key_order(self, tmp_path):
        cfg = RunConfig()
        shuffled = {k: cfg.to_dict()[k] for k in reversed(list(cfg.to_dict()))}
        path = tmp_path / "shuffled.yaml"
        path.write_text(yaml.safe_dump(shuffled, sort_keys=False))
        assert config_hash(load_config(path)) == config_hash(cfg)


class TestReferenceSampling:
    def test_single_frame_video_is_degenerate(self):
        rng = np.random.default_rng(0)
        assert sample_reference_frame(1, 0, 2, rng) == (0, True)

    def test_window_clipped_at_start(self):
        rng = np.random.default_rng(0)
        seen = {sample_reference_frame(10, 0, 2, rng)[0] for _ in range(200)}
        assert seen == {1, 2}

    def test_window_centered_mid_video(self):
        rng = np.random.default_rng(1)
        seen = {sample_reference_frame(10, 5, 2, rng)[0] for _ in range(400)}
        assert seen == {3, 4, 6, 7}

    def test_never_returns_key_when_alternatives_exist(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            ref, degenerate = sample_reference_frame(4, 2, 1, rng)
            assert not degenerate
            assert ref in (1, 3)

    def test_key_out_of_range_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ConfigError):
            sample_reference_frame(5, 5, 2, rng)

    def test_seeded_sequence_reproducible(self):
        a = [sample_reference_frame(8, 3, 2, np.random.default_rng(7))[0] for _ in range(1)]
        b = [sample_reference_frame(8, 3, 2, np.random.default_rng(7))[0] for _ in range(1)]
        assert a == b


class TestCheckpoint:
    def test_round_trip_preserves_parameters(self, tmp_path):
        cfg = tiny_config()
        model = VideoSegmenter(cfg.model_config(), np.random.default_rng(0))
        path = save_checkpoint(tmp_path / "ck", model, build_manifest(cfg, {"steps": 0}))
        assert path.suffix == ".npz"
        state, manifest = load_checkpoint(path)
        for name, param in model.named_parameters():
            np.testing.assert_array_equal(state[name], param.data.astype("<f4"))
        assert manifest["config_hash"] == config_hash(cfg)
        assert manifest["steps"] == 0

    def test_restore_model_matches_original_outputs(self, tmp_path):
        cfg = tiny_config()
        model = VideoSegmenter(cfg.model_config(), np.random.default_rng(3))
        path = save_checkpoint(tmp_path / "ck.npz", model, build_manifest(cfg))
        restored, _ = restore_model(path)
        img = np.random.default_rng(0).integers(0, 255, (64, 64, 3), dtype=np.uint8)
        a = model.forward_frame(img).final.mask_logits.numpy()
        b = restored.forward_frame(img).final.mask_logits.numpy()
        # saved weights are float32; reloading quantizes both ways identically
        np.testing.assert_allclose(a, b, atol=1e-4)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_checkpoint(tmp_path / "absent.npz")

    def test_truncated_file_rejected(self, tmp_path):
        cfg = tiny_config()
        model = VideoSegmenter(cfg.model_config(), np.random.default_rng(0))
        path = save_checkpoint(tmp_path / "ck.npz", model, build_manifest(cfg))
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(DataError, match="unreadable"):
            load_checkpoint(path)

    def test_archive_without_manifest_rejected(self, tmp_path):
        path = tmp_path / "bare.npz"
        np.savez(path, weights=np.zeros(3))
        with pytest.raises(DataError, match="__manifest__"):
            load_checkpoint(path)

    def test_class_table_guard(self):
        manifest = build_manifest(tiny_config())
        check_class_table(manifest, CLASS_TABLE, "here")  # matching table passes
        other = ClassTable(thing_classes=(3, 4), stuff_classes=(0, 1, 2))
        with pytest.raises(DataError, match="class table"):
            check_class_table(manifest, other, "here")


class TestTrain:
    def test_same_seed_same_losses(self):
        ds = tiny_dataset()
        cfg = tiny_config("optim.steps=5", "seed=11")
        a = train(cfg, ds, print_fn=None)
        b = train(cfg, ds, print_fn=None)
        assert [l.total for l in a.logs] == [l.total for l in b.logs]

    def test_loss_moves_down(self):
        ds = tiny_dataset()
        cfg = tiny_config("optim.steps=30", "optim.lr=0.002", "seed=0")
        result = train(cfg, ds, print_fn=None)
        first = np.mean([l.total for l in result.logs[:5]])
        last = np.mean([l.total for l in result.logs[-5:]])
        assert last < first

    def test_artifacts_written(self, tmp_path):
        ds = tiny_dataset()
        result = train(tiny_config("optim.steps=3"), ds, out_dir=tmp_path, print_fn=None)
        assert result.checkpoint_path == tmp_path / "checkpoint.npz"
        assert (tmp_path / "manifest.json").is_file()
        rows = [json.loads(line) for line in (tmp_path / "losses.jsonl").read_text().splitlines()]
        assert [r["step"] for r in rows] == [1, 2, 3]

    def test_empty_dataset_rejected(self):
        with pytest.raises(ConfigError, match="empty"):
            train(tiny_config(), Dataset(videos=[], classes=CLASS_TABLE), print_fn=None)

    def test_divergence_guard_dumps_state(self, tmp_path):
        ds = tiny_dataset(n_videos=1)
        cfg = tiny_config("optim.steps=5", "optim.divergence_factor=1.0e-9")
        with pytest.raises(DivergenceError):
            train(cfg, ds, out_dir=tmp_path, print_fn=None)
        assert (tmp_path / "diverged.npz").is_file()
        _, manifest = load_checkpoint(tmp_path / "diverged.npz")
        assert manifest["diverged_at_step"] == 1


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    ds = tiny_dataset()
    cfg = tiny_config("optim.steps=2")
    result = train(cfg, ds, out_dir=out, print_fn=None)
    return cfg, ds, result


class TestEvaluate:
    def test_report_contents(self, trained):
        cfg, ds, result = trained
        report = evaluate_model(result.model, ds, cfg)
        assert report["config_hash"] == config_hash(cfg)
        assert report["tracker"]["ttl"] == cfg.tracker.ttl
        assert 0.0 <= report["stq"] <= 1.0
        assert report["num_videos"] == len(ds)

    def test_checkpoint_report_matches_model_report(self, trained):
        cfg, ds, result = trained
        direct = evaluate_model(result.model, ds, cfg)
        via_ckpt = evaluate_checkpoint(result.checkpoint_path, ds)
        assert via_ckpt["checkpoint_hash"] == config_hash(cfg)
        # float32 checkpoint quantization can nudge scores; structure must agree
        assert direct["num_videos"] == via_ckpt["num_videos"]
        assert via_ckpt["stq"] == pytest.approx(direct["stq"], abs=0.05)

    def test_mismatched_config_needs_force(self, trained):
        cfg, ds, result = trained
        other = apply_overrides(cfg, ["tracker.ttl=5"])
        with pytest.raises(ConfigError, match="does not match"):
            evaluate_checkpoint(result.checkpoint_path, ds, override_cfg=other)
        report = evaluate_checkpoint(result.checkpoint_path, ds, override_cfg=other, force=True)
        assert report["tracker"]["ttl"] == 5

    def test_wrong_class_table_rejected(self, trained):
        _, ds, result = trained
        other = ClassTable(thing_classes=(9,), stuff_classes=(0,))
        bad = Dataset(videos=ds.videos, classes=other)
        with pytest.raises(DataError, match="class table"):
            evaluate_checkpoint(result.checkpoint_path, bad)


class TestRender:
    def test_track_colors_distinct_and_stable(self):
        colors = [track_color(i) for i in range(1, 9)]
        assert len(set(colors)) == len(colors)
        assert colors == [track_color(i) for i in range(1, 9)]

    def test_overlay_marks_tracks_and_keeps_void(self):
        ds = tiny_dataset(n_videos=1)
        video = ds.videos[0]
        rgb = video.frames_rgb[0]
        pan = video.annotation.frames[0]
        out = overlay_frame(rgb, pan, ds.classes)
        assert out.shape == rgb.shape and out.dtype == np.uint8
        things = pan.instance > 0
        assert things.any()
        assert (out[things] != rgb[things]).any()

    def test_void_pixels_untouched(self):
        rgb = np.full((8, 8, 3), 120, np.uint8)
        from kvseg.data import PanopticFrame

        pan = PanopticFrame(
            semantic=np.full((8, 8), CLASS_TABLE.ignore_id, np.int64),
            instance=np.zeros((8, 8), np.int64),
        )
        out = overlay_frame(rgb, pan, CLASS_TABLE)
        np.testing.assert_array_equal(out, rgb)

    def test_render_video_writes_pngs(self, tmp_path):
        ds = tiny_dataset(n_videos=1)
        video = ds.videos[0]
        paths = render_video(video.frames_rgb, video.annotation.frames, ds.classes, tmp_path)
        assert len(paths) == len(video.annotation.frames)
        assert all(p.is_file() and p.suffix == ".png" for p in paths)


class TestAblation:
    def test_tiny_ladder_runs_and_tabulates(self, tmp_path):
        preset = AblationPreset(
            name="smoke",
            headline="sq",
            train_preset="overfit8",
            eval_preset="overfit8",
            base_overrides=TINY_MODEL + ["optim.steps=2", "optim.log_every=0"],
            rows={"on": ["flags.fuse=true"], "off": ["flags.fuse=false"]},
            seeds=(0,),
        )
        result = run_ablation(preset, out_dir=tmp_path, print_fn=None)
        means = result.row_means()
        assert set(means) == {"on", "off"}
        assert all(0.0 <= v <= 1.0 for v in means.values())
        saved = json.loads((tmp_path / "ablation.json").read_text())
        assert saved["row_means"] == pytest.approx(means)
        table = (tmp_path / "ablation.txt").read_text()
        assert "on" in table and "off" in table


class TestCli:
    @pytest.fixture()
    def outroot(self, tmp_path, monkeypatch):
        monkeypatch.setenv("KVSEG_OUTPUT_ROOT", str(tmp_path))
        return tmp_path

    def run_pipeline(self, outroot):
        small = [x for key in TINY_MODEL + ["optim.steps=4", "optim.log_every=0"] for x in ("--set", key)]
        assert main(["gen-data", "--preset", "overfit8", "--out", "data"]) == 0
        data = str(outroot / "data")
        assert main(["train", "--data", data, "--out", "run"] + small) == 0
        return data, str(outroot / "run" / "checkpoint.npz")

    def test_full_pipeline(self, outroot, capsys):
        data, ckpt = self.run_pipeline(outroot)
        assert main(["evaluate", "--checkpoint", ckpt, "--data", data, "--out", "report.json"]) == 0
        report = json.loads((outroot / "report.json").read_text())
        assert "stq" in report and "config_hash" in report
        assert main(["track", "--checkpoint", ckpt, "--data", data, "--out", "tracks"]) == 0
        assert (outroot / "tracks" / "video_0000" / "tracks.jsonl").is_file()
        assert (
            main(
                [
                    "render",
                    "--data",
                    data,
                    "--tracks",
                    str(outroot / "tracks"),
                    "--out",
                    "png",
                    "--video",
                    "video_0001",
                ]
            )
            == 0
        )
        pngs = list((outroot / "png" / "video_0001").glob("*.png"))
        assert len(pngs) == 4
        capsys.readouterr()

    def test_exit_codes(self, outroot, capsys):
        data, ckpt = self.run_pipeline(outroot)
        assert main(["train", "--data", data, "--out", "x", "--set", "optim.bogus=1"]) == 2
        assert main(["evaluate", "--checkpoint", ckpt, "--data", str(outroot / "missing")]) == 3
        assert (
            main(
                ["train", "--data", data, "--out", "div"]
                + [x for key in TINY_MODEL for x in ("--set", key)]
                + ["--set", "optim.divergence_factor=1.0e-9", "--set", "optim.log_every=0"]
            )
            == 4
        )
        err = capsys.readouterr().err
        assert "config error" in err and "data error" in err and "diverged" in err

    def test_unknown_verb_exits_nonzero(self, capsys):
        assert main(["no-such-verb"]) != 0
        capsys.readouterr()

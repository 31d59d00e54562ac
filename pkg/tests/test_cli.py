import json
import subprocess
import sys

import numpy as np
import pytest

from panoptic.harness.tensorio import read_tensor


def run_cli(*args, check=True):
    result = subprocess.run(
        [sys.executable, "-m", "panoptic", *map(str, args)],
        capture_output=True,
        text=True,
    )
    if check and result.returncode != 0:
        raise AssertionError(
            f"CLI failed ({result.returncode}): {result.stdout}\n{result.stderr}"
        )
    return result


def dir_snapshot(directory):
    """Maps relative file name to content bytes, for byte-level comparison."""
    return {
        p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()
    }


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One synth+encode directory shared by the downstream-command tests.

    128x128 keeps every stuff band above the default area threshold, so the
    no-noise pipeline reproduces the ground truth exactly.
    """
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    run_cli("synth", "--seed", 7, "--size", "128", "--count", 2, "--out", data)
    run_cli("encode-targets", "--in", data)
    return data


class TestSynth:
    def test_writes_scenes_and_manifest(self, tmp_path):
        out = tmp_path / "scenes"
        run_cli("synth", "--seed", 3, "--size", "64x96", "--count", 2, "--out", out)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["count"] == 2
        assert manifest["scene"]["height"] == 64
        assert manifest["scene"]["width"] == 96
        pan = read_tensor(out / "gt_panoptic_0000.ptns")
        assert pan.shape == (64, 96)
        assert pan.dtype == np.uint32

    def test_same_seed_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli("synth", "--seed", 9, "--size", 48, "--count", 2, "--out", a)
        run_cli("synth", "--seed", 9, "--size", 48, "--count", 2, "--out", b)
        assert dir_snapshot(a) == dir_snapshot(b)

    def test_different_seed_differs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run_cli("synth", "--seed", 1, "--size", 48, "--out", a)
        run_cli("synth", "--seed", 2, "--size", 48, "--out", b)
        assert (
            (a / "gt_panoptic_0000.ptns").read_bytes()
            != (b / "gt_panoptic_0000.ptns").read_bytes()
        )


class TestPipelineCommands:
    def test_encode_targets_outputs(self, workspace):
        heat = read_tensor(workspace / "heatmap_0000.ptns")
        offsets = read_tensor(workspace / "offsets_0000.ptns")
        mask = read_tensor(workspace / "valid_mask_0000.ptns")
        assert heat.dtype == np.float32 and heat.shape == (128, 128)
        assert offsets.shape == (128, 128, 2)
        assert mask.dtype == bool

    def test_perturb_writes_predictions(self, workspace, tmp_path):
        out = tmp_path / "noisy"
        run_cli(
            "perturb", "--in", workspace, "--out", out,
            "--seed", 11, "--offset-noise", 2.0,
        )
        pred_off = read_tensor(out / "pred_offsets_0000.ptns")
        base_off = read_tensor(workspace / "offsets_0000.ptns")
        assert pred_off.shape == base_off.shape
        assert not np.array_equal(pred_off, base_off)

    def test_postprocess_and_evaluate_identity(self, workspace, tmp_path):
        out = tmp_path / "pred"
        run_cli("postprocess", "--in", workspace, "--out", out)
        report_dir = tmp_path / "report"
        result = run_cli(
            "evaluate", "--pred", out, "--gt", workspace, "--out", report_dir
        )
        report = json.loads((report_dir / "report.json").read_text())
        assert report["pq_all"] == 1.0
        assert report["miou"] == 1.0
        assert report["mean_ap"] == 1.0
        assert "pq_all" in result.stdout

    def test_roundtrip_reports_perfect_pq(self, tmp_path):
        out = tmp_path / "rt"
        result = run_cli(
            "roundtrip", "--seed", 7, "--size", 128, "--scenes", 2, "--out", out
        )
        report = json.loads((out / "report.json").read_text())
        assert report["pq_all"] == 1.0
        assert report["miou"] == 1.0
        assert report["scene_count"] == 2
        assert len(report["per_scene"]) == 2
        assert "pq_all" in result.stdout

    def test_roundtrip_with_noise_config(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"noise": {"offset_noise_std": 16.0, "seed": 1}}))
        out = tmp_path / "rt"
        run_cli(
            "roundtrip", "--seed", 0, "--size", 128, "--scenes", 3,
            "--config", config, "--out", out,
        )
        report = json.loads((out / "report.json").read_text())
        assert report["pq_all"] < 1.0


class TestWorkers:
    def test_worker_count_does_not_change_outputs(self, tmp_path):
        base = dict(seed=5, size=64, count=3)
        dirs = {}
        for workers in (1, 4):
            d = tmp_path / f"w{workers}"
            run_cli(
                "synth", "--seed", base["seed"], "--size", base["size"],
                "--count", base["count"], "--out", d, "--workers", workers,
            )
            run_cli("encode-targets", "--in", d, "--workers", workers)
            run_cli("postprocess", "--in", d, "--out", d / "pred", "--workers", workers)
            run_cli(
                "evaluate", "--pred", d / "pred", "--gt", d,
                "--out", d / "rep", "--workers", workers,
            )
            dirs[workers] = d
        assert dir_snapshot(dirs[1]) == dir_snapshot(dirs[4])
        assert dir_snapshot(dirs[1] / "pred") == dir_snapshot(dirs[4] / "pred")
        assert (
            (dirs[1] / "rep" / "report.json").read_bytes()
            == (dirs[4] / "rep" / "report.json").read_bytes()
        )


class TestErrors:
    def test_unknown_flag_exits_nonzero(self):
        result = run_cli("synth", "--bogus", 1, check=False)
        assert result.returncode != 0
        assert result.stderr

    def test_unknown_subcommand(self):
        result = run_cli("frobnicate", check=False)
        assert result.returncode != 0

    def test_missing_manifest(self, tmp_path):
        result = run_cli("encode-targets", "--in", tmp_path / "nope", check=False)
        assert result.returncode == 1
        assert "manifest" in result.stderr

    def test_corrupt_tensor_reports_field(self, tmp_path):
        out = tmp_path / "scenes"
        run_cli("synth", "--seed", 1, "--size", 64, "--out", out)
        victim = out / "gt_panoptic_0000.ptns"
        victim.write_bytes(victim.read_bytes()[:-2])
        result = run_cli("encode-targets", "--in", out, check=False)
        assert result.returncode == 1
        assert "payload" in result.stderr

    def test_bad_config_section(self, tmp_path):
        config = tmp_path / "c.json"
        config.write_text(json.dumps({"scene": {"not_a_field": 1}}))
        result = run_cli("synth", "--out", tmp_path / "o", "--config", config, check=False)
        assert result.returncode == 1
        assert "not_a_field" in result.stderr

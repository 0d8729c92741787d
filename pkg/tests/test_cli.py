import io
import json
import math
from contextlib import redirect_stdout

import numpy as np
import pytest

from geoclr.cli import RunConfig, load_config, main
from geoclr.contrastive import write_embedding_file
from geoclr.correspondence import read_pair_file
from geoclr.errors import InputError


def run(argv):
    buf = io.StringIO()
    with redirect_stdout(buf):
        code = main(argv)
    return code, buf.getvalue()


def run_json(argv):
    code, out = run(argv)
    assert code == 0, out
    return json.loads(out.strip().splitlines()[-1])


def make_scene(tmp_path, plan="0:1:partial,0:2:partial,1:2:partial", n_logs=3, seed=7, n_poses=12):
    path = tmp_path / "scene.csv"
    run_json(
        [
            "synth",
            "--n-logs",
            str(n_logs),
            "--plan",
            plan,
            "--n-poses",
            str(n_poses),
            "--output",
            str(path),
            "--seed",
            str(seed),
        ]
    )
    return path


class TestConfigFile:
    def test_load_and_override(self, tmp_path):
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text("iou_min = 0.4\nseed = 9\npercents = 0.1,0.2\n")
        cfg = load_config(cfg_path)
        assert cfg.iou_min == 0.4
        assert cfg.seed == 9
        assert cfg.percents == (0.1, 0.2)

    def test_unknown_key_rejected(self, tmp_path):
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text("frobnicate = 1\n")
        with pytest.raises(InputError):
            load_config(cfg_path)

    def test_config_hash_stable(self):
        assert RunConfig().hash() == RunConfig().hash()
        assert RunConfig().hash() != RunConfig(seed=1).hash()

    def test_flag_overrides_file(self, tmp_path):
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text("seed = 9\n")
        scene = make_scene(tmp_path)
        out1 = tmp_path / "g1.txt"
        summary = run_json(
            ["graph", "--config", str(cfg_path), "--input", str(scene),
             "--output", str(out1), "--iou-min", "0.5"]
        )
        assert summary["iou_min"] == 0.5

    def test_dumped_config_roundtrips(self, tmp_path):
        cfg = RunConfig(iou_min=0.42, percents=(0.05, 0.125), seed=31, cross_only=False)
        path = tmp_path / "dumped.cfg"
        path.write_text(cfg.dump())
        assert load_config(path) == cfg

    def test_dumped_config_reruns_to_identical_outputs(self, tmp_path):
        scene = make_scene(tmp_path)
        out_flags = tmp_path / "g_flags.txt"
        out_cfg = tmp_path / "g_cfg.txt"
        run_json(
            ["graph", "--input", str(scene), "--output", str(out_flags),
             "--iou-min", "0.2", "--iou-max", "0.8"]
        )
        dumped = tmp_path / "effective.cfg"
        dumped.write_text(
            RunConfig(iou_min=0.2, iou_max=0.8).dump(include_paths=False)
        )
        run_json(
            ["graph", "--config", str(dumped), "--input", str(scene), "--output", str(out_cfg)]
        )
        assert out_flags.read_bytes() == out_cfg.read_bytes()


class TestClassifyCommand:
    def test_isolated_pair_histogram(self, tmp_path):
        scene = make_scene(tmp_path, plan="0:1:partial", n_logs=2)
        out = tmp_path / "classes.csv"
        hist = tmp_path / "hist.csv"
        summary = run_json(
            ["classify", "--input", str(scene), "--output", str(out), "--hist-out", str(hist)]
        )
        assert summary["histogram"] == {"1": 2}
        assert summary["n_single"] == 2
        body = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert body[0] == "log_id,class,intersecting_logs"
        assert body[1:] == ["log000,single,1", "log001,single,1"]

    def test_triangle_histogram(self, tmp_path):
        scene = make_scene(tmp_path)
        summary = run_json(["classify", "--input", str(scene)])
        assert summary["histogram"] == {"2": 3}
        assert summary["n_multi"] == 3

    def test_empty_input_exits_zero(self, tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        out = tmp_path / "classes.csv"
        summary = run_json(["classify", "--input", str(empty), "--output", str(out)])
        assert summary["n_logs"] == 0
        body = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert body == ["log_id,class,intersecting_logs"]


class TestStatsCommand:
    def test_summary_fields(self, tmp_path):
        scene = make_scene(tmp_path)
        summary = run_json(["stats", "--input", str(scene)])
        assert summary["n_logs"] == 3
        assert summary["n_poses"] == 36
        assert summary["histogram"] == {"2": 3}


class TestGraphCommand:
    def test_invalid_range_exit_code(self, tmp_path):
        scene = make_scene(tmp_path)
        code, _ = run(
            ["graph", "--input", str(scene), "--output", str(tmp_path / "g.txt"),
             "--iou-min", "0.9", "--iou-max", "0.3"]
        )
        assert code == 1

    def test_graph_written(self, tmp_path):
        scene = make_scene(tmp_path)
        out = tmp_path / "g.txt"
        summary = run_json(["graph", "--input", str(scene), "--output", str(out)])
        assert summary["n_vertices"] == 36
        assert out.read_text().splitlines()[0] == "# geoclr-posegraph v1"


class TestSplitCommand:
    def test_determinism_byte_identical(self, tmp_path):
        scene = make_scene(
            tmp_path, plan="0:1:partial,0:2:partial,1:2:partial", n_logs=10, seed=3
        )
        m1, m2 = tmp_path / "m1.txt", tmp_path / "m2.txt"
        for out in (m1, m2):
            run_json(
                ["split", "--input", str(scene), "--output", str(out),
                 "--percents", "0.025,0.05,0.1,0.2", "--val-frac", "0.1", "--seed", "7"]
            )
        assert m1.read_bytes() == m2.read_bytes()

    def test_infeasible_exit_code(self, tmp_path):
        scene = make_scene(tmp_path)  # all logs multi -> no single pool
        code, _ = run(
            ["split", "--input", str(scene), "--output", str(tmp_path / "m.txt")]
        )
        assert code == 2


class TestSamplePairsAndLossCheck:
    def test_pair_file_and_symmetric_loss(self, tmp_path):
        scene = make_scene(tmp_path)
        pairs = tmp_path / "pairs.txt"
        summary = run_json(
            ["sample-pairs", "--input", str(scene), "--ref", "log000:6", "--adj", "log001:6",
             "--n-anchors", "4", "--n-negatives", "6", "--grid-rows", "10", "--grid-cols", "6",
             "--output", str(pairs), "--seed", "3"]
        )
        assert summary["n_anchors"] == 4
        batch = read_pair_file(pairs)
        n, k = len(batch.anchors), len(batch.negatives)
        za = np.tile([[1.0, 0.0]], (n, 1))
        zother = np.tile([[0.0, 1.0]], (n + k, 1))
        emb = tmp_path / "emb.bin"
        write_embedding_file(emb, np.vstack([za, zother]))
        out = run_json(
            ["loss-check", "--pairs", str(pairs), "--embeddings", str(emb),
             "--tau", "0.07", "--grad-check"]
        )
        assert out["loss"] == pytest.approx(n * math.log(k + 1), abs=1e-12)
        assert out["grad_check"]["pass"] is True

    def test_embedding_row_mismatch(self, tmp_path):
        scene = make_scene(tmp_path)
        pairs = tmp_path / "pairs.txt"
        run_json(
            ["sample-pairs", "--input", str(scene), "--ref", "log000:6", "--adj", "log001:6",
             "--n-anchors", "2", "--n-negatives", "2", "--grid-rows", "10", "--grid-cols", "6",
             "--output", str(pairs), "--seed", "1"]
        )
        emb = tmp_path / "emb.bin"
        write_embedding_file(emb, np.ones((3, 2)))
        code, _ = run(["loss-check", "--pairs", str(pairs), "--embeddings", str(emb)])
        assert code == 1

    def test_missing_ref_errors(self, tmp_path):
        scene = make_scene(tmp_path)
        code, _ = run(
            ["sample-pairs", "--input", str(scene), "--output", str(tmp_path / "p.txt")]
        )
        assert code == 1


class TestIdempotence:
    def test_synth_byte_identical(self, tmp_path):
        d1, d2 = tmp_path / "r1", tmp_path / "r2"
        d1.mkdir()
        d2.mkdir()
        p1 = make_scene(d1)
        p2 = make_scene(d2)
        assert p1.read_bytes() == p2.read_bytes()

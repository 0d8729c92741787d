import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoclr.errors import InputError, InsufficientData
from geoclr.split_gen import (
    SplitManifest,
    dataset_content_hash,
    generate_splits,
    load_manifest,
    percent_label,
    save_manifest,
    verify_manifest,
)
from geoclr.traversal_classify import MULTI, SINGLE, TraversalClass

from conftest import make_dataset


def classes_for(d, multi_logs=()):
    out = []
    for t in d.traversals:
        label = MULTI if t.log_id in multi_logs else SINGLE
        out.append(TraversalClass(t.log_id, label, 2 if label == MULTI else 0))
    return out


def report_map(report):
    return {r.name: r.passed for r in report}


class TestGenerateSplits:
    def test_percentage_ladder(self):
        d = make_dataset({f"log{i:02d}": 50 for i in range(40)})
        classes = classes_for(d, multi_logs={"log00", "log01", "log02"})
        m = generate_splits(d, classes, [0.025, 0.05, 0.10, 0.20], 0.10, seed=1)
        assert set(m.sup_subsets) == {0.025, 0.05, 0.10, 0.20}
        assert set(m.ssl_logs) == {"log00", "log01", "log02"}
        report = verify_manifest(m, d, classes)
        assert all(r.passed for r in report), [r.line() for r in report]

    def test_equal_logs_arithmetic(self):
        # 10 logs x 100 poses, no multi: val needs >= 100 poses -> 1 log,
        # sup 20% needs >= 200 -> 2 logs.
        d = make_dataset({f"log{i}": 100 for i in range(10)})
        classes = classes_for(d)
        m = generate_splits(d, classes, [0.2], 0.1, seed=3)
        assert len(m.val_logs) == 1
        assert len(m.sup_subsets[0.2]) == 2
        assert m.pose_counts["val"] == 100
        assert m.pose_counts[percent_label(0.2)] == 200

    def test_insufficient_single_pool(self):
        d = make_dataset({"a": 70, "b": 30})
        classes = classes_for(d, multi_logs={"a"})  # singles hold 30%
        with pytest.raises(InsufficientData):
            generate_splits(d, classes, [0.5], 0.1, seed=0)

    def test_val_pool_insufficient(self):
        d = make_dataset({"a": 95, "b": 5})
        classes = classes_for(d, multi_logs={"a"})
        with pytest.raises(InsufficientData):
            generate_splits(d, classes, [0.01], 0.10, seed=0)

    def test_determinism_same_seed(self, tmp_path):
        d = make_dataset({f"log{i:02d}": 10 + 7 * i for i in range(25)})
        classes = classes_for(d, multi_logs={"log03"})
        m1 = generate_splits(d, classes, [0.05, 0.1], 0.1, seed=11)
        m2 = generate_splits(d, classes, [0.05, 0.1], 0.1, seed=11)
        assert m1 == m2
        p1, p2 = tmp_path / "m1.txt", tmp_path / "m2.txt"
        save_manifest(m1, p1)
        save_manifest(m2, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_different_seeds_differ(self):
        d = make_dataset({f"log{i:02d}": 20 for i in range(30)})
        classes = classes_for(d)
        m1 = generate_splits(d, classes, [0.1], 0.1, seed=1)
        m2 = generate_splits(d, classes, [0.1], 0.1, seed=2)
        assert m1.val_logs != m2.val_logs or m1.sup_subsets != m2.sup_subsets

    def test_input_validation(self):
        d = make_dataset({"a": 10, "b": 10})
        classes = classes_for(d)
        with pytest.raises(InputError):
            generate_splits(d, classes, [0.2, 0.1], 0.1, seed=0)  # not ascending
        with pytest.raises(InputError):
            generate_splits(d, classes, [1.5], 0.1, seed=0)
        with pytest.raises(InputError):
            generate_splits(d, classes, [0.1], 0.0, seed=0)
        with pytest.raises(InputError):
            generate_splits(d, classes[:1], [0.1], 0.1, seed=0)  # classes miss a log

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_invariants_random_seeds(self, seed):
        rng = np.random.default_rng(seed)
        sizes = {f"log{i:02d}": int(rng.integers(5, 200)) for i in range(20)}
        d = make_dataset(sizes)
        multi = {f"log{i:02d}" for i in range(20) if rng.random() < 0.2}
        classes = classes_for(d, multi_logs=multi)
        single_poses = sum(n for log, n in sizes.items() if log not in multi)
        if single_poses < 0.45 * d.total_poses:
            return  # infeasible draw, covered elsewhere
        m = generate_splits(d, classes, [0.025, 0.05, 0.1, 0.2], 0.1, seed=seed)
        assert all(r.passed for r in verify_manifest(m, d, classes))


class TestVerifyManifest:
    def build(self):
        d = make_dataset({f"log{i}": 100 for i in range(10)})
        classes = classes_for(d, multi_logs={"log9"})
        m = generate_splits(d, classes, [0.1, 0.2], 0.1, seed=5)
        return d, classes, m

    def test_fresh_manifest_passes(self):
        d, classes, m = self.build()
        assert all(r.passed for r in verify_manifest(m, d, classes))

    def test_val_log_in_sup_fails_disjointness(self):
        d, classes, m = self.build()
        bad = SplitManifest(
            seed=m.seed,
            generator=m.generator,
            ssl_logs=m.ssl_logs,
            val_logs=m.val_logs,
            sup_subsets={p: logs + (m.val_logs[0],) for p, logs in m.sup_subsets.items()},
            pose_counts=m.pose_counts,
            total_poses=m.total_poses,
            val_frac=m.val_frac,
            dataset_hash=m.dataset_hash,
        )
        assert report_map(verify_manifest(bad, d, classes))["disjoint"] is False

    def test_broken_nesting_fails(self):
        d, classes, m = self.build()
        subsets = dict(m.sup_subsets)
        subsets[0.1] = tuple(reversed(m.sup_subsets[0.2]))
        bad = SplitManifest(
            seed=m.seed,
            generator=m.generator,
            ssl_logs=m.ssl_logs,
            val_logs=m.val_logs,
            sup_subsets=subsets,
            pose_counts=m.pose_counts,
            total_poses=m.total_poses,
            val_frac=m.val_frac,
            dataset_hash=m.dataset_hash,
        )
        assert report_map(verify_manifest(bad, d, classes))["nesting"] is False

    def test_tightness_detects_padding(self):
        d, classes, m = self.build()
        spare = [
            t.log_id
            for t in d.traversals
            if t.log_id not in set(m.ssl_logs) | set(m.val_logs) | set(m.sup_subsets[0.2])
        ]
        padded = SplitManifest(
            seed=m.seed,
            generator=m.generator,
            ssl_logs=m.ssl_logs,
            val_logs=m.val_logs + (spare[0],),
            sup_subsets=m.sup_subsets,
            pose_counts=m.pose_counts,
            total_poses=m.total_poses,
            val_frac=m.val_frac,
            dataset_hash=m.dataset_hash,
        )
        assert report_map(verify_manifest(padded, d, classes))["val_tight"] is False


class TestManifestFile:
    def test_roundtrip(self, tmp_path):
        d = make_dataset({f"log{i}": 30 + i for i in range(12)})
        classes = classes_for(d, multi_logs={"log0"})
        m = generate_splits(d, classes, [0.05, 0.1], 0.1, seed=7)
        path = tmp_path / "manifest.txt"
        save_manifest(m, path)
        m2 = load_manifest(path)
        assert m2 == m

    def test_hash_tracks_content(self):
        d1 = make_dataset({"a": 5})
        d2 = make_dataset({"a": 6})
        assert dataset_content_hash(d1) != dataset_content_hash(d2)
        assert dataset_content_hash(d1) == dataset_content_hash(make_dataset({"a": 5}))

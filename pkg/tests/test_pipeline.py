import json
from fractions import Fraction

import numpy as np
import pytest

from stepgraph import synthetic
from stepgraph.gnn import TrainConfig
from stepgraph.graph import build_graph
from stepgraph.pipeline import (
    ClassTooSmall,
    DatasetManifest,
    ExperimentConfig,
    ManifestEntry,
    ManifestError,
    confusion_matrix,
    generate_synthetic_corpus,
    load_graphs,
    load_manifest,
    macro_precision_recall,
    manifest_split,
    run_classification_experiment,
    split_dataset,
    write_metrics_csv,
    write_report,
)
from stepgraph.step import loads

FAST = TrainConfig(epochs=3)


class TestSplit:
    def test_counts_six_classes_of_100(self):
        s = split_dataset([c for c in range(6) for _ in range(100)], seed=0)
        assert s.counts() == {"train": 486, "val": 54, "test": 60}

    def test_counts_eight_classes_of_50(self):
        s = split_dataset([c for c in range(8) for _ in range(50)], seed=0)
        assert s.counts() == {"train": 324, "val": 36, "test": 40}

    @pytest.mark.parametrize("seed", range(5))
    def test_stratified_within_one(self, seed):
        rng = np.random.default_rng(seed)
        labels = [int(c) for c in rng.integers(0, 5, 137)]
        s = split_dataset(labels, seed)
        n_test = sum(t == "test" for t in s.tags)
        assert n_test == 14  # round(137 / 10)
        for c in range(5):
            size = labels.count(c)
            test_c = sum(1 for y, t in zip(labels, s.tags) if y == c and t == "test")
            assert abs(test_c - Fraction(size, 10)) < 1

    def test_deterministic_and_seed_sensitive(self):
        labels = [c for c in range(3) for _ in range(20)]
        assert split_dataset(labels, 7).tags == split_dataset(labels, 7).tags
        assert split_dataset(labels, 7).tags != split_dataset(labels, 8).tags

    def test_disjoint_cover(self):
        s = split_dataset([c for c in range(4) for _ in range(13)], 1)
        idx = [set(s.indices(t)) for t in ("train", "val", "test")]
        assert sum(len(i) for i in idx) == 52 and set().union(*idx) == set(range(52))

    def test_class_too_small(self):
        with pytest.raises(ClassTooSmall):
            split_dataset([0, 0, 0, 1, 1], 0)


class TestManifest:
    def test_round_trip(self, small_corpus):
        manifest, _ = small_corpus
        back = load_manifest(manifest.root / "manifest.json")
        assert back.to_dict() == manifest.to_dict()
        assert back.num_classes == 6

    def test_bad_json(self, tmp_path):
        (tmp_path / "m.json").write_text("{not json")
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / "m.json")

    def test_gap_in_class_ids(self, tmp_path):
        m = DatasetManifest([ManifestEntry("a", 0), ManifestEntry("b", 2)], ["x", "y", "z"], root=tmp_path)
        with pytest.raises(ManifestError):
            m.validate(check_paths=False)

    def test_missing_file(self, tmp_path):
        m = DatasetManifest([ManifestEntry("nope.stp", 0)], ["x"], root=tmp_path)
        m.save(tmp_path / "m.json")
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / "m.json")

    def test_stored_split(self):
        m = DatasetManifest([ManifestEntry("a", 0, split="train"), ManifestEntry("b", 0, split="test")], ["x"])
        assert manifest_split(m).tags == ["train", "test"]
        assert manifest_split(DatasetManifest([ManifestEntry("a", 0)], ["x"])) is None


class TestSynthetic:
    def test_two_classes_all_parse(self, tmp_path):
        m = generate_synthetic_corpus(tmp_path, ["bar", "spring"], count_per_class=10, seed=3)
        assert len(m.entries) == 20 and len(list(tmp_path.glob("*/*.stp"))) == 20
        for g in load_graphs(m):
            assert len(g.nodes) > 0 and not g.dangling_references

    def test_same_seed_byte_identical(self, tmp_path):
        a = generate_synthetic_corpus(tmp_path / "a", count_per_class=2, seed=5)
        generate_synthetic_corpus(tmp_path / "b", count_per_class=2, seed=5)
        for e in a.entries:
            assert (tmp_path / "a" / e.path).read_bytes() == (tmp_path / "b" / e.path).read_bytes()
        assert (tmp_path / "a/manifest.json").read_bytes() == (tmp_path / "b/manifest.json").read_bytes()

    def test_different_seed_differs(self, tmp_path):
        a = generate_synthetic_corpus(tmp_path / "a", ["screw", "nut"], count_per_class=1, seed=1)
        generate_synthetic_corpus(tmp_path / "b", ["screw", "nut"], count_per_class=1, seed=2)
        assert (tmp_path / "a" / a.entries[0].path).read_bytes() != (tmp_path / "b" / a.entries[0].path).read_bytes()

    @pytest.mark.parametrize("mi", range(8))
    def test_bar_node_count_from_template_parameters(self, mi):
        # 13 header + prism (30m + 16) + shell, brep, 4-instance axis, rep, sdr
        sides = int(synthetic.model_rng(0, 0, mi).integers(4, 13))
        text = synthetic.render_model(synthetic.bar, "b", synthetic.model_rng(0, 0, mi))
        assert len(build_graph(loads(text)).nodes) == 30 * sides + 37

    def test_class_means_differ(self, small_corpus):
        manifest, graphs = small_corpus
        means = [np.mean([len(g.nodes) for g in graphs if g.label == c]) for c in range(manifest.num_classes)]
        assert len(set(means)) == len(means)

    def test_within_class_sizes_vary(self, small_corpus):
        manifest, graphs = small_corpus
        for c in range(manifest.num_classes):
            assert len({len(g.nodes) for g in graphs if g.label == c}) > 1

    def test_needs_two_classes(self, tmp_path):
        with pytest.raises(ValueError):
            generate_synthetic_corpus(tmp_path, ["bar"], count_per_class=3)
        with pytest.raises(ValueError):
            generate_synthetic_corpus(tmp_path, ["bar", "teapot"], count_per_class=3)


class TestMetrics:
    def test_confusion_and_macro(self):
        cm = confusion_matrix([0, 0, 1, 1, 2], [0, 1, 1, 1, 0], 3)
        assert cm.tolist() == [[1, 1, 0], [0, 2, 0], [1, 0, 0]]
        p, r = macro_precision_recall(cm)
        assert p == pytest.approx((1 / 2 + 2 / 3 + 0) / 3)
        assert r == pytest.approx((1 / 2 + 1 + 0) / 3)


@pytest.fixture(scope="module")
def small_run(small_corpus):
    manifest, graphs = small_corpus
    return run_classification_experiment(manifest, ExperimentConfig(train=FAST, seed=2), graphs)


class TestExperiment:
    def test_report_shape(self, small_run, small_corpus):
        manifest, _ = small_corpus
        rep = small_run.report
        # 36 models: round(3.6) = 4 test, then round(3.2) = 3 val
        assert rep["split_counts"] == {"train": 29, "val": 3, "test": 4}
        cm = np.array(rep["test"]["confusion"])
        test_idx = small_run.split.indices("test")
        assert cm.sum(axis=1).tolist() == [sum(manifest.entries[i].class_id == c for i in test_idx) for c in range(6)]
        assert rep["test"]["accuracy"] == np.trace(cm) / cm.sum()
        assert len(rep["epochs"]) == 3

    def test_retrieval_grid(self, small_run):
        grid = small_run.report["retrieval"]["grid"]
        cells = [grid[m][l]["map"] for m in grid for l in grid[m]]
        assert len(cells) == 15 and all(0.0 <= c <= 1.0 for c in cells)
        assert not grid["histogram_intersection"]["softmax"]["shifted"]
        ret = small_run.report["retrieval"]
        assert ret["softmax_cosine_is_best"] or "deviation" in ret

    def test_vocab_from_train_only(self, small_run, small_corpus):
        _, graphs = small_corpus
        train_types = {n.type_token for i in small_run.split.indices("train") for n in graphs[i].nodes}
        assert set(small_run.vocab.tokens) - {"<OOV>"} == train_types

    def test_deterministic_bytes(self, small_run, small_corpus, tmp_path):
        manifest, graphs = small_corpus
        again = run_classification_experiment(manifest, ExperimentConfig(train=FAST, seed=2), graphs)
        write_report(small_run.report, tmp_path / "a.json")
        write_report(again.report, tmp_path / "b.json")
        write_metrics_csv(small_run.history, tmp_path / "a.csv")
        write_metrics_csv(again.history, tmp_path / "b.csv")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        json.loads((tmp_path / "a.json").read_text())

    @pytest.mark.parametrize("axis", ["bottleneck", "pooling"])
    def test_ablation_grids(self, small_corpus, axis):
        manifest, graphs = small_corpus
        values = (8, 16, 32) if axis == "bottleneck" else ("attention", "mean", "degree")
        reports = [run_classification_experiment(
            manifest, ExperimentConfig(train=TrainConfig(epochs=1), retrieval=False, **{axis: v}), graphs).report
            for v in values]
        assert len(reports) == 3
        assert [r["config"][axis] for r in reports] == list(values)

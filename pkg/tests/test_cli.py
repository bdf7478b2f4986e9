import csv
import json

import pytest

from stepgraph.cli import build_parser, main
from stepgraph.graph import import_graphml
from stepgraph.pipeline import DatasetManifest, ManifestEntry

COMMANDS = ["convert", "stats", "train", "eval", "retrieve", "export-features", "gen-synthetic"]


def step_text(records):
    body = "\n".join(f"#{i}={r};" for i, r in enumerate(records, start=1))
    return ("ISO-10303-21;\nHEADER;\nFILE_DESCRIPTION((''),'2;1');\nFILE_NAME('','',(''),(''),'','','');\n"
            f"FILE_SCHEMA(('TOY'));\nENDSEC;\nDATA;\n{body}\nENDSEC;\nEND-ISO-10303-21;\n")


def chain(n):
    return [f"A(#{i + 2})" for i in range(n - 1)] + ["A()"]


def star(n):
    return ["B(" + ",".join(f"#{i}" for i in range(2, n + 1)) + ")"] + ["C()"] * (n - 1)


def write_manifest(root, files):
    """``files``: list of (class_id, class_name, name, records)."""
    entries = []
    for cid, cname, name, records in files:
        (root / name).write_text(step_text(records))
        entries.append(ManifestEntry(name, cid, cname))
    names = sorted({(c, n) for c, n, _, _ in files})
    DatasetManifest(entries, [n for _, n in names], root=root).save(root / "manifest.json")
    return root / "manifest.json"


@pytest.fixture
def toy_manifest(tmp_path):
    files = [(0, "chain", f"c{n}.stp", chain(n)) for n in range(3, 13)]
    files += [(1, "star", f"s{n}.stp", star(n)) for n in range(3, 13)]
    return write_manifest(tmp_path, files)


@pytest.fixture
def trained(toy_manifest, tmp_path):
    ckpt = tmp_path / "out" / "model.json"
    assert main(["train", "--manifest", str(toy_manifest), "--epochs", "50", "--lr", "0.005",
                 "--out", str(ckpt)]) == 0
    return toy_manifest, ckpt


def test_every_command_has_common_flags():
    parser = build_parser()
    for cmd in COMMANDS:
        with pytest.raises(SystemExit) as exc:
            parser.parse_args([cmd, "--no-such-flag"])
        assert exc.value.code == 2
    args = parser.parse_args(["gen-synthetic", "--out", "x", "--seed", "4", "--workspace", "/w"])
    assert args.seed == 4 and args.workspace == "/w"


class TestConvert:
    def test_code1(self, code1_path, tmp_path, capsys):
        assert main(["convert", "--input", str(code1_path), "--out", str(tmp_path)]) == 0
        g = import_graphml(tmp_path / "code1.graphml")
        assert len(g.nodes) == 11
        log = list(csv.DictReader(open(tmp_path / "convert_log.csv")))
        assert log[0]["status"] == "ok" and log[0]["nodes"] == "11"

    def test_empty_dir(self, tmp_path):
        (tmp_path / "in").mkdir()
        assert main(["convert", "--input", str(tmp_path / "in"), "--out", str(tmp_path / "o")]) == 0
        assert list((tmp_path / "o").glob("*.graphml")) == []

    def test_corrupt_strict(self, tmp_path, code1_path, capsys):
        src = tmp_path / "in"
        src.mkdir()
        (src / "good.stp").write_bytes(code1_path.read_bytes())
        (src / "bad.stp").write_text("ISO-10303-21;\nDATA;\n#1=FOO('oops);\n")
        out = tmp_path / "o"
        assert main(["convert", "--input", str(src), "--out", str(out)]) == 0
        assert main(["convert", "--input", str(src), "--out", str(out), "--strict"]) == 1
        err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert "bad.stp" in err["detail"]["failed"][0]["file"]
        assert (out / "good.graphml").is_file()

    def test_decompose(self, tmp_path):
        from conftest import FIXTURES
        assert main(["convert", "--input", str(FIXTURES / "two_assemblies.stp"), "--out", str(tmp_path),
                     "--decompose"]) == 0
        assert len(list(tmp_path.glob("two_assemblies__*.graphml"))) == 2

    def test_missing_input(self, tmp_path):
        assert main(["convert", "--input", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 1


class TestStats:
    def test_hand_values(self, tmp_path, capsys):
        files = [(0, "uniform", "u1.stp", chain(4)), (0, "uniform", "u2.stp", star(4)),
                 (1, "mixed", "m1.stp", chain(2)), (1, "mixed", "m2.stp", chain(6))]
        m = write_manifest(tmp_path, files)
        assert main(["stats", "--manifest", str(m), "--out", str(tmp_path / "s.csv")]) == 0
        rows = {r["class"]: r for r in csv.DictReader(open(tmp_path / "s.csv"))}
        assert float(rows["uniform"]["variance_nodes"]) == 0.0
        # sizes 2 and 6: mean 4, population variance ((2-4)^2 + (6-4)^2) / 2 = 4
        assert float(rows["mixed"]["mean_nodes"]) == 4.0 and float(rows["mixed"]["variance_nodes"]) == 4.0
        assert rows["TOTAL"]["models"] == "4"
        assert "mixed" in capsys.readouterr().out

    def test_empty_class_is_error(self, tmp_path):
        (tmp_path / "a.stp").write_text(step_text(chain(2)))
        DatasetManifest([ManifestEntry("a.stp", 0)], ["a", "empty"], root=tmp_path).save(tmp_path / "m.json")
        assert main(["stats", "--manifest", str(tmp_path / "m.json")]) == 1


class TestTrainEval:
    def test_converged_toy_train_split(self, trained, capsys):
        manifest, ckpt = trained
        for suffix in (".metrics.csv", ".report.json", ".pr.csv"):
            assert ckpt.with_suffix(suffix).is_file()
        capsys.readouterr()
        assert main(["eval", "--ckpt", str(ckpt), "--manifest", str(manifest), "--split", "train"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["accuracy"] == 1.0
        assert set(out) == {"split", "models", "accuracy", "loss", "macro_precision", "macro_recall", "confusion"}
        assert sum(map(sum, out["confusion"])) == out["models"]

    def test_training_defaults(self):
        args = build_parser().parse_args(["train", "--manifest", "m", "--out", "c"])
        assert (args.lr, args.gamma, args.window, args.epochs, args.bottleneck) == (0.0005, 0.1, 6, 50, 32)

    def test_zero_epochs(self, toy_manifest, tmp_path):
        ckpt = tmp_path / "init.json"
        assert main(["train", "--manifest", str(toy_manifest), "--epochs", "0", "--out", str(ckpt),
                     "--no-retrieval"]) == 0
        assert ckpt.read_text().count('"format"') == 1
        assert json.loads(ckpt.with_suffix(".report.json").read_text())["epochs"] == []

    def test_bad_manifest(self, tmp_path, capsys):
        (tmp_path / "m.json").write_text("[]")
        assert main(["train", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path / "c.json")]) == 1
        assert json.loads(capsys.readouterr().err)["error"] == "ManifestError"

    def test_missing_checkpoint(self, toy_manifest, tmp_path):
        assert main(["eval", "--ckpt", str(tmp_path / "none.json"), "--manifest", str(toy_manifest)]) == 1

    def test_workspace_relative_paths(self, toy_manifest, tmp_path):
        assert main(["train", "--workspace", str(tmp_path), "--manifest", "manifest.json", "--epochs", "1",
                     "--out", "rel/ck.json", "--no-retrieval"]) == 0
        assert (tmp_path / "rel" / "ck.json").is_file()


class TestRetrieve:
    def test_single_cell(self, trained, capsys):
        manifest, ckpt = trained
        capsys.readouterr()
        assert main(["retrieve", "--ckpt", str(ckpt), "--manifest", str(manifest),
                     "--metric", "cosine", "--layer", "softmax"]) == 0
        rows = list(csv.reader(capsys.readouterr().out.splitlines()))
        assert rows[0] == ["metric", "layer", "map"] and len(rows) == 2
        assert 0.0 <= float(rows[1][2]) <= 1.0

    def test_grid(self, trained, capsys):
        manifest, ckpt = trained
        capsys.readouterr()
        assert main(["retrieve", "--ckpt", str(ckpt), "--manifest", str(manifest), "--grid"]) == 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 16

    def test_query_file(self, trained, tmp_path):
        manifest, ckpt = trained
        (tmp_path / "q.stp").write_text(step_text(chain(7)))
        out = tmp_path / "ranked.csv"
        assert main(["retrieve", "--ckpt", str(ckpt), "--manifest", str(manifest), "--query",
                     str(tmp_path / "q.stp"), "--out", str(out)]) == 0
        rows = list(csv.DictReader(open(out)))
        assert rows and [int(r["rank"]) for r in rows] == list(range(1, len(rows) + 1))
        d = [float(r["distance"]) for r in rows]
        assert d == sorted(d)

    def test_invalid_metric(self, trained):
        manifest, ckpt = trained
        with pytest.raises(SystemExit) as exc:
            main(["retrieve", "--ckpt", str(ckpt), "--manifest", str(manifest), "--metric", "manhattan"])
        assert exc.value.code == 2


def test_export_features(trained, tmp_path):
    manifest, ckpt = trained
    out = tmp_path / "f.csv"
    assert main(["export-features", "--ckpt", str(ckpt), "--manifest", str(manifest), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 20
    for r in rows:
        assert abs(sum(float(v) for k, v in r.items() if k.startswith("f")) - 1.0) < 1e-9


def test_gen_synthetic(tmp_path):
    assert main(["gen-synthetic", "--out", str(tmp_path / "c"), "--classes", "bar", "nut", "--count", "3"]) == 0
    doc = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert doc["classes"] == ["bar", "nut"] and len(doc["entries"]) == 6

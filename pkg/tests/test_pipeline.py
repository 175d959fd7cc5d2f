import json
import shutil

import pytest

from cvbench import io
from cvbench.cli import main
from cvbench.core import Partition
from cvbench.datagen import GenConfig, generate_dataset
from cvbench.evaluation import EvaluationRecord
from cvbench.pipeline import (DECLARED_DEVIATIONS, PipelineError, SuiteConfig, load_suite, parse_config)
from cvbench.supervised import procedure2_varied

SMALL = """
name = tiny
k_star = 4, 6
dimensions = 2
distribution = gaussian
imbalance = balanced
compactness = 0.1
noise = 0
datasets = 2
cluster_size = 20, 30
scenarios = 1, 2, 3
indexes = silhouette, dunn, vrc
algorithms = kmeans, ward
kmeans_runs = 4
"""


def test_parse_config_lists_and_scalars():
    cfg = parse_config(SMALL, seed=3)
    assert cfg.k_star == (4, 6) and cfg.datasets == 2 and cfg.seed == 3
    assert cfg.indexes == ("silhouette", "dunn", "vrc")
    assert "kmeans_runs = 4" in cfg.text()


@pytest.mark.parametrize("text, match", [
    ("k_star =\n", "empty dataset grid"),
    ("distribution = uniform\nscenarios = 3\n", "Gaussian"),
    ("noise = 0.1\nscenarios = 3\n", "noise-free"),
    ("colour = red\n", "unknown key"),
    ("just words\n", "expected 'key = value'"),
    ("indexes = silhouette, magic\n", "unknown indexes"),
])
def test_config_validation(text, match):
    with pytest.raises(ValueError, match=match):
        parse_config(text)


def test_unknown_suite():
    with pytest.raises(ValueError, match="unknown suite"):
        load_suite("no-such-suite")


def test_adding_datasets_keeps_existing_streams():
    a = SuiteConfig(k_star=(4, 6, 8), dimensions=(2, 4), datasets=5, seed=11).dataset_configs()
    b = SuiteConfig(k_star=(4, 6, 8), dimensions=(2, 4), datasets=9, seed=11).dataset_configs()
    assert b[:5] == a


def test_io_round_trips(tmp_path):
    ds = generate_dataset(GenConfig(3, 2, cluster_size_range=(10, 12), noise_fraction=0.1, seed=1), "d")
    io.write_dataset(ds, tmp_path / "d.csv")
    back = io.read_dataset(tmp_path / "d.csv")
    assert back.points.tobytes() == ds.points.tobytes() and back.truth.labels.tolist() == ds.truth.labels.tolist()
    parts = [Partition.from_labels([0, 0, 1, 1], "x", algorithm="kmeans", target_k=2)]
    io.write_partitions(parts, tmp_path / "p.json")
    got = io.read_partitions(tmp_path / "p.json")[0]
    assert got.labels.tolist() == [0, 0, 1, 1] and got.extra == {"algorithm": "kmeans", "target_k": 2}
    rec = EvaluationRecord("d", 1, "kmeans", "silhouette", True, 0.5, None, -0.25, 0.75, 10, ds.meta.as_dict())
    io.write_records([rec], tmp_path / "r.csv")
    assert io.read_records(tmp_path / "r.csv") == [rec]
    g = generate_dataset(GenConfig(4, 3, cluster_size_range=(20, 20), seed=2), "g")
    sets = {"p2_varied": procedure2_varied(g, min_partitions=3)}
    io.write_ranked_sets(sets, tmp_path / "s.json")
    back_sets = io.read_ranked_sets(tmp_path / "s.json")
    assert back_sets["p2_varied"].reference_ranks.tolist() == sets["p2_varied"].reference_ranks.tolist()


def test_read_dataset_rejects_bad_files(tmp_path):
    (tmp_path / "a.csv").write_text("x0,y\n1,0\n")
    with pytest.raises(ValueError, match="label"):
        io.read_dataset(tmp_path / "a.csv")
    (tmp_path / "b.csv").write_text("x0,label\n1,-3\n")
    with pytest.raises(ValueError):
        io.read_dataset(tmp_path / "b.csv")
    with pytest.raises(io.ArtifactMissing):
        io.read_dataset(tmp_path / "missing.csv")


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = out / "tiny.cfg"
    cfg.write_text(SMALL)
    assert main(["run", "--config", str(cfg), "--seed", "5", "--out", str(out / "a")]) == 0
    return out


def test_run_outputs(tiny_run):
    a = tiny_run / "a"
    for rel in ("manifest.json", "suite.cfg", "data/manifest.json", "eval/s1/records.csv", "eval/s1/summary.csv",
                "eval/s2/rejects.csv", "eval/s3/external_records.csv", "stats/stats.csv"):
        assert (a / rel).exists(), rel
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["declared_deviations"] == list(DECLARED_DEVIATIONS)
    assert manifest["seed"] == 5 and len(manifest["dataset_seeds"]) == 2
    assert manifest["stages"] == ["generate", "cluster", "scenario3-gen", "eval", "stats"]
    rows = io.read_rows(a / "eval/s1/summary.csv")
    assert rows[0]["group"] == "all" and rows[0]["mean_rho_all"].endswith(")")


def test_run_is_deterministic(tiny_run):
    cfg = tiny_run / "tiny.cfg"
    assert main(["run", "--config", str(cfg), "--seed", "5", "--out", str(tiny_run / "b"), "--jobs", "2"]) == 0
    for rel in ("eval/s1/records.csv", "eval/s1/summary.csv", "eval/s2/records.csv", "eval/s3/records.csv",
                "stats/stats.csv", "manifest.json"):
        assert (tiny_run / "a" / rel).read_bytes() == (tiny_run / "b" / rel).read_bytes(), rel


def test_missing_intermediate_fails_loudly(tiny_run, capsys):
    work = tiny_run / "c"
    shutil.copytree(tiny_run / "a", work)
    shutil.rmtree(work / "partitions" / "s1")
    code = main(["eval", "--config", str(tiny_run / "tiny.cfg"), "--scenario", "1", "--out", str(work)])
    assert code == 2
    assert "missing scenario 1 partitions" in capsys.readouterr().err
    assert not (work / "partitions" / "s1").exists()


def test_stage_commands(tiny_run, tmp_path, capsys):
    data = tiny_run / "a" / "data" / "ds0000.csv"
    parts = tmp_path / "parts.json"
    assert main(["cluster", "--data", str(data), "--algos", "kmeans,single", "--kmax", "6", "--out", str(parts)]) == 0
    assert len(io.read_partitions(parts)) == 10
    assert main(["index", "--data", str(data), "--partitions", str(parts), "--indexes", "silhouette,dbcv",
                 "--out", str(tmp_path / "idx.csv")]) == 0
    assert len(io.read_rows(tmp_path / "idx.csv")) == 20
    assert main(["external", "--data", str(data), "--partitions", str(parts), "--out", str(tmp_path / "ext.csv")]) == 0
    ext = io.read_rows(tmp_path / "ext.csv")
    assert "one_minus_nid" in ext[0] and len(ext) == 10
    code = main(["scenario3-gen", "--data", str(data), "--variant", "p1", "--out", str(tmp_path / "s3.json")])
    assert code == 3 and "skipped" in capsys.readouterr().err
    assert main(["scenario3-gen", "--data", str(data), "--variant", "p2", "--out", str(tmp_path / "s3.json")]) == 0
    assert main(["stats", "--records", str(tiny_run / "a" / "eval/s1/records.csv"),
                 "--out", str(tmp_path / "st.csv")]) == 0
    assert io.read_rows(tmp_path / "st.csv")


def test_import_size_mismatch(tiny_run, tmp_path, capsys):
    data = tiny_run / "a" / "data" / "ds0000.csv"
    bad = tmp_path / "bad.json"
    io.write_partitions([Partition.from_labels([0, 1, 1])], bad)
    code = main(["cluster", "--data", str(data), "--algos", "ward", "--kmax", "4", "--import", str(bad),
                 "--out", str(tmp_path / "x.json")])
    assert code == 2 and "dataset size" in capsys.readouterr().err


def test_invalid_suite_writes_nothing(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("k_star =\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 2
    assert "empty dataset grid" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()


def test_stage_failure_names_stage_and_dataset():
    from cvbench.pipeline import _generate_one

    cfg = SuiteConfig(k_star=(30,), dimensions=(2,), distribution=("logistic",), compactness=(0.8,),
                      cluster_size=(20, 30), datasets=1, scenarios=(1,)).dataset_configs()[0]
    cfg["overlap_max"] = 0.0  # unattainable for 30 loose clusters in 2-D
    with pytest.raises(PipelineError, match="stage generate failed on dataset ds0000"):
        _generate_one((cfg, "ds0000"))


def test_desk_small_twice_identical_summary(tmp_path):
    for name in ("x", "y"):
        assert main(["run", "--suite", "desk-small", "--seed", "7", "--out", str(tmp_path / name)]) == 0
    for s in (1, 2, 3):
        rel = f"eval/s{s}/summary.csv"
        assert (tmp_path / "x" / rel).read_bytes() == (tmp_path / "y" / rel).read_bytes()

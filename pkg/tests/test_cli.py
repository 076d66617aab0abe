import json
import os

import numpy as np
import pytest
from sklearn.base import clone

from mqapviz import MQAPViz
from mqapviz.cli import main
from mqapviz.instances import missing_vertices
from mqapviz.io import Dataset, LabelSet, read_layout, write_labels, write_vectors
from mqapviz.merge import KINDS, quantized_injective
from mqapviz.pipeline import PipelineConfig

FAST = ["--k", "10", "--gens", "3", "--pop", "8", "--seed", "7", "--workers", "1"]
OUTPUTS = [f"layout_{k}.{e}" for k in KINDS for e in ("tsv", "svg")]


@pytest.fixture(scope="module")
def inputs(tmp_path_factory, blobs_small):
    X, y = blobs_small
    d = tmp_path_factory.mktemp("inputs")
    write_vectors(Dataset(X), d / "x.tsv", "tsv")
    write_vectors(Dataset(X), d / "x.f32", "raw-f32")
    write_labels(LabelSet(np.arange(len(y)), y), d / "y.tsv")
    return d


@pytest.fixture(scope="module")
def baseline(inputs, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["run", "--input", str(inputs / "x.tsv"), "--labels", str(inputs / "y.tsv"),
                 "--out", str(out)] + FAST) == 0
    return out


def _same_tsv(a, b):
    for k in KINDS:
        assert (a / f"layout_{k}.tsv").read_bytes() == (b / f"layout_{k}.tsv").read_bytes()


def test_run_writes_outputs_and_manifest(baseline, capsys):
    assert sorted(OUTPUTS + ["manifest.json"]) == sorted(os.listdir(baseline))
    man = json.loads((baseline / "manifest.json").read_text())
    assert man["format"] == "mqapviz-manifest/1"
    assert man["counts"]["vertices"] == 300 and man["counts"]["failed_instances"] == []
    assert man["counts"]["seeds"] == 90
    assert set(man["conflicts"]) == set(KINDS)
    assert {"knng", "layout", "mqap", "emit"} <= set(man["timings"])
    for k in KINDS:
        layout = read_layout(baseline / f"layout_{k}.tsv")
        assert layout.ids.tolist() == list(range(300))
        assert quantized_injective(layout)


def test_run_reports_conflicts(inputs, tmp_path, capsys):
    main(["run", "--input", str(inputs / "x.f32"), "--format", "raw-f32",
          "--out", str(tmp_path)] + FAST)
    assert "conflicts: top=" in capsys.readouterr().err


def test_rerun_byte_identical(inputs, baseline, tmp_path):
    assert main(["run", "--input", str(inputs / "x.tsv"), "--labels", str(inputs / "y.tsv"),
                 "--out", str(tmp_path)] + FAST) == 0
    _same_tsv(baseline, tmp_path)
    for k in KINDS:
        assert (baseline / f"layout_{k}.svg").read_bytes() == \
            (tmp_path / f"layout_{k}.svg").read_bytes()


def test_raw_input_matches_tsv_input(inputs, baseline, tmp_path):
    main(["run", "--input", str(inputs / "x.f32"), "--format", "raw-f32",
          "--out", str(tmp_path)] + FAST)
    _same_tsv(baseline, tmp_path)


def test_staged_knng_then_viz(inputs, baseline, tmp_path):
    g = tmp_path / "graph.tsv"
    assert main(["knng", "--input", str(inputs / "x.tsv"), "--out", str(g)] + FAST[:2]
                + ["--seed", "7"]) == 0
    out = tmp_path / "viz"
    assert main(["viz", "--graph-in", str(g), "--out", str(out)] + FAST) == 0
    _same_tsv(baseline, out)


def test_staged_layout_then_viz(inputs, baseline, tmp_path):
    lay = tmp_path / "l0.tsv"
    assert main(["layout", "--input", str(inputs / "x.tsv"), "--out", str(lay),
                 "--k", "10", "--seed", "7"]) == 0
    out = tmp_path / "viz"
    assert main(["viz", "--input", str(inputs / "x.tsv"), "--layout-in", str(lay),
                 "--out", str(out)] + FAST) == 0
    _same_tsv(baseline, out)


def test_manifest_reruns_exactly(baseline, tmp_path):
    out = tmp_path / "again"
    assert main(["run", "--config", str(baseline / "manifest.json"), "--out", str(out)]) == 0
    _same_tsv(baseline, out)
    a = json.loads((baseline / "manifest.json").read_text())["config"]
    b = json.loads((out / "manifest.json").read_text())["config"]
    assert {k: v for k, v in a.items() if k != "out_dir"} == \
        {k: v for k, v in b.items() if k != "out_dir"}


def test_config_round_trip():
    cfg = PipelineConfig(k=12, eval_fractions=(0.1, 0.3), seed=5)
    assert PipelineConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_missing_input_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--out", str(tmp_path)])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["knng", "--out", str(tmp_path / "g.tsv")])
    assert exc.value.code == 2


def test_bad_input_names_stage(tmp_path, capsys):
    bad = tmp_path / "bad.tsv"
    bad.write_text("1\t2\n3\tx\n")
    assert main(["run", "--input", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "stage 'load' failed" in capsys.readouterr().err


def test_stale_graph_rejected(inputs, tmp_path, capsys):
    g = tmp_path / "graph.tsv"
    main(["knng", "--input", str(inputs / "x.tsv"), "--out", str(g), "--k", "5"])
    text = g.read_text().splitlines()
    text[0] = text[0].replace("/1", "/0")
    g.write_text("\n".join(text) + "\n")
    assert main(["viz", "--graph-in", str(g), "--out", str(tmp_path / "o")] + FAST) == 1
    assert "stage 'knng' failed" in capsys.readouterr().err


def test_stale_manifest_rejected(baseline, tmp_path, capsys):
    m = json.loads((baseline / "manifest.json").read_text())
    m["format"] = "mqapviz-manifest/0"
    p = tmp_path / "m.json"
    p.write_text(json.dumps(m))
    assert main(["run", "--config", str(p), "--out", str(tmp_path / "o")]) == 1
    assert "manifest format" in capsys.readouterr().err


def test_invalid_parameter_exit_1(inputs, tmp_path, capsys):
    assert main(["run", "--input", str(inputs / "x.tsv"), "--out", str(tmp_path),
                 "--p-s", "1.5"]) == 1
    assert "p_s" in capsys.readouterr().err


def test_eval_subcommand(inputs, baseline, tmp_path, capsys):
    rep = tmp_path / "rep.tsv"
    assert main(["eval", "--layout", str(baseline / "layout_median.tsv"),
                 "--labels", str(inputs / "y.tsv"), "--k", "10", "--fractions", "0.1,0.3",
                 "--repeats", "3", "--out", str(rep)]) == 0
    lines = rep.read_text().splitlines()
    assert lines[0] == "fraction\tmean\tci_half\trepeats\tk" and len(lines) == 3
    assert main(["eval", "--layout", str(baseline / "layout_median.tsv"),
                 "--labels", str(inputs / "y.tsv"), "--k", "10", "--fractions", "0.1",
                 "--repeats", "2"]) == 0
    assert capsys.readouterr().out.startswith("fraction\t")


def test_bad_fractions_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--layout", "a", "--labels", "b", "--fractions", "0.5,2"])
    assert exc.value.code == 2


def test_run_with_eval(inputs, tmp_path):
    assert main(["run", "--input", str(inputs / "x.tsv"), "--labels", str(inputs / "y.tsv"),
                 "--out", str(tmp_path), "--eval", "--eval-k", "10", "--eval-fractions", "0.3",
                 "--eval-repeats", "3"] + FAST) == 0
    from mqapviz._seeding import derive_seed
    from mqapviz.evaluation import accuracy_curve
    from mqapviz.io import load_labels

    expect = accuracy_curve(read_layout(tmp_path / "layout_median.tsv"),
                            load_labels(inputs / "y.tsv"), (0.3,), 10, 3, derive_seed(7, "eval"))
    assert (tmp_path / "eval_median.tsv").read_text() == expect.to_tsv()
    assert "eval" in json.loads((tmp_path / "manifest.json").read_text())


def test_workers_env_fallback(monkeypatch):
    monkeypatch.setenv("MQAPVIZ_WORKERS", "3")
    assert PipelineConfig().resolved_workers() == 3
    assert PipelineConfig(workers=1).resolved_workers() == 1
    monkeypatch.delenv("MQAPVIZ_WORKERS")
    assert PipelineConfig().resolved_workers() == 1


ESTIMATOR_FAST = dict(n_neighbors=10, population_size=8, generations=3, n_jobs=1,
                      random_state=7)


@pytest.fixture(scope="module")
def fitted(blobs_small):
    return MQAPViz(**ESTIMATOR_FAST).fit(blobs_small[0])


def test_estimator_matches_cli(fitted, baseline):
    for k in KINDS:
        cli = read_layout(baseline / f"layout_{k}.tsv").positions
        assert np.allclose(fitted.layouts_[k], cli, rtol=1e-8, atol=0)
    assert fitted.embedding_ is fitted.layouts_["median"]


def test_estimator_attributes(fitted, blobs_small):
    X = blobs_small[0]
    assert fitted.embedding_.shape == (300, 2) and fitted.initial_layout_.shape == (300, 2)
    assert fitted.n_features_in_ == 5 and fitted.graph_.n == 300
    insts = [s.instance for s in fitted.solutions_.values()]
    assert len(missing_vertices(insts, 300)) == 0
    assert fitted.transform(X) is fitted.embedding_
    with pytest.raises(ValueError):
        fitted.transform(X[:10])


def test_estimator_params_clone():
    est = MQAPViz(n_neighbors=12, representative="top")
    assert est.get_params()["n_neighbors"] == 12
    c = clone(est)
    assert c.get_params() == est.get_params()
    with pytest.raises(ValueError):
        MQAPViz(representative="middle").fit(np.zeros((5, 2)))


def test_estimator_init_array(blobs_small, fitted):
    X = blobs_small[0]
    emb = MQAPViz(init=fitted.initial_layout_, **ESTIMATOR_FAST).fit_transform(X)
    assert np.array_equal(emb, fitted.embedding_)
    with pytest.raises(ValueError):
        MQAPViz(init=np.zeros((3, 2)), **ESTIMATOR_FAST).fit(X)

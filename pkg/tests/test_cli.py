import json
import os

import pytest

from relufix import cli, datagen, encoder, network


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """gen-data + train once; downstream commands reuse the artifacts."""
    root = tmp_path_factory.mktemp("cli")
    data_dir = str(root / "data")
    model = str(root / "model.json")
    cli.main(["gen-data", "--spec", "xor-a", "--seed", "7",
              "--n-train", "400", "--n-test", "200", "--out", data_dir])
    cli.main(["train", "--data", data_dir, "--topology", "2,4,2",
              "--optimizer", "sgd", "--lr", "0.1", "--epochs", "10",
              "--seed", "0", "--sampled", "100", "--out", model])
    props = str(root / "props.json")
    net = network.load(model)
    prop = encoder.RobustnessProperty("cli-p1", (50.0, -15.0), 5.0, "l1", 0)
    if encoder.verify_property(net, prop).holds is not False:
        prop = encoder.RobustnessProperty("cli-p1", (50.0, -15.0), 5.0, "l1", 1)
    encoder.save_properties([prop], props)
    return {"root": root, "data": data_dir, "model": model, "props": props}


def test_gen_data_wrote_splits(workspace):
    ds = datagen.load_dataset(workspace["data"])
    assert len(ds.train) == 400 and len(ds.test) == 200
    assert len(ds.sampled) == 100  # written back by train --sampled


def test_train_wrote_model(workspace):
    net = network.load(workspace["model"])
    assert net.topology == (2, 4, 2)


def test_verify_exits_nonzero_on_violation(workspace):
    with pytest.raises(SystemExit) as exc:
        cli.main(["verify", "--model", workspace["model"], "--props", workspace["props"]])
    assert exc.value.code == 1


def test_eval_runs(workspace, capsys):
    cli.main(["eval", "--model", workspace["model"], "--data", workspace["data"]])
    out = capsys.readouterr().out
    assert "weighted:" in out


def test_repair_cli_end_to_end(workspace, capsys):
    run_dir = str(workspace["root"] / "run")
    cli.main([
        "repair", "--model", workspace["model"], "--data", workspace["data"],
        "--props", workspace["props"], "--heuristic", "samples",
        "--samples", "80", "--thresholds", "1", "--max-size", "1",
        "--layers", "2", "--trial-timeout", "60", "--seed", "0",
        "--out", run_dir,
    ])
    out = capsys.readouterr().out
    assert "best repair" in out
    assert os.path.exists(os.path.join(run_dir, "trials.csv"))
    assert os.path.exists(os.path.join(run_dir, "aggregate_by_threshold.csv"))
    assert os.path.exists(os.path.join(run_dir, "best_model.json"))
    repaired = network.load(os.path.join(run_dir, "best_model.json"))
    props = encoder.load_properties(workspace["props"])
    assert encoder.verify_property(repaired, props[0]).holds is True


def test_plot_writes_svg_and_png(workspace):
    svg = str(workspace["root"] / "plot.svg")
    png = str(workspace["root"] / "plot.png")
    cli.main(["plot", "--model", workspace["model"], "--data", workspace["data"],
              "--props", workspace["props"], "--resolution", "32",
              "--out", svg, "--png", png])
    text = open(svg).read()
    assert text.startswith("<svg")
    assert os.path.getsize(png) > 1000


def test_report_writes_tables_and_figure(workspace):
    run_dir = str(workspace["root"] / "run")
    report_dir = str(workspace["root"] / "report")
    cli.main(["report", "--model", workspace["model"], "--data", workspace["data"],
              "--props", workspace["props"], "--run", run_dir, "--out", report_dir])
    assert os.path.exists(os.path.join(report_dir, "aggregate_by_threshold.csv"))
    assert os.path.exists(os.path.join(report_dir, "aggregate_by_size.csv"))
    assert os.path.exists(os.path.join(report_dir, "boundaries_before_after.png"))
    text = open(os.path.join(report_dir, "aggregate_by_threshold.csv")).read()
    assert text.splitlines()[0].startswith("group,")


def test_compare_merges_summaries(workspace):
    root = workspace["root"]
    for name, payload in [
        ("run_ours", {"property": "cli-p1", "ours": 0.98}),
        ("run_naive", {"property": "cli-p1", "naive": 0.95}),
    ]:
        os.makedirs(root / name, exist_ok=True)
        with open(root / name / "summary.json", "w") as fh:
            json.dump(payload, fh)
    out = str(root / "compare.csv")
    cli.main(["compare", "--runs", str(root / "run_ours"), str(root / "run_naive"),
              "--out", out])
    lines = open(out).read().splitlines()
    assert lines[0] == "property,our_method,naive_method"
    # one merged row per property, both methods filled in
    assert lines[1] == "cli-p1,0.98,0.95"
    assert len(lines) == 2


@pytest.mark.parametrize("heuristic,extra", [
    ("grid", ["--grid-cells", "5"]),
    ("voronoi", ["--voronoi-cells", "20"]),
])
def test_repair_cli_other_heuristics(workspace, heuristic, extra):
    run_dir = str(workspace["root"] / f"run_{heuristic}")
    cli.main([
        "repair", "--model", workspace["model"], "--data", workspace["data"],
        "--props", workspace["props"], "--heuristic", heuristic, *extra,
        "--thresholds", "1", "--max-size", "1", "--layers", "2",
        "--kinds", "bias", "--trial-timeout", "60", "--seed", "0",
        "--out", run_dir,
    ])
    assert os.path.exists(os.path.join(run_dir, "trials.csv"))


def test_baseline_cli(workspace):
    out_dir = str(workspace["root"] / "baseline")
    with pytest.raises(SystemExit) as exc:
        cli.main([
            "baseline", "--model", workspace["model"], "--data", workspace["data"],
            "--props", workspace["props"], "--max-iters", "10",
            "--optimizer", "adam", "--lr", "0.01", "--epochs", "30",
            "--seed", "3", "--out", out_dir,
        ])
    assert exc.value.code in (0, 2)
    assert os.path.exists(os.path.join(out_dir, "baseline_model.json"))
    assert os.path.exists(os.path.join(out_dir, "baseline_log.json"))


def test_repair_and_baseline_write_summaries(workspace):
    # artifacts left behind by the repair and baseline tests above
    run_summary = json.load(open(workspace["root"] / "run" / "summary.json"))
    base_summary = json.load(open(workspace["root"] / "baseline" / "summary.json"))
    assert set(run_summary) == {"property", "ours"}
    assert set(base_summary) == {"property", "naive"}
    assert run_summary["property"] == base_summary["property"] == "cli-p1"

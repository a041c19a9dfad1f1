import csv
import json

import pytest

from trigame.cli import load_recipes, main, recipe_argv
from trigame.dynamics import read_trajectory_csv
from trigame.sweep import read_sweep_csv


def run_cli(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_missing_game_is_usage_error(capsys):
    code, _, err = run_cli(["simulate"], capsys)
    assert code == 2 and "usage" in err


def test_malformed_triad_is_usage_error(capsys):
    code, _, err = run_cli(["spectrum", "--beta", "2"], capsys)
    assert code == 2 and "triad" in err


def test_negative_eta_is_usage_error(capsys, tmp_path):
    assert run_cli(["spectrum", "--eta", "-1"], capsys)[0] == 2
    assert run_cli(["simulate", "--game", "trilinear", "--eta", "0", "--out-dir", tmp_path], capsys)[0] == 2


def test_simulate_writes_outputs(capsys, tmp_path):
    code, out, _ = run_cli(["simulate", "--game", "trilinear", "--order", "alternating", "--eta", "2e-2",
                            "--beta", "-0.9,-0.9,-0.9", "--iters", "2000", "--stride", "50",
                            "--out-dir", tmp_path], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["terminal"] == "completed"
    rows = read_trajectory_csv(tmp_path / "trajectory.csv", (1, 1, 1))
    assert rows[0][0] == 0 and rows[-1][0] == 2000
    assert (tmp_path / "trajectory.svg").read_text().startswith("<svg")


def test_simulate_from_origin_is_constant(capsys, tmp_path):
    code, out, _ = run_cli(["simulate", "--game", "dual_bilinear", "--start", "0,0,0", "--iters", "100",
                            "--out-dir", tmp_path], capsys)
    assert code == 0 and json.loads(out)["distance_to_nash"] == 0.0
    rows = read_trajectory_csv(tmp_path / "trajectory.csv", (1, 1, 1))
    assert all(s.as_vector().tolist() == [0.0, 0.0, 0.0] for _, s in rows)


def test_simulate_divergence_exits_zero(capsys, tmp_path):
    code, out, _ = run_cli(["simulate", "--game", "trilinear", "--order", "simultaneous", "--eta", "5",
                            "--iters", "1000", "--out-dir", tmp_path], capsys)
    assert code == 0 and json.loads(out)["terminal"] == "diverged"


def test_spectrum_zero_step(capsys):
    code, out, _ = run_cli(["spectrum", "--eta", "0", "--beta", "0,0,0"], capsys)
    assert code == 0 and json.loads(out)["spectral_radius"] == 1.0


def test_spectrum_scan(capsys, tmp_path):
    path = tmp_path / "scan.csv"
    code, _, _ = run_cli(["spectrum", "--scan", path, "--eta-range", "0.01,0.1,3",
                          "--beta-range", "-1,0,2"], capsys)
    assert code == 0
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 6 and all(float(r["spectral_radius"]) >= 1 - 1e-9 for r in rows)


@pytest.mark.parametrize("flags,expected", [(["--grid", "2"], 24),
                                            (["--schedules", "maximizer_first", "--grid", "5"], 125)])
def test_sweep_row_counts(capsys, tmp_path, flags, expected):
    code, _, _ = run_cli(["sweep", *flags, "--iters", "50", "--out-dir", tmp_path], capsys)
    assert code == 0
    assert len(read_sweep_csv(tmp_path / "sweep.csv")) == expected
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert sum(s["total"] for s in summary["summary"].values()) == expected
    assert sorted(p.name for p in tmp_path.glob("sweep_*.svg"))


def test_sweep_manifest(capsys, tmp_path):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"grid": 3, "schedules": ["simultaneous"], "iters": 10}))
    code, out, _ = run_cli(["sweep", "--manifest", manifest, "--out-dir", tmp_path, "--no-plots"], capsys)
    assert code == 0 and json.loads(out)["n_cells"] == 27


def test_sweep_unwritable_output(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, _ = run_cli(["sweep", "--grid", "2", "--iters", "5", "--out-dir", blocker / "sub"], capsys)
    assert code == 1


def test_gan_untrained(capsys, tmp_path):
    code, out, _ = run_cli(["gan", "--iters", "0", "--out-dir", tmp_path], capsys)
    assert code == 0
    assert json.loads(out)["class_match_rate"] < 0.5
    assert (tmp_path / "checkpoint.json").exists()
    assert (tmp_path / "log.csv").read_text().startswith("iter,l_d,u_c,u_g,class_match_rate\n0,")
    assert (tmp_path / "samples.csv").read_text().startswith("class_requested,x0,x1\n")


def test_gan_seed_from_environment(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("TRIGAME_SEED", "5")
    code, out, _ = run_cli(["gan", "--iters", "3", "--out-dir", tmp_path], capsys)
    assert code == 0 and json.loads(out)["seed"] == 5
    monkeypatch.setenv("TRIGAME_SEED", "five")
    assert run_cli(["gan", "--iters", "3", "--out-dir", tmp_path], capsys)[0] == 2


def test_gan_checkpoints_are_reproducible(capsys, tmp_path):
    for name in ("a", "b"):
        assert run_cli(["gan", "--seed", "7", "--iters", "100", "--out-dir", tmp_path / name], capsys)[0] == 0
    for f in ("checkpoint.json", "log.csv", "samples.csv", "gan.svg"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_recipes_manifest():
    recipes = load_recipes()
    names = [r["name"] for r in recipes]
    for prefix in ("fig3-", "fig4-", "fig5", "fig6-", "fig7", "fig8-"):
        assert any(n.startswith(prefix) for n in names)
    for r in recipes:
        assert {"published", "derived"} <= set(r["settings"])
        assert recipe_argv(r)[0] in ("simulate", "sweep", "gan")


def test_recipes_list_and_show(capsys):
    code, out, _ = run_cli(["recipes", "list"], capsys)
    assert code == 0 and "fig5" in out
    code, out, _ = run_cli(["recipes", "run", "fig5", "--show"], capsys)
    assert code == 0 and json.loads(out)["args"]["eta"] == 0.1
    assert run_cli(["recipes", "run", "nope"], capsys)[0] == 2
    assert run_cli(["recipes", "run"], capsys)[0] == 2


def test_recipe_run(capsys, tmp_path):
    code, out, _ = run_cli(["recipes", "run", "fig3-alternating-beta-neg0.99", "--out-dir", tmp_path], capsys)
    assert code == 0 and json.loads(out)["terminal"] in ("completed", "diverged")
    assert (tmp_path / "fig3-alternating-beta-neg0.99.csv").exists()

import copy
import json
import math

import pytest

from trickle_lab.analysis import p_alpha_series, p_star_alpha
from trickle_lab.cli import main
from trickle_lab.experiment import ConfigError, fmt, load_config, parse_config, run_experiment

STEADY = {
    "experiment": "steady-state",
    "seed": 3,
    "replications": 2,
    "topology": {"kind": "random_geometric", "n": 40, "densities": [5, 8]},
    "policies": [{"type": "fixed", "k": 1}, {"type": "adaptive", "alpha": "2/3", "k_min": 1, "k_max": 30}],
    "sim": {"i_min": 1, "i_max": 1, "duration": 30, "warmup": 10},
}
STAR = {"experiment": "star-analysis", "seed": 1, "alphas": [0.5, "2/3", 0.75, 1]}
RPL = {
    "experiment": "rpl",
    "seed": 2,
    "replications": 2,
    "topology": {"kind": "random_geometric", "n": 30, "densities": [6], "root": 0},
    "policies": [{"type": "fixed", "k": 1}, {"type": "adaptive", "alpha": 0.5}],
    "sim": {"duration": 600},
}


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=2))
    return path


def run_cli(*args):
    return main([str(a) for a in args])


def test_fmt_nine_significant_digits():
    assert fmt(2 / 3) == "0.666666667"
    assert fmt(1.0) == "1"
    assert fmt(3) == "3"
    assert fmt(float("nan")) == ""
    assert fmt(123456789012.0) == "1.23456789e+11"


def test_star_analysis_table(tmp_path):
    out = tmp_path / "out"
    assert run_cli("star", "--config", write(tmp_path, STAR), "--out", out, "--quiet") == 0
    lines = (out / "figp_analysis.csv").read_text().splitlines()
    assert lines[0] == "alpha,p_alpha,p_star_alpha"
    assert len(lines) == 5
    for line, alpha in zip(lines[1:], (0.5, 2 / 3, 0.75, 1.0)):
        a, p, ps = map(float, line.split(","))
        assert a == pytest.approx(alpha, rel=1e-8)
        assert p == pytest.approx(p_alpha_series(alpha), rel=1e-8)
        assert ps == pytest.approx(p_star_alpha(alpha), rel=1e-8)
    assert float(lines[-1].split(",")[1]) == pytest.approx(math.exp(-1), rel=1e-8)


def test_steady_state_outputs_and_manifest(tmp_path):
    out = tmp_path / "out"
    assert run_cli("sim", "--config", write(tmp_path, STEADY), "--out", out, "--quiet") == 0
    names = {"fig1_fixed_k.csv", "fig2_adaptive.csv", "fig3_mean_k.csv", "steady_summary.csv"}
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest["files"]) == names
    assert len(manifest["replications"]) == 2
    import hashlib

    for name, digest in manifest["files"].items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    fixed = (out / "fig1_fixed_k.csv").read_text().splitlines()
    assert fixed[0] == "topology,policy,degree,statistic,value,stderr,nodes,replications"
    assert {row.split(",")[0] for row in fixed[1:]} == {"rgg_n40_deg5", "rgg_n40_deg8"}
    assert all(row.split(",")[1] == "fixed_k1" for row in fixed[1:])
    mean_k = (out / "fig3_mean_k.csv").read_text().splitlines()[1:]
    assert all(row.split(",")[3] == "mean_k" for row in mean_k)
    assert not list(out.glob(".*.tmp"))


def test_rpl_table(tmp_path):
    out = tmp_path / "out"
    assert run_cli("rpl", "--config", write(tmp_path, RPL), "--out", out, "--quiet") == 0
    lines = (out / "rpl_metrics.csv").read_text().splitlines()
    assert lines[0] == "config,replication,formation_time,mean_dio,stretch,fairness"
    assert len(lines) == 1 + 2 * 2
    assert lines[1].startswith("rgg_n30_deg6/fixed_k1,0,")


@pytest.mark.parametrize("doc", [STEADY, STAR, RPL], ids=["steady", "star", "rpl"])
def test_rerun_is_byte_identical(tmp_path, doc, monkeypatch):
    cmd = {"steady-state": "sim", "star-analysis": "star", "rpl": "rpl"}[doc["experiment"]]
    cfg = write(tmp_path, doc)
    assert run_cli(cmd, "--config", cfg, "--out", tmp_path / "a", "--quiet") == 0
    monkeypatch.setenv("TRICKLE_LAB_THREADS", "2")
    assert run_cli(cmd, "--config", cfg, "--out", tmp_path / "b", "--quiet") == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in files:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_flags_override_config(tmp_path):
    cfg = load_config(write(tmp_path, STEADY), {"seed": 9, "replications": 5, "output_dir": "x"})
    assert (cfg.seed, cfg.replications, str(cfg.output_dir)) == (9, 5, "x")


def test_config_not_mutated(tmp_path):
    doc = copy.deepcopy(STEADY)
    parse_config(doc, overrides={"seed": 99})
    assert doc == STEADY


def test_validate_reports_seeds_and_writes_nothing(tmp_path, capsys):
    out = tmp_path / "never"
    assert run_cli("validate", "--config", write(tmp_path, STEADY), "--out", out) == 0
    report = capsys.readouterr().out
    assert "replication 1: topology seed" in report
    assert "estimated events:" in report
    assert not out.exists()


def bad_variant(path, value):
    doc = copy.deepcopy(STEADY)
    target = doc
    for key in path[:-1]:
        target = target[key]
    target[path[-1]] = value
    return doc


@pytest.mark.parametrize(
    "path,value,message",
    [
        (("policies", 1, "alpha"), 1.5, "alpha must lie in [0, 1]"),
        (("policies", 1, "k_max"), 0, "k_max must be an integer >= k_min"),
        (("replications",), 0, "replications must be >= 1"),
        (("experiment",), "sweep", "experiment must be one of"),
        (("sim", "i_max"), 0.5, "i_max must be >= i_min"),
        (("topology", "densities"), [50], "density 50 must lie"),
    ],
)
def test_invalid_configs_cite_lines(tmp_path, capsys, path, value, message):
    cfg = write(tmp_path, bad_variant(path, value))
    # each offending key occurs once in the document
    (line,) = [i for i, text in enumerate(cfg.read_text().splitlines(), 1) if f'"{path[-1]}":' in text]
    assert run_cli("validate", "--config", cfg) == 2
    err = capsys.readouterr().err
    assert message in err
    assert f"line {line}:" in err


def test_syntax_error_line(tmp_path, capsys):
    cfg = tmp_path / "broken.json"
    cfg.write_text('{\n  "experiment": "rpl",\n  "seed": 1,,\n}\n')
    assert run_cli("validate", "--config", cfg) == 2
    assert "line 3:" in capsys.readouterr().err


def test_subcommand_must_match_kind(tmp_path, capsys):
    assert run_cli("rpl", "--config", write(tmp_path, STAR)) == 2
    assert "runs rpl configs" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert run_cli("validate", "--config", tmp_path / "nope.json") == 2


def test_fraction_strings_and_bad_numbers():
    cfg = parse_config(STAR)
    assert cfg.alphas[1] == pytest.approx(2 / 3)
    with pytest.raises(ConfigError):
        parse_config({**STAR, "alphas": ["two thirds"]})
    with pytest.raises(ConfigError):
        parse_config({**STAR, "alphas": [0]})


def test_cli_rejects_bad_flags():
    with pytest.raises(SystemExit):
        main(["sim", "--config", "x.json", "--seed", "-1"])
    with pytest.raises(SystemExit):
        main(["sim", "--config", "x.json", "--replications", "0"])

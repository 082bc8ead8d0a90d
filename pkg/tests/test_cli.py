import json

from absl import flags
from absl.testing import flagsaver
import pytest

from cli.config import RunConfig, apply_config_file
from cli.run import dispatch
from util import ConfigError, read_json

FLAGS = flags.FLAGS


def outputs(path):
    return {p.name for p in path.iterdir()}


@flagsaver.flagsaver(sites="3,2")
def test_twist_certificate(tmp_path):
    assert dispatch("twist", tmp_path) == 0
    report = read_json(tmp_path / "twist.json")
    assert report["int_cert"] == -1440
    assert report["pass"]
    manifest = read_json(tmp_path / "manifest.json")
    assert manifest["subcommand"] == "twist"
    assert manifest["config"]["sites"] == [3, 2]
    assert manifest["seed"] == FLAGS.seed
    assert "twist.json" in manifest["outputs"]


@flagsaver.flagsaver(sites="9,4")
def test_non_generic_sites_exit_code(tmp_path):
    assert dispatch("sites", tmp_path) == 3
    error = read_json(tmp_path / "error.json")
    assert error["error"] == "GenericityError"
    assert error["exit_code"] == 3
    assert error["certificate"]["order"] == 4
    assert not (tmp_path / "manifest.json").exists()


def test_missing_sites_is_a_config_error(tmp_path):
    assert dispatch("twist", tmp_path) == 2
    error = read_json(tmp_path / "error.json")
    assert error["error"] == "ConfigError"
    assert "--sites" in error["message"]


def test_unknown_subcommand(tmp_path):
    assert dispatch("plot", tmp_path) == 2


@flagsaver.flagsaver(sites="3,2", tol=1e-3)
def test_simulate_tolerance_is_validated(tmp_path):
    assert dispatch("simulate", tmp_path) == 2


@flagsaver.flagsaver(sites="3,2", max_order=4)
def test_resonances_are_deterministic(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert dispatch("resonances", first) == 0
    assert dispatch("resonances", second) == 0
    for name in ("resonances.csv", "resonances.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    a, b = read_json(first / "manifest.json"), read_json(second / "manifest.json")
    a.pop("wall_time_s")
    b.pop("wall_time_s")
    assert a == b
    header = (first / "resonances.csv").read_bytes().split(b"\r\n")[0]
    assert header == b"order,j,sigma,class"


@flagsaver.flagsaver(mode="full", cutoff=4)
def test_full_bnf_report(tmp_path):
    assert dispatch("bnf", tmp_path) == 0
    report = read_json(tmp_path / "bnf_report.json")
    assert report["mode"] == "full"
    assert report["degenerate"]
    assert {"bnf_report.json", "offending.csv", "manifest.json"} <= outputs(tmp_path)


@flagsaver.flagsaver(mode="weak", sites="3,2", approx_constant=True)
def test_approx_constant_needs_full_mode(tmp_path):
    assert dispatch("bnf", tmp_path) == 2


@flagsaver.flagsaver(sites="3,2", eps=0.05, bnf_check=False)
def test_spectrum(tmp_path):
    assert dispatch("spectrum", tmp_path) == 0
    report = read_json(tmp_path / "spectrum.json")
    assert report["amp_freq_roundtrip_error"] < 1e-10
    assert "eigenvalues.csv" in outputs(tmp_path)


@flagsaver.flagsaver(sites="3,2", p=1, j_max=50, l_max=2, eps=0.1)
def test_divisors(tmp_path):
    assert dispatch("divisors", tmp_path) == 0
    report = read_json(tmp_path / "divisors.json")
    assert report["min"] > 0
    assert report["highprec_gap"] < 1e-12
    assert "melnikov" in report


@flagsaver.flagsaver(
    sites="16,9",
    spec="g1",
    samples=10_000,
    l_max=4,
    eps_list=["0.01", "0.005"],
    tau=3.5,
    gamma_scale=5e4,
    seed=7,
)
def test_measure(tmp_path):
    assert dispatch("measure", tmp_path) == 0
    lines = (tmp_path / "measure.csv").read_bytes().split(b"\r\n")
    assert lines[0] == b"eps,spec,fraction,ci_lo,ci_hi,slope"
    assert len([line for line in lines if line]) == 3
    assert read_json(tmp_path / "measure.json")["spec"] == "g1"


@flagsaver.flagsaver(
    sites="3,2", cutoff=4, t_final=5.0, frames=11, eps=0.05, output_format="binary"
)
def test_simulate_binary_output(tmp_path):
    assert dispatch("simulate", tmp_path) == 0
    assert "trajectory.bin" in outputs(tmp_path)
    report = read_json(tmp_path / "simulate.json")
    assert report["conservation"]["max_action_drift"] < 1e-7
    assert set(report["frequencies"]) == {"3", "2"}


@flagsaver.flagsaver(
    sites="3,2", cutoff=6, t_final=5.0, frames=11, flow="full", eps_list=["0.02", "0.01"]
)
def test_simulate_full_flow_with_residual(tmp_path):
    assert dispatch("simulate", tmp_path) == 0
    report = read_json(tmp_path / "simulate.json")
    assert report["conservation"]["energy_drift"] < 1e-8
    assert report["residual"]["slope"] == pytest.approx(2.0, abs=0.2)
    assert {"trajectory.csv", "residual.csv"} <= outputs(tmp_path)


@flagsaver.flagsaver(sites="3,2", j_max=5, l_max=1, eps_list=["0.02", "0.04"])
def test_floquet(tmp_path):
    assert dispatch("floquet", tmp_path) == 0
    report = read_json(tmp_path / "floquet.json")
    assert report["cutoff"] == 11
    assert len(report["spectra"]) == 2
    assert "floquet_eigenvalues_0.csv" in outputs(tmp_path)


@flagsaver.flagsaver()
def test_config_file_fills_unset_flags(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(
        json.dumps({"common": {"sites": "3,2", "eps": 0.03}, "simulate": {"t_final": 7.5}})
    )
    FLAGS["eps"].parse("0.02")
    applied = apply_config_file(str(path), "simulate")
    assert applied == {"sites": "3,2", "t_final": 7.5}
    cfg = RunConfig.from_flags("simulate").validate()
    assert cfg.eps == 0.02
    assert cfg.sites == [3, 2]
    assert cfg.params["t_final"] == 7.5
    assert cfg.cutoff == 8


@pytest.mark.parametrize(
    "tree", [{"common": {"no_such_flag": 1}}, {"plots": {}}, {"common": {"steps": "x"}}]
)
@flagsaver.flagsaver()
def test_bad_config_file(tmp_path, tree):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(tree))
    with pytest.raises(ConfigError):
        apply_config_file(str(path), "bnf")


@flagsaver.flagsaver(sites="3,2", zeta=["1", "2", "3"])
def test_zeta_must_match_sites():
    with pytest.raises(ConfigError):
        RunConfig.from_flags("twist").validate()

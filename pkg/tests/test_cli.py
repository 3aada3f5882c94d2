import json
import warnings

import numpy as np
import pytest
import yaml

from spinnoise import __version__, cli
from spinnoise.evolution import DetectionOperator
from spinnoise.params import DeviceParams

SMALL = {
    "sampling": {"n_overhauser": 6, "n_wandering": 3},
    "grids": {"omega_points": 9, "n_tau": 60, "thetas": 4, "powers": [1, 2, 4]},
    "oracle": {"n_overhauser": 4, "n_wandering": 1, "duration_ns": 2e5, "min_clicks": 10,
               "points": ["defaults", "g0"], "tau_edges": [0, 1, 5, 20, 100]},
}


def _write(tmp_path, raw, name="run.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(raw))
    return p


def _cfg(**over):
    raw = json.loads(json.dumps(SMALL))
    raw.update(over)
    return cli.config_from_dict(raw)


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    cfg = cli.load_config(p)
    assert cfg.device == DeviceParams()
    assert cfg.drive.power_pw == 4.0 and cfg.sampling.n_overhauser == 500
    assert cfg.experiment == "correlator" and cfg.seed == 0


def test_invalid_device_field(tmp_path):
    with pytest.raises(cli.ConfigError) as err:
        cli.load_config(_write(tmp_path, {"device": {"kappa_h": -1}}))
    assert err.value.field == "device.kappa_h"
    assert "kappa_h" in str(err.value)


def test_power_only_override(tmp_path):
    cfg = cli.load_config(_write(tmp_path, {"drive": {"power_pw": 8}}))
    ref = cli.config_from_dict({})
    assert cfg.drive.power_pw == 8.0
    cfg.drive.power_pw = 4.0
    assert cfg.canonical() == ref.canonical()


def test_unknown_keys_are_listed(tmp_path):
    with pytest.raises(cli.ConfigError, match="unknown keys: foo, drive.pwr"):
        cli.load_config(_write(tmp_path, {"foo": 1, "drive": {"pwr": 3}}))


@pytest.mark.parametrize("raw,fld", [
    ({"experiment": "nope"}, "experiment"),
    ({"sampling": {"n_overhauser": 0}}, "sampling.n_overhauser"),
    ({"drive": {"power_pw": -1}}, "drive.power_pw"),
    ({"basis": {"theta0_deg": "best"}}, "basis.theta0_deg"),
    ({"output": {"format": "xml"}}, "output.format"),
])
def test_validation_names_field(raw, fld):
    with pytest.raises(cli.ConfigError) as err:
        cli.config_from_dict(raw)
    assert err.value.field == fld


def test_missing_and_unparsable_files(tmp_path):
    with pytest.raises(cli.ConfigError):
        cli.load_config(tmp_path / "none.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    with pytest.raises(cli.ConfigError):
        cli.load_config(bad)


def test_config_hash_ignores_output_location():
    a, b = _cfg(), _cfg(output={"dir": "elsewhere"}, threads=3)
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != _cfg(seed=1).config_hash()


def _csv_header(path):
    lines = path.read_text().splitlines()
    head = [x for x in lines if x.startswith("#")]
    return head, lines[len(head)]


@pytest.mark.parametrize("experiment,files,columns", [
    ("loci", ["loci.csv"], "omega_uev,spin,s_hv,s_da,s_rl"),
    ("tomography", ["tomography.csv"], None),
    ("correlator", ["correlator.csv"], "tau_ns,c,g2"),
    ("theta_sweep", ["theta_sweep.csv", "theta_c0.csv"], None),
    ("power_sweep", ["power_sweep.csv", "power_c0.csv"], None),
    ("spectrum", ["spectrum.csv", "gamma_vs_power.csv"], None),
])
def test_every_experiment_writes_artifacts(tmp_path, experiment, files, columns):
    cfg = _cfg(experiment=experiment, seed=3)
    res = cli.run(cfg, tmp_path)
    assert res.status == 0, res.error
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["experiment"] == experiment and summary["status"] == "ok"
    assert summary["config_sha256"] == cfg.config_hash() and summary["seed"] == 3
    assert summary["version"] == __version__
    for f in files:
        assert f in summary["artifacts"]
        head, cols = _csv_header(tmp_path / f)
        assert head[0] == f"# spinnoise {__version__}"
        assert f"# config_sha256: {cfg.config_hash()}" in head and "# seed: 3" in head
        if columns and f == files[0]:
            assert cols == columns


def test_summary_scalars(tmp_path):
    r = cli.run(_cfg(experiment="correlator"), tmp_path / "c").summary["results"]
    assert {"c0_spin", "c_inf", "tau_corr_ns", "theta0_deg"} <= set(r)
    r = cli.run(_cfg(experiment="loci"), tmp_path / "l").summary["results"]
    assert r["theta0_deg"] == pytest.approx(23, abs=3)
    r = cli.run(_cfg(experiment="spectrum"), tmp_path / "s").summary["results"]
    assert r["gamma_eff_per_s"] > 0 and "fit_residual" in r and "power_law" in r


def test_json_format(tmp_path):
    res = cli.run(_cfg(experiment="correlator", output={"format": "json"}), tmp_path)
    data = json.loads((tmp_path / "correlator.json").read_text())
    assert data["config_sha256"] == res.summary["config_sha256"]
    assert len(data["rows"]) == 60 and data["columns"] == ["tau_ns", "c", "g2"]


def test_byte_identical_reruns(tmp_path):
    cfg = _cfg(experiment="theta_sweep", seed=5)
    cli.run(cfg, tmp_path / "a")
    cli.run(cfg, tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


@pytest.mark.parametrize("artifact", ["correlator.csv", "summary.json"])
def test_rerun_from_artifact(tmp_path, artifact):
    cli.run(_cfg(experiment="correlator", seed=9), tmp_path / "a")
    cfg = cli.load_config(tmp_path / "a" / artifact)
    cli.run(cfg, tmp_path / "b")
    for name in ("correlator.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_main_exit_codes(tmp_path, capsys):
    good = _write(tmp_path, dict(SMALL, experiment="loci"))
    assert cli.main(["--config", str(good), "--out", str(tmp_path / "ok")]) == 0
    assert json.loads(capsys.readouterr().out)["status"] == "ok"

    bad = _write(tmp_path, {"device": {"kappa_h": -1}}, "bad.yaml")
    assert cli.main(["--config", str(bad), "--out", str(tmp_path / "v")]) == 1
    rec = json.loads(capsys.readouterr().err)
    assert rec["code"] == 1 and rec["field"] == "device.kappa_h"
    assert json.loads((tmp_path / "v" / "error.json").read_text()) == rec

    dark = _write(tmp_path, dict(SMALL, drive={"power_pw": 0}), "dark.yaml")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        code = cli.main(["--config", str(dark), "--experiment", "spectrum", "--out", str(tmp_path / "r")])
    assert code == 2
    rec = json.loads(capsys.readouterr().err)
    assert rec["kind"] == "runtime" and (tmp_path / "r" / "error.json").exists()


def test_flag_overrides(tmp_path, capsys):
    good = _write(tmp_path, SMALL)
    assert cli.main(["--config", str(good), "--experiment", "loci", "--seed", "4", "--threads", "1",
                     "--out", str(tmp_path / "o")]) == 0
    s = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert s["experiment"] == "loci" and s["seed"] == 4


def test_oracle_passes_at_small_scale(tmp_path):
    res = cli.run(_cfg(experiment="oracle_check"), tmp_path)
    assert res.status == 0, res.error
    pts = res.summary["results"]["points"]
    assert set(pts) == {"defaults", "g0"}
    assert all(p["max_abs_z"] < 3 for p in pts.values())


def test_corrupted_detection_operator_fails_the_oracle(tmp_path):
    def corrupt(d):
        m = d.matrix.copy()
        m[0, 2] *= 3.0
        return DetectionOperator(m, d.label)

    res = cli.run(_cfg(experiment="oracle_check", oracle=dict(SMALL["oracle"], points=["defaults"])),
                  tmp_path, detection_hook=corrupt)
    assert res.status == 2 and res.error["kind"] == "oracle_mismatch"
    assert res.summary["status"] == "failed"


def test_insufficient_statistics_warns():
    cfg = _cfg(experiment="oracle_check", oracle=dict(SMALL["oracle"], points=["g0"], duration_ns=2e4,
                                                       min_clicks=10 ** 6))
    with pytest.warns(UserWarning, match="suggest duration_ns"):
        rep = cli.oracle_check(cfg)
    info = rep.points["g0"]
    assert info["suggested_duration_ns"] > info["duration_ns"]
    assert np.isfinite(info["max_abs_z"])

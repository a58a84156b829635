import json
import os
import subprocess
import sys

import pytest

from gpcouple.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, compare_reports, dumps, main
from gpcouple.config import KINDS, ConfigError, default_config, parse, serialize
from gpcouple.errors import ConfigurationError

SMALL = {
    "benchmark": "[benchmark]\ndoe_sizes = 20\nmethods = M3\nN = 30\ncontraction_grid = 101\n",
    "uq": "[uq]\nN = 20\n",
    "cycle-uq": "[analog]\nn_train = 60\nsteps = 2\nassemblies = 3\n[cycle]\nN = 5\nprobe_states = 2\n",
    "sobol": "[sobol]\nmodel = ishigami\nn_s = 200\nbootstrap = 5\n",
    "bounds": "[bounds]\nN = 20\nprobes = 3\ncontraction_grid = 101\n",
    "slopes": "[slopes]\nprobe_resolution = 400\n",
    "velocity": "[velocity]\nN = 200\nnodes = 11\n",
    "modal": "[modal]\nn_draws = 2000\nnodes = 11\n",
}


def _write(tmp_path, kind, extra="", name=None):
    text = f"[experiment]\nkind = {kind}\nname = {name or kind}\noutput_dir = {tmp_path / 'runs'}\n" \
           + SMALL[kind] + extra
    path = tmp_path / f"{name or kind}.ini"
    path.write_text(text)
    return path


@pytest.fixture(autouse=True)
def _no_env_override(monkeypatch):
    monkeypatch.delenv("GPCOUPLE_OUTPUT_DIR", raising=False)


@pytest.mark.parametrize("kind", sorted(KINDS))
def test_round_trip_defaults(kind):
    cfg = default_config(kind)
    assert parse(serialize(cfg)).to_dict() == cfg.to_dict()


def test_round_trip_with_overrides():
    cfg = default_config("benchmark", benchmark={"doe_sizes": [20, 40], "lengthscale": 0.1 + 0.2, "N": 7})
    again = parse(serialize(cfg))
    assert again.to_dict() == cfg.to_dict()
    assert again.section("benchmark")["lengthscale"] == 0.1 + 0.2


def test_missing_kind_names_field():
    with pytest.raises(ConfigError) as err:
        parse("[experiment]\nmaster_seed = 3\n")
    assert err.value.field == "experiment.kind"


def test_unknown_field_reports_line():
    with pytest.raises(ConfigError) as err:
        parse("[experiment]\nkind = uq\n[uq]\nN = 5\nbogus = 1\n")
    assert err.value.field == "uq.bogus" and err.value.line == 5


def test_bad_value_type():
    with pytest.raises(ConfigError) as err:
        parse("[experiment]\nkind = uq\n[uq]\nN = many\n")
    assert err.value.field == "uq.N"


def test_choice_validation():
    with pytest.raises(ConfigError, match="M2"):
        parse("[experiment]\nkind = uq\n[uq]\nmethod = M1\n")


def test_unknown_kind():
    with pytest.raises(ConfigError):
        parse("[experiment]\nkind = nonsense\n")


def test_dry_run_writes_nothing(tmp_path, capsys):
    path = _write(tmp_path, "uq")
    assert main(["run", str(path), "--dry-run"]) == EXIT_OK
    assert not (tmp_path / "runs").exists()
    assert json.loads(capsys.readouterr().out)["valid"]


def test_missing_field_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[experiment]\nname = x\n")
    assert main(["run", str(path)]) == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["field"] == "experiment.kind" and err["exit_code"] == EXIT_CONFIG


def test_unreadable_config(tmp_path):
    assert main(["run", str(tmp_path / "absent.ini")]) == EXIT_CONFIG


@pytest.mark.parametrize("kind", sorted(KINDS))
def test_every_kind_runs(tmp_path, kind):
    path = _write(tmp_path, kind)
    assert main(["run", str(path)]) == EXIT_OK
    out = tmp_path / "runs" / kind
    manifest = json.loads((out / "manifest.json").read_text())
    for f in manifest["files"]:
        assert (out / f).exists()
    report = json.loads((out / "report.json").read_text())
    assert report["kind"] == kind and "checks" in report
    resolved = json.loads((out / "config.resolved.json").read_text())
    assert resolved["experiment"]["kind"] == kind
    assert parse((out / "config.resolved.ini").read_text()).to_dict() == resolved


def test_reports_are_bitwise_reproducible(tmp_path):
    a = _write(tmp_path, "benchmark", name="a")
    b = _write(tmp_path, "benchmark", name="b")
    assert main(["run", str(a)]) == EXIT_OK
    assert main(["run", str(b)]) == EXIT_OK
    ra = (tmp_path / "runs" / "a" / "report.json").read_text().replace('"name": "a"', "")
    rb = (tmp_path / "runs" / "b" / "report.json").read_text().replace('"name": "b"', "")
    assert ra == rb
    sa = (tmp_path / "runs" / "a" / "samples_n20_M3.csv")
    if sa.exists():
        assert sa.read_bytes() == (tmp_path / "runs" / "b" / "samples_n20_M3.csv").read_bytes()


def test_jobs_do_not_change_results(tmp_path):
    a = _write(tmp_path, "uq", name="serial")
    b = _write(tmp_path, "uq", name="parallel")
    main(["run", str(a)])
    main(["run", str(b), "--jobs", "2"])
    ra = json.loads((tmp_path / "runs" / "serial" / "report.json").read_text())
    rb = json.loads((tmp_path / "runs" / "parallel" / "report.json").read_text())
    ra.pop("name"), rb.pop("name")
    assert compare_reports(ra, rb)["equal"]


def test_seed_override_and_compare(tmp_path, capsys):
    path = _write(tmp_path, "uq", extra="doe_size = 200\n")
    main(["run", str(path)])
    first = tmp_path / "runs" / "uq" / "report.json"
    kept = tmp_path / "first.json"
    kept.write_text(first.read_text())
    main(["run", str(path), "--seed", "99"])
    capsys.readouterr()
    code = main(["compare", str(kept), str(first)])
    res = json.loads(capsys.readouterr().out)
    assert code == EXIT_CHECK and not res["equal"]
    a, b = json.loads(kept.read_text()), json.loads(first.read_text())
    assert abs(a["stats"]["mean"] - b["stats"]["mean"]) <= 1e-4
    assert main(["compare", str(kept), str(kept)]) == EXIT_OK


def test_compare_kind_mismatch(tmp_path):
    with pytest.raises(ConfigurationError):
        compare_reports({"kind": "uq"}, {"kind": "modal"})
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    a.write_text('{"kind": "uq"}')
    b.write_text('{"kind": "modal"}')
    assert main(["compare", str(a), str(b)]) == EXIT_CONFIG


def test_compare_tolerances():
    a = {"kind": "uq", "x": 1.0, "y": [1.0, 2.0], "timestamp": "t1"}
    b = {"kind": "uq", "x": 1.0 + 1e-9, "y": [1.0, 2.0], "timestamp": "t2"}
    assert not compare_reports(a, b)["equal"]
    assert compare_reports(a, b, abs_tol=1e-8)["equal"]
    assert compare_reports(a, {**b, "extra": 1}, abs_tol=1)["mismatches"] == [".extra"]


def test_enforced_checks_exit_code(tmp_path):
    # 20 base rows are far too few for the Ishigami indices to meet 0.05
    path = _write(tmp_path, "sobol")
    path.write_text(path.read_text().replace("n_s = 200", "n_s = 20")
                    .replace("[experiment]\n", "[experiment]\nenforce_checks = true\n"))
    assert main(["run", str(path)]) == EXIT_CHECK
    report = json.loads((tmp_path / "runs" / "sobol" / "report.json").read_text())
    assert any(not v["pass"] for v in report["checks"].values())
    path.write_text(path.read_text().replace("enforce_checks = true", "enforce_checks = false"))
    assert main(["run", str(path)]) == EXIT_OK


def test_env_overrides_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("GPCOUPLE_OUTPUT_DIR", str(tmp_path / "elsewhere"))
    main(["run", str(_write(tmp_path, "modal"))])
    assert (tmp_path / "elsewhere" / "modal" / "report.json").exists()


def test_seventeen_digit_floats():
    assert dumps({"x": 0.1, "y": 1.0, "z": [2.5e-10]}) == '{\n  "x": 0.10000000000000001,\n  "y": 1.0,\n  "z": [2.5000000000000002e-10]\n}\n'


def test_module_entry_point_lists_kinds():
    out = subprocess.run([sys.executable, "-m", "gpcouple", "list-experiments"], capture_output=True, text=True,
                         check=True, env={**os.environ})
    for kind in KINDS:
        assert kind in out.stdout

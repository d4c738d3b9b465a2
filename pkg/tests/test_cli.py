import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from mmnlse.cli import main
from mmnlse.config import ConfigError, apply_overrides, build_config, load_config
from mmnlse.fieldio import read_field, write_field
from mmnlse.ssf import ComplexFieldGrid


def _write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def _invoke(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


def test_overrides_parse_yaml_scalars():
    raw = apply_overrides({"train": {"seed": 1}}, ["train.max_iterations=20", "scaling=false"])
    assert raw == {"train": {"seed": 1, "max_iterations": 20}, "scaling": False}


def test_override_needs_equals():
    with pytest.raises(ConfigError):
        apply_overrides({}, ["train.seed"])


@pytest.mark.parametrize("raw,path", [
    ({"kind": "bogus"}, "kind"),
    ({"kind": "ssf", "preset": "nope"}, "preset"),
    ({"kind": "ssf", "preset": "case1", "train": {"bogus": 1}}, "train.bogus"),
    ({"kind": "ssf", "preset": "case1", "train": {"factor": 2.0}}, "train"),
    ({"kind": "ssf", "fiber": {"length": 5.0}}, "pulse.energy"),
    ({"kind": "analytic", "preset": "case4"}, "fiber.nonlinear"),
    ({"kind": "compare"}, "compare.checkpoint"),
    ({"kind": "ssf", "extra": 1}, "extra"),
])
def test_validation_paths(raw, path):
    with pytest.raises(ConfigError) as err:
        build_config(raw, env={})
    assert err.value.path == path


def test_preset_fills_sections():
    cfg = build_config({"kind": "ssf", "preset": "case4"}, env={})
    assert cfg.fiber.length == 5.0 and not cfg.fiber.is_linear
    assert cfg.pulse.n_modes == 3 and cfg.network.n_outputs == 6
    assert cfg.ssf.n_z == 1034


def test_environment_overrides(tmp_path):
    cfg = build_config({"kind": "tables"},
                       env={"MMNLSE_OUTPUT_DIR": str(tmp_path), "MMNLSE_THREADS": "3"})
    assert cfg.output == tmp_path and cfg.train.workers == 3


def test_explicit_modes(tmp_path):
    raw = {"kind": "ssf", "fiber": {"length": 2.0, "modes": [{"beta2": 0.02}]},
           "pulse": {"energy": 1.0}}
    cfg = build_config(raw, env={})
    assert cfg.fiber.modes[0].beta2 == 0.02 and cfg.fiber.is_linear


def test_tables_command():
    res = _invoke("tables")
    assert res.exit_code == 0 and "40/40 cells within tolerance" in res.output


def test_unknown_kind_exit_code(tmp_path):
    path = _write(tmp_path, "c.yaml", {"kind": "bogus"})
    res = CliRunner().invoke(main, ["run", str(path)])
    assert res.exit_code == 2 and "kind" in res.output


def test_missing_config_exit_code(tmp_path):
    res = CliRunner().invoke(main, ["run", str(tmp_path / "none.yaml")])
    assert res.exit_code == 2


def test_ssf_run_writes_artifacts(tmp_path):
    path = _write(tmp_path, "c.yaml", {"kind": "ssf", "preset": "case1",
                                       "ssf": {"n_z": 100, "n_t": 1024, "checkpoint_stride": 25},
                                       "output": str(tmp_path / "out")})
    res = _invoke("run", path)
    assert res.exit_code == 0, res.output
    field = read_field(tmp_path / "out" / "field.bin")
    assert field.n_modes == 3 and field.z.size == 5
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["seed"] == 0 and manifest["kind"] == "ssf"
    assert len(manifest["config_sha256"]) == 64 and "numpy" in manifest["versions"]


def test_run_is_idempotent(tmp_path):
    path = _write(tmp_path, "c.yaml", {"kind": "analytic", "preset": "case1",
                                       "ssf": {"n_z": 10, "n_t": 256, "format": "csv"}})
    out = tmp_path / "o"
    snaps = []
    for _ in range(2):
        assert _invoke("run", path, "--output", out).exit_code == 0
        snaps.append([(out / n).read_bytes() for n in ("field.csv", "manifest.json")])
    assert snaps[0] == snaps[1]


def test_jobs_isolate_outputs(tmp_path):
    cfg = {"kind": "analytic", "preset": "case1", "ssf": {"n_z": 4, "n_t": 64},
           "output": str(tmp_path / "same")}
    a = _write(tmp_path, "a.yaml", cfg)
    b = _write(tmp_path, "b.yaml", cfg)
    res = _invoke("run", a, b, "--jobs", "2")
    assert res.exit_code == 0
    assert (tmp_path / "same" / "field.bin").exists()
    assert (tmp_path / "same-1" / "field.bin").exists()


def test_train_then_compare(tmp_path):
    base = {"kind": "train", "preset": "desk-single", "output": str(tmp_path / "tr"),
            "network": {"n_blocks": 1, "width": 8},
            "train": {"n_interior": 200, "n_boundary": 50, "batch_size": 50,
                      "max_iterations": 5},
            "reference": {"n_z": 5, "n_t": 64}}
    res = _invoke("run", _write(tmp_path, "t.yaml", base))
    assert res.exit_code == 0, res.output
    rows = (tmp_path / "tr" / "loss.csv").read_text().splitlines()
    assert rows[0] == "iteration,total,pde,ic,lr" and len(rows) == 6

    ref = _write(tmp_path, "r.yaml", {"kind": "analytic", "preset": "desk-single",
                                      "ssf": {"n_z": 4, "n_t": 64},
                                      "output": str(tmp_path / "ref")})
    assert _invoke("run", ref).exit_code == 0
    res = _invoke("compare", tmp_path / "tr" / "network.ckpt", tmp_path / "ref" / "field.bin",
                  "--output", tmp_path / "cmp", "--preset", "desk-single")
    assert res.exit_code == 0, res.output
    metrics = json.loads((tmp_path / "cmp" / "metrics.json").read_text())
    assert {"mse_abs", "mse_re", "mse_im", "max_abs_err"} <= set(metrics[0])
    header = (tmp_path / "cmp" / "errors.csv").read_text().splitlines()[0]
    assert header == "z,T,mode,abs_err,re_err,im_err"


def test_compare_identical_is_zero(tmp_path, rng):
    f = rng.normal(size=(2, 3, 4)) + 1j * rng.normal(size=(2, 3, 4))
    write_field(tmp_path / "a.bin", ComplexFieldGrid([0, 1, 2], np.arange(4.0), f))
    res = _invoke("compare", tmp_path / "a.bin", tmp_path / "a.bin", "--output", tmp_path / "c")
    assert res.exit_code == 0
    metrics = json.loads((tmp_path / "c" / "metrics.json").read_text())
    assert all(v == 0 for m in metrics for v in m.values())


def test_compare_mode_mismatch(tmp_path, rng):
    write_field(tmp_path / "a.bin", ComplexFieldGrid([0, 1], np.arange(4.0),
                                                     np.ones((2, 2, 4))))
    write_field(tmp_path / "b.bin", ComplexFieldGrid([0, 1], np.arange(4.0),
                                                     np.ones((3, 2, 4))))
    res = CliRunner().invoke(main, ["compare", str(tmp_path / "a.bin"),
                                    str(tmp_path / "b.bin"), "--output", str(tmp_path / "c")])
    assert res.exit_code == 2 and "(2, 2, 4)" in res.output and "(3, 2, 4)" in res.output


def test_compare_tolerance_exit(tmp_path):
    write_field(tmp_path / "a.bin", ComplexFieldGrid([0, 1], np.arange(4.0), np.ones((1, 2, 4))))
    write_field(tmp_path / "b.bin", ComplexFieldGrid([0, 1], np.arange(4.0), np.zeros((1, 2, 4))))
    res = CliRunner().invoke(main, ["compare", str(tmp_path / "a.bin"), str(tmp_path / "b.bin"),
                                    "--output", str(tmp_path / "c"), "--max-mse", "0.5"])
    assert res.exit_code == 4


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numerical_failure_exit(tmp_path):
    path = _write(tmp_path, "c.yaml", {
        "kind": "train", "preset": "desk-single", "output": str(tmp_path / "o"),
        "network": {"n_blocks": 1, "width": 4},
        "train": {"n_interior": 20, "n_boundary": 5, "max_iterations": 50,
                  "learning_rate": 1e150}})
    with np.errstate(all="ignore"):
        res = CliRunner().invoke(main, ["run", str(path)])
    assert res.exit_code == 3


def test_load_config_with_overrides(tmp_path):
    path = _write(tmp_path, "c.yaml", {"kind": "ssf", "preset": "case2"})
    cfg = load_config(path, ["ssf.n_z=10", "kind=analytic"], env={})
    assert cfg.kind == "analytic" and cfg.ssf.n_z == 10

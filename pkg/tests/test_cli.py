import filecmp
import json
import os

import numpy as np
import pytest

from vll import blobs, cli
from vll.errors import InvalidConfigError

THEORY_TOML = """
mode = "theory"
output_dir = "{out}"
master_seed = 7

[toy]
m = 10
exponent = 0.0

[grid]
p_values = [3]

[solver]
ridge = 1e-9
"""

MC_TOML = """
mode = "mc"
output_dir = "{out}"
master_seed = 3

[toy]
m = 20
exponent = 2.0

[grid]
p_values = [5, 10]

[replication]
n_datasets = 4

[solver]
ridge = 1e-3
"""


def _write(tmp_path, text, **fmt):
    path = tmp_path / "conf.toml"
    path.write_text(text.format(**fmt))
    return str(path)


def test_load_config_round_trip(tmp_path):
    conf = cli.load_config(_write(tmp_path, MC_TOML, out=str(tmp_path / "o")))
    assert conf.mode == "mc"
    assert conf.toy.m == 20
    assert conf.grid.p_values == [5, 10]
    assert conf.replication.n_datasets == 4


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('mode = "theory"\noutput_dir = "x"\nbogus = 1\n')
    with pytest.raises(InvalidConfigError):
        cli.load_config(str(path))
    path.write_text('mode = "theory"\noutput_dir = "x"\n[toy]\nnope = 2\n')
    with pytest.raises(InvalidConfigError):
        cli.load_config(str(path))


def test_validation_rejects_bad_grid(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text(
        'mode = "theory"\noutput_dir = "x"\n[grid]\np_values = [10, 5]\n'
    )
    with pytest.raises(InvalidConfigError):
        cli.load_config(str(path))


def test_config_hash_stable_and_sensitive(tmp_path):
    a = cli.load_config(_write(tmp_path, MC_TOML, out="o"))
    b = cli.load_config(_write(tmp_path, MC_TOML, out="o"))
    assert cli.config_hash(a) == cli.config_hash(b)
    b.master_seed += 1
    assert cli.config_hash(a) != cli.config_hash(b)


def test_main_scalar_theory_exact(tmp_path, capsys):
    out = str(tmp_path / "run")
    rc = cli.main(["theory", "--config", _write(tmp_path, THEORY_TOML, out=out)])
    assert rc == 0
    cols = blobs.read_csv(os.path.join(out, "theory.csv"))
    # flat spectrum, identity features: eg = 1 - p/m exactly in the ridgeless limit
    assert cols["p"][0] == 3.0
    assert abs(cols["eg"][0] - 0.7) < 1e-6


def test_main_exit_code_2_on_bad_config(tmp_path, capsys):
    path = tmp_path / "c.toml"
    path.write_text('mode = "theory"\n')  # missing output_dir
    assert cli.main(["theory", "--config", str(path)]) == 2
    path.write_text("not toml [[[")
    assert cli.main(["theory", "--config", str(path)]) == 2
    assert cli.main(["theory", "--config", str(tmp_path / "missing.toml")]) == 2


def test_main_deterministic_reruns_byte_identical(tmp_path, capsys):
    conf = _write(tmp_path, MC_TOML, out="PLACEHOLDER")
    out1, out2 = str(tmp_path / "r1"), str(tmp_path / "r2")
    assert cli.main(["mc", "--config", conf, "--out", out1]) == 0
    assert cli.main(["mc", "--config", conf, "--out", out2]) == 0
    assert filecmp.cmp(
        os.path.join(out1, "mc_curve.csv"), os.path.join(out2, "mc_curve.csv"),
        shallow=False,
    )


def test_seed_override_changes_mc_output(tmp_path, capsys):
    conf = _write(tmp_path, MC_TOML, out="PLACEHOLDER")
    out1, out2 = str(tmp_path / "s1"), str(tmp_path / "s2")
    assert cli.main(["mc", "--config", conf, "--out", out1, "--seed", "1"]) == 0
    assert cli.main(["mc", "--config", conf, "--out", out2, "--seed", "2"]) == 0
    a = blobs.read_csv(os.path.join(out1, "mc_curve.csv"))
    b = blobs.read_csv(os.path.join(out2, "mc_curve.csv"))
    assert not np.array_equal(a["eg_mean"], b["eg_mean"])


def test_manifest_lists_all_artifacts(tmp_path, capsys):
    out = str(tmp_path / "run")
    conf = _write(tmp_path, MC_TOML, out=out)
    assert cli.main(["mc", "--config", conf]) == 0
    with open(os.path.join(out, "manifest.json")) as fh:
        manifest = json.load(fh)
    on_disk = sorted(f for f in os.listdir(out) if f != "manifest.json")
    assert sorted(manifest["artifacts"]) == on_disk
    for key in ("config_hash", "mode", "master_seed", "tool_version",
                "cell_seeds", "discard_log", "wall_seconds"):
        assert key in manifest
    assert manifest["mode"] == "mc"


def test_phalf_mode_end_to_end(tmp_path, capsys):
    curve_path = str(tmp_path / "curve_in.csv")
    rows = [
        [100, 1.0, 0.0, 0.9, None, None, None, None],
        [1000, 1.0, 0.0, 0.1, None, None, None, None],
    ]
    blobs.emit_csv(rows, "curve", curve_path)
    conf = tmp_path / "p.toml"
    conf.write_text(
        f'mode = "phalf"\noutput_dir = "{tmp_path / "out"}"\n'
        f'[[phalf.curves]]\npath = "{curve_path}"\nn = 64\nalpha = 8.0\n'
    )
    assert cli.main(["phalf", "--config", str(conf)]) == 0
    cols = blobs.read_csv(str(tmp_path / "out" / "phalf.csv"))
    assert cols["n"][0] == 64.0
    assert np.isclose(cols["p_half"][0], 10 ** 2.5, rtol=1e-6)
    assert cols["bracket_lo"][0] <= cols["p_half"][0] <= cols["bracket_hi"][0]


def test_subcommand_mode_mismatch_revalidates(tmp_path):
    # theory config forced through phalf subcommand lacks phalf.curves -> exit 2
    conf = _write(tmp_path, THEORY_TOML, out=str(tmp_path / "o"))
    assert cli.main(["phalf", "--config", conf]) == 2


def test_model_from_config_quenched_shape():
    conf = cli.ExperimentConfig(mode="theory", output_dir="x")
    conf.toy.m = 50
    conf.toy.eta = 0.5
    conf.toy.quenched = True
    conf.grid.p_values = [10]
    model = cli.model_from_config(conf)
    assert model.m == 50 and model.n_h == 25
    from vll import theory

    assert isinstance(model.a_spec, theory.AGaussian)

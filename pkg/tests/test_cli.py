from __future__ import annotations

import csv
import subprocess
import sys

import numpy as np
import pytest

from trajent import cli, config

PROTECTION = """\
# uneven initial state under full protection
channel.kind = dephasing_and_hot_bath
channel.gamma = 1
policy.kind = protection
initial.kind = fixed
initial.amplitudes = 0.3535533905932738, 0, -0.3535533905932738, 0, 0, 0.3535533905932738, 0, 0.7905694150420949
sim.dt = 1e-3
sim.t_final = 1
sim.checkpoints = 0, 0.5, 1
ensemble.n_traj = 40
seed = 3
"""


def write(tmp_path, text, name="scenario.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def test_simulate_protection(tmp_path):
    out = tmp_path / "out.csv"
    assert cli.main(["simulate", write(tmp_path, PROTECTION), "-o", str(out)]) == 0
    header, rows = read_csv(out)
    assert header == ["t", "mean_C", "se_C", "var_C", "mean_EoF", "oracle_C", "oracle_CA",
                      "bound_value", "trace_dist"]
    mean_c = np.array([float(r[1]) for r in rows])
    assert np.all(np.abs(mean_c - 0.809) < 5e-3)
    assert [float(r[0]) for r in rows] == [0.0, 0.5, 1.0]


def test_simulate_byte_identical(tmp_path):
    cfg = write(tmp_path, PROTECTION.replace("policy.kind = protection",
                                             "policy.kind = fixed\npolicy.fixed_u = 1,0,0,0,1,0,0,0,1"))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["simulate", cfg, "-o", str(a)]) == 0
    assert cli.main(["simulate", cfg, "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_round_trip_floats(tmp_path):
    out = tmp_path / "out.csv"
    cli.main(["simulate", write(tmp_path, PROTECTION), "-o", str(out)])
    _, rows = read_csv(out)
    for cell in rows[1][1:]:
        assert repr(float(cell)) == cell


def test_missing_channel_kind(tmp_path, capsys):
    text = "\n".join(line for line in PROTECTION.splitlines() if not line.startswith("channel.kind"))
    assert cli.main(["simulate", write(tmp_path, text)]) == 2
    assert "channel.kind" in capsys.readouterr().err


@pytest.mark.parametrize(
    "edit,key",
    [
        (("seed = 3", "seed = 3\ncolour = red"), "colour"),
        (("seed = 3", "seed = 3\nseed = 4"), "seed"),
        (("sim.dt = 1e-3", "sim.dt = fast"), "sim.dt"),
        (("sim.t_final = 1", "sim.t_final = 1.0005"), "sim.t_final"),
        (("channel.kind = dephasing_and_hot_bath", "channel.kind = amplitude_damping"), "policy.kind"),
        (("ensemble.n_traj = 40", "ensemble.n_traj = 0"), "ensemble.n_traj"),
        (("sim.checkpoints = 0, 0.5, 1", "sim.checkpoints = 0, 2"), "sim.checkpoints"),
        (("initial.amplitudes = 0.3535533905932738, 0,", "initial.amplitudes = 0,"), "initial.amplitudes"),
    ],
)
def test_invalid_configs(tmp_path, capsys, edit, key):
    text = PROTECTION.replace(*edit)
    assert text != PROTECTION
    assert cli.main(["simulate", write(tmp_path, text)]) == 2
    assert key in capsys.readouterr().err


def test_error_names_line(tmp_path, capsys):
    text = PROTECTION.replace("sim.dt = 1e-3", "sim.dt = -1")
    cli.main(["simulate", write(tmp_path, text)])
    err = capsys.readouterr().err
    assert "line 7" in err and "sim.dt" in err


def test_runtime_failure_leaves_no_partial_file(tmp_path, capsys):
    target = tmp_path / "taken"
    target.mkdir()
    (target / "keep").write_text("x")
    assert cli.main(["simulate", write(tmp_path, PROTECTION), "-o", str(target)]) == 1
    assert "error" in capsys.readouterr().err
    assert sorted(p.name for p in tmp_path.iterdir()) == ["scenario.cfg", "taken"]


def test_bounds_full_dimension_state(tmp_path):
    text = """\
channel.kind = dephasing
channel.gamma = 0.5
initial.amplitudes = 1, 0, 0, 0, 0, 0, 1, 0
sim.t_final = 2
"""
    out = tmp_path / "b.csv"
    assert cli.main(["bounds", write(tmp_path, text), "-o", str(out)]) == 0
    header, rows = read_csv(out)
    assert header == ["t", "label", "value"]
    plus = [(float(t), float(v)) for t, lab, v in rows if lab == "dephasing_plus"]
    t, v = np.array(plus).T
    np.testing.assert_allclose(v, np.exp(-0.5 * t), atol=1e-14)
    assert {"exp_local", "dephasing_minus", "appC_dephasing_C", "appC_dephasing_CA"} <= {r[1] for r in rows}


def test_study_plus_bound(tmp_path):
    text = "channel.kind = dephasing\ninitial.kind = haar\nensemble.n_states = 100\nsim.checkpoints = 0.25, 1\n"
    out = tmp_path / "s.csv"
    assert cli.main(["study", write(tmp_path, text), "-o", str(out)]) == 0
    header, rows = read_csv(out)
    assert header == ["t", "C0", "exact", "bound", "ratio"]
    assert len(rows) == 200
    assert not [r for r in rows if float(r[4]) > 1 + 1e-9]


def test_study_rejects_other_channels(tmp_path):
    text = "channel.kind = depolarizing\n"
    assert cli.main(["study", write(tmp_path, text)]) == 2


def test_oracle_columns(tmp_path):
    text = """\
channel.kind = amplitude_damping
initial.amplitudes = 0.5, 0, 0.5, 0, 0.5, 0, 0.5, 0.0
sim.checkpoints = 0, 0.3, 1
"""
    out = tmp_path / "o.csv"
    assert cli.main(["oracle", write(tmp_path, text), "-o", str(out)]) == 0
    header, rows = read_csv(out)
    assert header == ["t", "wootters_C", "appC_C", "appC_CA"]
    for r in rows:
        assert float(r[1]) == pytest.approx(float(r[2]), abs=1e-6)


def test_stdout_output(tmp_path, capsys):
    text = "channel.kind = dephasing\ninitial.amplitudes = 1,0,0,0,0,0,1,0\nsim.checkpoints = 0, 1\n"
    assert cli.main(["bounds", write(tmp_path, text), "-o", "-"]) == 0
    assert capsys.readouterr().out.startswith("t,label,value\n")


def test_selftest_quick(capsys):
    assert cli.main(["selftest", "--quick"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert all(line.startswith("PASS") for line in out[:-1])


def test_bad_arguments():
    assert cli.main(["frobnicate"]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "trajent", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "simulate" in res.stdout


class TestConfigParsing:
    def test_comments_and_blanks(self):
        raw = config.parse_text("# hi\n\nchannel.kind = dephasing\n")
        assert raw.values == {"channel.kind": "dephasing"} and raw.lines["channel.kind"] == 3

    def test_missing_equals(self):
        with pytest.raises(config.ConfigError, match="line 1"):
            config.parse_text("channel.kind dephasing")

    def test_empty_value(self):
        with pytest.raises(config.ConfigError, match="empty"):
            config.parse_text("seed =")

    def test_fixed_u_parsing(self):
        raw = config.parse_text("channel.kind = dephasing\npolicy.kind = fixed\npolicy.fixed_u = 0.5j, 0, 0, -1\n")
        pol = config.build_policy(raw, config.build_channel(raw))
        np.testing.assert_array_equal(pol.u, [[0.5j, 0], [0, -1]])

    def test_fixed_u_wrong_size(self):
        raw = config.parse_text("channel.kind = dephasing\npolicy.kind = fixed\npolicy.fixed_u = 1, 0, 0\n")
        with pytest.raises(config.ConfigError, match="policy.fixed_u"):
            config.build_policy(raw, config.build_channel(raw))

    def test_unphysical_fixed_u(self):
        raw = config.parse_text("channel.kind = dephasing\npolicy.kind = fixed\npolicy.fixed_u = 2, 0, 0, 2\n")
        with pytest.raises(config.ConfigError, match="policy.fixed_u"):
            config.build_policy(raw, config.build_channel(raw))

    def test_haar_states_follow_seed(self):
        raw = config.parse_text("initial.kind = haar\nensemble.n_states = 4\n")
        a, b = config.build_initial_states(raw, 5), config.build_initial_states(raw, 5)
        np.testing.assert_array_equal(a, b)
        assert a.shape == (4, 4)
        assert not np.array_equal(a, config.build_initial_states(raw, 6))

    def test_default_checkpoints(self):
        dt, tf, cps = config.sim_times(config.parse_text("sim.dt = 0.01\nsim.t_final = 2\n"))
        assert len(cps) == 11 and cps[-1] == 2.0 and cps[1] == 0.2

    def test_representation_only_for_infinite_temperature(self):
        raw = config.parse_text("channel.kind = dephasing\nchannel.representation = hermitian_xy\n")
        with pytest.raises(config.ConfigError, match="channel.representation"):
            config.build_channel(raw)

    def test_thermal_occupation(self):
        ch = config.build_channel(config.parse_text("channel.kind = thermal\nchannel.nbar = 1\n"))
        assert ch.n_ops == 4 and ch.params["gamma_ab"] == 1.0

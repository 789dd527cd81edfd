import json
import logging

import numpy as np
import pytest

from tweezer_transfer.cli import main
from tweezer_transfer.config import ConfigError, load_config, parse_config
from tweezer_transfer.constants import H, KB
from tweezer_transfer.csvio import read_csv, write_csv

BASE = """
waist_um = 7.5
wavelength_nm = 810.0
depth_MHz = 150
"""


def write_config(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadConfig:
    def test_natural_units(self, tmp_path):
        cfg = load_config(write_config(tmp_path, BASE))
        b = cfg.trap.beam1
        assert b.waist == pytest.approx(7.5e-6, rel=1e-15)
        assert b.wavelength == pytest.approx(810e-9, rel=1e-15)
        assert b.depth == pytest.approx(150e6 * H, rel=1e-15)
        assert cfg.trap.beam2.depth == b.depth

    def test_defaults(self, tmp_path):
        cfg = load_config(write_config(tmp_path, BASE))
        assert cfg.thermal.temperature_fraction == 0.10
        assert cfg.separations == tuple(0.25 * i for i in range(13))
        assert cfg.sampler.n_trajectories == 2000
        assert len(cfg.energy_bin_edges) == 11

    def test_nested_tables(self, tmp_path):
        text = "[beam]\n" + BASE + "\n[sweep]\nseparations_w0 = [0.5]\nseed = 3\n"
        cfg = load_config(write_config(tmp_path, text))
        assert cfg.separations == (0.5,)
        assert cfg.sampler.seed == 3

    def test_temperature_in_microkelvin(self, tmp_path):
        cfg = load_config(write_config(tmp_path, BASE + "temperature_uK = 720\n"))
        assert cfg.thermal.temperature_fraction == pytest.approx(720e-6 * KB / (150e6 * H))

    @pytest.mark.parametrize(
        "text, key",
        [
            (BASE.replace("depth_MHz = 150", "depth_MHz = -5"), "depth_MHz"),
            (BASE.replace("waist_um = 7.5", ""), "waist_um"),
            (BASE.replace("depth_MHz = 150", ""), "depth_MHz"),
            (BASE + "n_trajectories = 'many'\n", "n_trajectories"),
            (BASE + "separations_w0 = []\n", "separations_w0"),
            (BASE + "bogus = 1\n", "bogus"),
            (BASE + "temperature_fraction = 1.5\n", "temperature_fraction"),
            (BASE + "energy_min_U0 = -0.01\n", "energy_min_U0"),
            (BASE + "species = 'Xx'\n", "species"),
        ],
    )
    def test_errors_name_key(self, tmp_path, text, key):
        with pytest.raises(ConfigError) as info:
            load_config(write_config(tmp_path, text))
        assert info.value.key == key
        assert key in str(info.value)

    def test_unparseable(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_config(tmp_path, "waist_um = = 3"))

    def test_echo_logged(self, tmp_path, caplog):
        with caplog.at_level(logging.INFO, logger="tweezer_transfer"):
            load_config(write_config(tmp_path, BASE))
        assert "config waist_um = 7.5" in caplog.text

    def test_unit_round_trip(self, tmp_path):
        text = BASE + "depth2_MHz = 86.0\nmass_amu = 86.909180531\ntemperature_fraction = 0.12\n"
        cfg = load_config(write_config(tmp_path, text))
        nat = cfg.to_natural_units()
        for key, value in [
            ("waist_um", 7.5),
            ("wavelength_nm", 810.0),
            ("depth_MHz", 150.0),
            ("depth2_MHz", 86.0),
            ("mass_amu", 86.909180531),
            ("temperature_fraction", 0.12),
        ]:
            assert nat[key] == pytest.approx(value, rel=1e-12)
        # natural units fed back in reproduce the same SI configuration
        again = parse_config({k: v for k, v in nat.items() if k != "temperature_uK"})
        for a, b in [(again.trap.beam1, cfg.trap.beam1), (again.trap.beam2, cfg.trap.beam2)]:
            for attr in ("waist", "wavelength", "depth"):
                assert getattr(a, attr) == pytest.approx(getattr(b, attr), rel=1e-12)
        assert again.trap.particle_mass == pytest.approx(cfg.trap.particle_mass, rel=1e-12)
        assert again.integrator.dt == pytest.approx(cfg.integrator.dt, rel=1e-12)


class TestCsv:
    def test_shape(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ["a_w0", "b_U0"], [[1.0, 2.0], [3.0, 4.0]], seed=5)
        lines = path.read_text().splitlines()
        assert lines[0] == "# tweezer_transfer 0.1.0 seed=5"
        assert len(lines) == 4  # comment + header + 2 rows

    def test_no_data_is_empty_field(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", ["separation_w0", "probability"], [[1.0, None]], seed=0)
        assert path.read_text().splitlines()[-1].endswith(",")
        _, rows = read_csv(path)
        assert rows[0][1] is None

    def test_round_trip(self, tmp_path, rng):
        table = rng.normal(size=(20, 4)) * 10.0 ** rng.integers(-30, 30, size=(20, 4))
        path = write_csv(tmp_path / "t.csv", list("abcd"), table.tolist(), seed=1)
        header, rows = read_csv(path)
        assert header == list("abcd")
        assert np.allclose(np.array(rows, dtype=float), table, rtol=1e-12, atol=0)

    def test_rejects_non_finite(self, tmp_path):
        with pytest.raises(ValueError):
            write_csv(tmp_path / "t.csv", ["a"], [[np.nan]], seed=0)

    def test_unwritable(self, tmp_path):
        target = tmp_path / "missing" / "t.csv"
        with pytest.raises(OSError, match="missing"):
            write_csv(target, ["a"], [[1.0]], seed=0)


QUICK = BASE + "separations_w0 = [0.0, 0.5, 1.0, 1.5]\nn_trajectories = 30\n"


class TestCommands:
    def test_topology(self, tmp_path):
        cfg = write_config(tmp_path, QUICK)
        assert main(["topology", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        header, rows = read_csv(tmp_path / "o" / "topology.csv")
        kinds = [r[header.index("classification")] for r in rows]
        assert kinds == ["SingleWell", "SingleWell", "FlatBottom", "DoubleWell"]
        assert rows[0][header.index("minimum2_z_w0")] is None

    def test_profile(self, tmp_path):
        cfg = write_config(tmp_path, QUICK + "profile_points = 101\n")
        assert main(["profile", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        header, rows = read_csv(tmp_path / "o" / "profile.csv")
        assert header == ["separation_w0", "z_w0", "potential_U0"]
        assert len(rows) == 4 * 101
        assert min(r[2] for r in rows if r[0] == 0.0) == pytest.approx(-2.0)

    def test_sweep_deterministic(self, tmp_path):
        cfg = write_config(tmp_path, QUICK)
        outputs = []
        for name, workers in [("a", "1"), ("b", "2")]:
            out = tmp_path / name
            assert main(["sweep", "--config", str(cfg), "--out", str(out), "--seed", "17", "--workers", workers]) == 0
            outputs.append(out)
        for fname in ["histogram.csv", "efficiency.csv", "diagnostics.csv"]:
            a = (outputs[0] / fname).read_bytes()
            assert a == (outputs[1] / fname).read_bytes()
            assert a.startswith(b"# tweezer_transfer 0.1.0 seed=17")
        header, rows = read_csv(outputs[0] / "histogram.csv")
        for r in rows:
            assert r[header.index("transfers")] <= r[header.index("transits")]
            if r[header.index("transits")] == 0:
                assert r[header.index("probability")] is None
        log_text = (outputs[0] / "run.log").read_text()
        assert log_text.startswith("# tweezer_transfer 0.1.0 seed=17")
        assert "config seed = 17" in log_text

    def test_trajectory(self, tmp_path):
        cfg = write_config(tmp_path, QUICK + "trajectory_steps = 20000\nrecord_every = 100\n")
        assert main(["trajectory", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
        header, rows = read_csv(tmp_path / "o" / "trajectory.csv")
        assert header[0] == "time_s" and header[-1] == "energy_J"
        assert len(rows) == 201
        header, rows = read_csv(tmp_path / "o" / "transits.csv")
        assert header[:3] == ["entry_beam", "exit_beam", "transferred"]

    def test_error_is_one_json_line(self, tmp_path, capsys):
        cfg = write_config(tmp_path, BASE.replace("150", "-5"))
        status = main(["topology", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert status != 0
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1
        payload = json.loads(err[0])
        assert payload["key"] == "depth_MHz"
        assert payload["error"] == "ConfigError"

    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["profile", "--config", str(tmp_path / "nope.toml")]) != 0
        assert json.loads(capsys.readouterr().err)["key"] == "config"

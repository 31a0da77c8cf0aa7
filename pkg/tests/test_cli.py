import json
import math

import pytest

from pcabounds import ConfigError
from pcabounds.cli import load_config, parse_and_dispatch, resolve_config
from pcabounds.tables import read_csv


def _dyadic_config(**extra):
    cfg = {
        "model": {
            "profile": {"type": "explicit", "values": [2.0**-j for j in range(1, 21)]},
            "D": 20,
        },
        "law": "gaussian",
        "n": [100],
        "d": [2],
        "replicates": 5,
        "seed": 99,
    }
    cfg.update(extra)
    return cfg


def _write(tmp_path, cfg, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


class TestLoadConfig:
    def test_minimal_config_gets_defaults(self, tmp_path):
        config, resolved = load_config(_write(tmp_path, _dyadic_config()))
        assert config.t_list == (1.0, 2.0, 4.0, 8.0)
        assert config.gamma == 0.95
        assert config.constants.c1 == 1.0 and config.constants.C_hw == 1.0
        assert resolved["model"]["D"] == 20
        assert resolved["t"] == [1.0, 2.0, 4.0, 8.0]

    def test_auto_truncation_is_pinned_in_resolved(self, tmp_path):
        cfg = _dyadic_config()
        cfg["model"] = {"profile": {"type": "exponential", "K": 1.0, "alpha": 1.0, "beta": 1.0}}
        config, resolved = load_config(_write(tmp_path, cfg))
        assert resolved["model"]["D"] == config.model.D > max(config.d_list)

    def test_truncation_cap(self, tmp_path):
        cfg = _dyadic_config()
        cfg["model"] = {
            "profile": {"type": "polynomial", "K": 1.0, "alpha": 2.0},
            "D_cap": 128,
        }
        config, resolved = load_config(_write(tmp_path, cfg))
        assert config.model.D == 128

    def test_unknown_keys_all_reported(self, tmp_path):
        cfg = _dyadic_config()
        cfg["bogus"] = 1
        cfg["model"]["extra"] = 2
        cfg["constants"] = {"c9": 1.0}
        with pytest.raises(ConfigError) as err:
            load_config(_write(tmp_path, cfg))
        message = str(err.value)
        assert "bogus" in message
        assert "model.extra" in message
        assert "constants.c9" in message

    def test_bad_alpha_names_the_key(self, tmp_path):
        cfg = _dyadic_config()
        cfg["model"] = {"profile": {"type": "polynomial", "K": 1.0, "alpha": 1.0}}
        with pytest.raises(ConfigError) as err:
            load_config(_write(tmp_path, cfg))
        assert "alpha" in str(err.value)

    def test_missing_keys_listed(self):
        with pytest.raises(ConfigError) as err:
            resolve_config({"law": "gaussian"})
        message = str(err.value)
        for key in ("model", "n", "d", "replicates", "seed"):
            assert f"{key}: missing" in message

    def test_bad_law_and_lists(self, tmp_path):
        cfg = _dyadic_config(law="cauchy", n=[0])
        with pytest.raises(ConfigError) as err:
            load_config(_write(tmp_path, cfg))
        message = str(err.value)
        assert "law" in message and "n[0]" in message

    def test_n_must_cover_d(self, tmp_path):
        cfg = _dyadic_config(n=[2], d=[4])
        with pytest.raises(ConfigError):
            load_config(_write(tmp_path, cfg))

    def test_overrides(self, tmp_path):
        path = _write(tmp_path, _dyadic_config())
        config, resolved = load_config(
            path, overrides=["n=[5000]", "constants.c1=2.0"], seed_override=7
        )
        assert config.n_list == (5000,)
        assert config.constants.c1 == 2.0
        assert config.seed == 7
        assert resolved["n"] == [5000] and resolved["seed"] == 7

    def test_override_unknown_key_rejected(self, tmp_path):
        path = _write(tmp_path, _dyadic_config())
        with pytest.raises(ConfigError):
            load_config(path, overrides=["niste=3"])
        with pytest.raises(ConfigError):
            load_config(path, overrides=["constants.zz=3"])
        with pytest.raises(ConfigError):
            load_config(path, overrides=["n 5"])


class TestDispatch:
    def test_missing_config_file_exits_one(self, tmp_path, capsys):
        out = tmp_path / "out"
        status = parse_and_dispatch(
            ["simulate", "--config", str(tmp_path / "nope.json"), "--out", str(out)]
        )
        assert status == 1
        assert "config error" in capsys.readouterr().err
        assert not out.exists()

    def test_config_error_exits_one(self, tmp_path, capsys):
        path = _write(tmp_path, _dyadic_config(law="cauchy"))
        assert parse_and_dispatch(["simulate", "--config", str(path)]) == 1

    def test_usage_error_exits_one(self, capsys):
        assert parse_and_dispatch(["frobnicate"]) == 1

    def test_degenerate_model_exits_two(self, tmp_path, capsys):
        cfg = _dyadic_config()
        cfg["model"] = {"profile": {"type": "explicit", "values": [1.0, 1.0, 0.5]}, "D": 3}
        cfg["d"] = [1]
        cfg["n"] = [10]
        path = _write(tmp_path, cfg)
        status = parse_and_dispatch(
            ["bounds", "--config", str(path), "--out", str(tmp_path / "b")]
        )
        assert status == 2
        assert "numeric failure" in capsys.readouterr().err

    def test_simulate_writes_reproducible_csv(self, tmp_path):
        path = _write(tmp_path, _dyadic_config())
        out1, out2 = tmp_path / "run1", tmp_path / "run2"
        assert parse_and_dispatch(["simulate", "--config", str(path), "--out", str(out1)]) == 0
        assert parse_and_dispatch(["simulate", "--config", str(path), "--out", str(out2)]) == 0
        for name in ("records.csv", "summary.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
        meta, columns, rows = read_csv(out1 / "records.csv")
        assert meta["law"] == "gaussian"
        assert "config_sha256" in meta and json.loads(meta["config"])
        assert len(rows) == 5
        assert columns[0] == "replicate_index"

    def test_jobs_do_not_change_bytes(self, tmp_path):
        path = _write(tmp_path, _dyadic_config(replicates=16, n=[40, 80]))
        out1, out8 = tmp_path / "j1", tmp_path / "j8"
        assert parse_and_dispatch(
            ["simulate", "--config", str(path), "--out", str(out1), "--jobs", "1"]
        ) == 0
        assert parse_and_dispatch(
            ["simulate", "--config", str(path), "--out", str(out8), "--jobs", "8"]
        ) == 0
        assert (out1 / "records.csv").read_bytes() == (out8 / "records.csv").read_bytes()
        assert (out1 / "summary.csv").read_bytes() == (out8 / "summary.csv").read_bytes()

    def test_bounds_hand_value(self, tmp_path):
        path = _write(tmp_path, _dyadic_config(t=[1]))
        out = tmp_path / "bounds"
        assert parse_and_dispatch(["bounds", "--config", str(path), "--out", str(out)]) == 0
        meta, columns, rows = read_csv(out / "bounds.csv")
        assert len(rows) == 1
        row = dict(zip(columns, rows[0]))
        assert row["d_prime"] == "2" and row["selection_failed"] == "0"
        assert math.isclose(float(row["weighted_bound"]), 0.27666, rel_tol=1e-4)
        assert math.isclose(float(row["dim_bound"]), 1.03 * float(row["oracle_dprime"]), rel_tol=1e-12)
        assert row["gap_ok"] == "1" and row["size_ok"] == "1"

    def test_sweep_crossover(self, tmp_path):
        cfg = _dyadic_config(t=[1], n=[1000], d=[1, 2, 3, 4])
        cfg["model"] = {"profile": {"type": "exponential", "K": 1.0, "alpha": 1.0, "beta": 1.0}}
        path = _write(tmp_path, cfg)
        out = tmp_path / "sweep"
        assert parse_and_dispatch(["sweep", "--config", str(path), "--out", str(out)]) == 0
        meta, columns, rows = read_csv(out / "sweep.csv")
        crossings = {r[columns.index("d")]: r[columns.index("dk_crosses")] for r in rows}
        assert crossings == {"1": "0", "2": "0", "3": "1", "4": "1"}

    def test_check_passes(self, capsys):
        assert parse_and_dispatch(["check"]) == 0
        out = capsys.readouterr().out
        lines = [line for line in out.splitlines() if line.startswith("CHECK")]
        assert len(lines) >= 8
        assert all(": PASS" in line for line in lines)

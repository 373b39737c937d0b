"""End-to-end tests of the command-line interface."""

import json
import math

import numpy as np
import pytest
from scipy.special import zeta

from bosecycles.cli import main
from bosecycles.errors import ContractError


def write_config(tmp_path, name="cfg.json", **cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read_csv(path):
    with open(path) as fh:
        header_comment = fh.readline().strip()
        cols = fh.readline().strip().split(",")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return header_comment, cols, rows


class TestConfigHandling:
    def test_unknown_key_rejected(self, tmp_path):
        cfg = write_config(tmp_path, box={"dim": 3, "side": 4.0}, beta=1.0,
                           n_particles=1, out_dir=str(tmp_path / "o"),
                           bogus=1)
        assert main(["ideal-cycles", "--config", cfg]) == 2

    def test_missing_required_key(self, tmp_path):
        cfg = write_config(tmp_path, box={"dim": 3, "side": 4.0},
                           n_particles=1, out_dir=str(tmp_path / "o"))
        assert main(["ideal-cycles", "--config", cfg]) == 2

    def test_nonexistent_config_file(self, tmp_path):
        assert main(["ideal-cycles", "--config", str(tmp_path / "nope.json")]) == 2

    def test_override_wins_and_is_echoed(self, tmp_path):
        out = tmp_path / "o"
        cfg = write_config(tmp_path, box={"dim": 3, "side": 4.0}, beta=1.0,
                           n_particles=2, out_dir=str(out))
        assert main(["ideal-cycles", "--config", cfg,
                     "--override", "n_particles=3"]) == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["resolved_config"]["n_particles"] == 3
        assert manifest["summary"]["n_particles"] == 3
        assert manifest["code_version"]["source_sha256"]

    def test_bad_override_shape(self, tmp_path):
        cfg = write_config(tmp_path, box={"dim": 3, "side": 4.0}, beta=1.0,
                           n_particles=1, out_dir=str(tmp_path / "o"))
        assert main(["ideal-cycles", "--config", cfg, "--override", "oops"]) == 2


class TestIdealCycles:
    def test_single_particle_row(self, tmp_path):
        out = tmp_path / "run"
        cfg = write_config(tmp_path, box={"dim": 3, "side": 4.0}, beta=1.0,
                           n_particles=1, out_dir=str(out))
        assert main(["ideal-cycles", "--config", cfg]) == 0
        schema, cols, rows = read_csv(out / "cycles.csv")
        assert schema == "# schema=bosecycles.ideal-cycles.v1"
        assert cols == ["n", "density"]
        assert len(rows) == 1
        assert int(rows[0][0]) == 1
        assert float(rows[0][1]) == pytest.approx(1.0 / 64.0, rel=1e-12)

    def test_density_column_sums_to_rho(self, tmp_path):
        out = tmp_path / "run"
        cfg = write_config(tmp_path, box={"dim": 3, "side": 5.0}, beta=1.0,
                           rho=0.1, out_dir=str(out))
        assert main(["ideal-cycles", "--config", cfg]) == 0
        _, _, rows = read_csv(out / "cycles.csv")
        total = sum(float(r[1]) for r in rows)
        n = len(rows)
        assert abs(total / (n / 125.0) - 1.0) < 1e-12

    def test_idempotent_given_seed(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            cfg = write_config(tmp_path, name=f"{name}.json",
                               box={"dim": 3, "side": 4.0}, beta=1.0,
                               n_particles=10, out_dir=str(out))
            assert main(["ideal-cycles", "--config", cfg]) == 0
            outs.append((out / "cycles.csv").read_bytes())
        assert outs[0] == outs[1]


class TestOdlro:
    def test_origin_row_equals_rho(self, tmp_path):
        out = tmp_path / "run"
        cfg = write_config(tmp_path, box={"dim": 3, "side": 5.0}, beta=1.0,
                           n_particles=12, x_grid=[0.0, 1.0, [0.0, 2.0, 0.0]],
                           out_dir=str(out))
        assert main(["odlro", "--config", cfg]) == 0
        _, cols, rows = read_csv(out / "odlro.csv")
        assert cols == ["abs_x", "sigma", "finite_part", "rho_inf_estimate",
                        "residual", "n_cut"]
        assert float(rows[0][1]) == pytest.approx(12.0 / 125.0, rel=1e-12)
        assert float(rows[1][0]) == 1.0
        assert float(rows[2][0]) == 2.0


class TestCondensate:
    def test_rows_within_physical_range(self, tmp_path):
        beta = 1.0
        rho_c = (4 * math.pi * beta) ** -1.5 * zeta(1.5)
        out = tmp_path / "run"
        cfg = write_config(tmp_path, box={"dim": 3, "side": 1.0}, beta=beta,
                           rho=2 * rho_c, l_values=[6.0, 8.0],
                           out_dir=str(out))
        assert main(["condensate", "--config", cfg]) == 0
        _, cols, rows = read_csv(out / "condensate.csv")
        assert cols == ["side", "n_particles", "fraction", "reference"]
        for r in rows:
            frac = float(r[2])
            n, side = int(r[1]), float(r[0])
            assert 0.0 <= frac <= n / side ** 3 + 1e-12
        assert float(rows[0][3]) == pytest.approx(rho_c, rel=1e-12)

    def test_dilute_fraction_decreasing(self, tmp_path):
        beta = 1.0
        rho_c = (4 * math.pi * beta) ** -1.5 * zeta(1.5)
        out = tmp_path / "run"
        cfg = write_config(tmp_path, box={"dim": 3, "side": 1.0}, beta=beta,
                           rho=0.5 * rho_c, l_values=[6.0, 8.0, 10.0],
                           out_dir=str(out))
        assert main(["condensate", "--config", cfg]) == 0
        _, _, rows = read_csv(out / "condensate.csv")
        fracs = [float(r[2]) for r in rows]
        assert fracs[0] > fracs[1] > fracs[2]
        assert all(float(r[3]) == 0.0 for r in rows)


class TestGrand:
    def test_columns_and_identities(self, tmp_path):
        out = tmp_path / "run"
        cfg = write_config(tmp_path, box={"dim": 3, "side": 1.0}, beta=1.0,
                           mu_grid=[-2.0, -1.0, -0.5, -0.1],
                           out_dir=str(out))
        assert main(["grand", "--config", cfg]) == 0
        _, cols, rows = read_csv(out / "grand.csv")
        assert cols == ["mu", "pressure", "density", "cycle_density_sum",
                        "free_energy"]
        dens = [float(r[2]) for r in rows]
        assert all(a < b for a, b in zip(dens, dens[1:]))
        for r in rows:
            assert float(r[3]) == pytest.approx(float(r[2]), abs=1e-10)

    def test_positive_mu_rejected(self, tmp_path):
        cfg = write_config(tmp_path, box={"dim": 3, "side": 1.0}, beta=1.0,
                           mu_grid=[-1.0, 0.5], out_dir=str(tmp_path / "o"))
        assert main(["grand", "--config", cfg]) == 2


class TestPimc:
    def _config(self, tmp_path, out, **mc):
        base = dict(sweeps=300, equilibration=60, beads_per_beta=4, blocks=10)
        base.update(mc)
        return write_config(tmp_path, box={"dim": 3, "side": 4.0}, beta=1.0,
                            n_particles=4, potential={"kind": "zero"},
                            mc=base, seed=5, out_dir=str(out))

    def test_run_outputs_and_chi2(self, tmp_path):
        out = tmp_path / "run"
        cfg = self._config(tmp_path, out)
        assert main(["pimc", "--config", cfg]) == 0
        schema, cols, rows = read_csv(out / "histogram.csv")
        assert cols == ["n", "count_mean", "density", "density_err",
                        "exact_density"]
        assert len(rows) == 4
        manifest = json.loads((out / "manifest.json").read_text())
        assert "chi2" in manifest["summary"]
        assert (out / "checkpoint.json").exists()
        assert (out / "acceptance.csv").exists()

    def test_resume_is_bit_identical(self, tmp_path):
        ref = tmp_path / "ref"
        cfg = self._config(tmp_path, ref)
        assert main(["pimc", "--config", cfg]) == 0

        part = tmp_path / "part"
        cfg_half = write_config(
            tmp_path, name="half.json", box={"dim": 3, "side": 4.0}, beta=1.0,
            n_particles=4, potential={"kind": "zero"},
            mc=dict(sweeps=150, equilibration=60, beads_per_beta=4, blocks=10),
            seed=5, out_dir=str(part))
        assert main(["pimc", "--config", cfg_half]) == 0

        cont = tmp_path / "cont"
        cfg_full = write_config(
            tmp_path, name="full.json", box={"dim": 3, "side": 4.0}, beta=1.0,
            n_particles=4, potential={"kind": "zero"},
            mc=dict(sweeps=300, equilibration=60, beads_per_beta=4, blocks=10),
            seed=5, out_dir=str(cont))
        assert main(["pimc", "--config", cfg_full,
                     "--resume", str(part / "checkpoint.json")]) == 0
        assert (ref / "histogram.csv").read_bytes() == \
            (cont / "histogram.csv").read_bytes()

    def test_seed_change_output_differs(self, tmp_path):
        a_out, b_out = tmp_path / "a", tmp_path / "b"
        cfg_a = self._config(tmp_path, a_out)
        assert main(["pimc", "--config", cfg_a]) == 0
        cfg_b = write_config(
            tmp_path, name="b.json", box={"dim": 3, "side": 4.0}, beta=1.0,
            n_particles=4, potential={"kind": "zero"},
            mc=dict(sweeps=300, equilibration=60, beads_per_beta=4, blocks=10),
            seed=6, out_dir=str(b_out))
        assert main(["pimc", "--config", cfg_b]) == 0
        assert (a_out / "histogram.csv").read_bytes() != \
            (b_out / "histogram.csv").read_bytes()

    def test_strict_escalates_non_ergodic(self, tmp_path):
        out = tmp_path / "run"
        cfg = write_config(
            tmp_path, box={"dim": 3, "side": 30.0}, beta=0.05,
            n_particles=2, potential={"kind": "zero"},
            mc=dict(sweeps=10, equilibration=300, beads_per_beta=4, blocks=2,
                    bridge_moves=1, swap_moves=4, wrap_moves=1),
            seed=1, out_dir=str(out))
        assert main(["pimc", "--config", cfg, "--strict"]) == 4
        assert main(["pimc", "--config", cfg]) == 0


class TestClusterCheck:
    def test_zero_potential_report(self, tmp_path):
        out = tmp_path / "run"
        cfg = write_config(tmp_path, box={"dim": 3, "side": 1.0}, beta=1.0,
                           mu=-1.0, potential={"kind": "zero"},
                           out_dir=str(out))
        assert main(["cluster-check", "--config", cfg]) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["holds"]
        assert rep["lhs"] == 0.0
        assert rep["ratio_bracket_n1"] == [1.0, 1.0]
        # beta = 1: per-volume log Z equals the pressure series
        from bosecycles.grand import pressure
        assert rep["truncated_log_z"]["total"] == pytest.approx(
            pressure(1.0, -1.0, 3), rel=1e-10)

    def test_gaussian_threshold_reported(self, tmp_path):
        out = tmp_path / "run"
        cfg = write_config(tmp_path, box={"dim": 3, "side": 1.0}, beta=1.0,
                           mu=-1.0,
                           potential={"kind": "gaussian", "u0": 1.0, "r": 1.0},
                           mc={"samples": 200}, out_dir=str(out))
        assert main(["cluster-check", "--config", cfg]) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["threshold_mu"] == pytest.approx(-zeta(1.5) / 8.0, rel=1e-10)
        assert rep["holds"]
        assert rep["kp_integral"]["certified_within_budget"]

    def test_low_dimension_inapplicable(self, tmp_path):
        out = tmp_path / "run"
        cfg = write_config(tmp_path, box={"dim": 2, "side": 1.0}, beta=1.0,
                           mu=-1.0,
                           potential={"kind": "gaussian", "u0": 1.0, "r": 1.0},
                           out_dir=str(out))
        assert main(["cluster-check", "--config", cfg]) == 0
        rep = json.loads((out / "report.json").read_text())
        assert rep["series_divergent"]
        assert not rep["holds"]


class TestContractViolationPath:
    def test_contract_error_maps_to_exit_3(self, tmp_path, monkeypatch):
        import bosecycles.cli as cli

        def broken(cfg, out):
            raise ContractError("forced breach")

        monkeypatch.setattr(cli, "cmd_ideal_cycles", broken)
        cfg = write_config(tmp_path, box={"dim": 3, "side": 4.0}, beta=1.0,
                           n_particles=1, out_dir=str(tmp_path / "o"))
        assert cli.main(["ideal-cycles", "--config", cfg]) == 3

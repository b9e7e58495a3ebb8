import csv
import io
import json
import math

import numpy as np
import pytest
from pydantic import ValidationError

from hermite_nodal import config
from hermite_nodal.cli import (ExperimentConfig, build_config, fit_exponent, main, parse_arguments, parse_points,
                               parse_radii)
from hermite_nodal.errors import DomainError
from hermite_nodal.hermite_core import ModelParams
from hermite_nodal.nodal_mc import ComparisonReport


def csv_rows(text):
    lines = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_parse_helpers():
    np.testing.assert_allclose(parse_radii("0.4:1.8:0.1"), 0.4 + 0.1 * np.arange(15))
    np.testing.assert_array_equal(parse_points("0.5,0.3;0.9,-0.2", 2), [[0.5, 0.3], [0.9, -0.2]])
    with pytest.raises(DomainError):
        parse_radii("1:0:0.1")
    with pytest.raises(DomainError):
        parse_points("0.5,0.3,0.1", 2)


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(N=40, radii="0.4:1.8:0.1", grid_spacing=0.01, E=0.7, format="json")
    path = tmp_path / "experiment.env"
    path.write_text(cfg.dump(), encoding="utf-8")
    loaded = ExperimentConfig.load(path)
    assert loaded == cfg
    assert loaded.sha256() == cfg.sha256()
    assert "SEED=%d" % config.MC_SEED in cfg.dump()


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "bad.env"
    path.write_text("N=10\nGRIDSPACING=0.01\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        ExperimentConfig.load(path)


def test_flags_override_config_file(tmp_path):
    path = tmp_path / "experiment.env"
    path.write_text("D=3\nN=30\n", encoding="utf-8")
    cfg = build_config(parse_arguments(["density", "--config", str(path), "--N", "10"]))
    assert cfg.d == 3
    assert cfg.N == 10


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        parse_arguments(["--version"])
    assert info.value.code == 0
    assert config.__version__ in capsys.readouterr().out


def test_density_sweep(capsys):
    assert main(["density", "--d", "2", "--E", "1", "--N", "40", "--radii", "0.4:1.8:0.1"]) == 0
    out = capsys.readouterr().out
    assert out.startswith(f"# hermite_nodal {config.__version__} config-sha256=")
    rows = csv_rows(out)
    assert len(rows) == 15
    order = {"Allowed": 0, "CausticBand": 1, "Forbidden": 2}
    regions = [order[row["region"]] for row in rows]
    assert regions == sorted(regions)
    assert regions[0] == 0 and regions[-1] == 2
    assert all(float(row["F_exact"]) > 0 for row in rows)


def test_origin_request_exits_with_domain_code(capsys):
    assert main(["density", "--N", "40", "--points", "0.01,0"]) == 2
    assert "origin" in capsys.readouterr().err


def test_invalid_config_exits_with_domain_code(capsys):
    assert main(["density", "--N", "-3", "--radii", "0.4:0.5:0.1"]) == 2


def test_kernel_csv_and_json_agree(capsys):
    argv = ["kernel", "--N", "10", "--points", "0.5,0.3;0.9,-0.2", "--method", "both"]
    assert main(argv) == 0
    csv_out = csv_rows(capsys.readouterr().out)
    assert main(argv + ["--format", "json"]) == 0
    document = json.loads(capsys.readouterr().out)
    assert document["provenance"]["version"] == config.__version__
    json_rows = document["data"]["rows"]
    assert len(json_rows) == len(csv_out) == 2
    for from_csv, from_json in zip(csv_out, json_rows):
        for column in ("exact", "mehler", "residual", "alias_bound"):
            assert float(from_csv[column]) == from_json[column]
        assert from_json["residual"] < 1e-10


def test_kernel_ground_state(capsys):
    assert main(["kernel", "--d", "1", "--N", "0", "--E", "0.5", "--points", "0.7"]) == 0
    row = csv_rows(capsys.readouterr().out)[0]
    expected = math.pi ** -0.5 * math.exp(-0.49)
    assert float(row["exact"]) == pytest.approx(expected, rel=1e-13)
    assert float(row["mehler"]) == pytest.approx(expected, rel=1e-10)


def test_kernel_off_diagonal(capsys):
    assert main(["kernel", "--N", "10", "--points", "0.5,0.3", "--partners", "0.1,0.8"]) == 0
    row = csv_rows(capsys.readouterr().out)[0]
    assert set(row) >= {"y_1", "y_2"}
    assert float(row["mehler"]) == pytest.approx(float(row["exact"]), rel=1e-9, abs=1e-12)


def test_sample_is_byte_identical(tmp_path, capsys):
    out = tmp_path / "field.bin"
    argv = ["sample", "--N", "6", "--seed", "7", "--extent", "1", "--grid-spacing", "0.05", "--out", str(out)]
    snapshots = []
    for _ in range(2):
        assert main(argv) == 0
        snapshots.append((out.read_bytes(), out.with_suffix(".grid.csv").read_bytes()))
    assert snapshots[0] == snapshots[1]
    assert len(snapshots[0][0]) == 24 + 8 * 7
    assert capsys.readouterr().out == ""


def test_mc_report_schema(capsys):
    argv = ["mc", "--N", "20", "--center", "0.8,0", "--radius", "0.2", "--samples", "4",
            "--quad-order", "4", "--workers", "2"]
    assert main(argv) == 0
    document = json.loads(capsys.readouterr().out)
    report = ComparisonReport.model_validate(document["data"])
    assert "z_score" in document["data"]
    assert report.mc.n_samples == 4
    assert report.params.N == 20


def test_compare_table(capsys):
    argv = ["compare", "--N", "20", "--centers", "0.8,0;0,0.8", "--radius", "0.2", "--samples", "3",
            "--quad-order", "4"]
    assert main(argv) == 0
    rows = csv_rows(capsys.readouterr().out)
    assert len(rows) == 2
    # the isotropic ensemble gives the same exact integral on both balls
    assert float(rows[0]["kacrice_exact"]) == pytest.approx(float(rows[1]["kacrice_exact"]), rel=1e-8)


def test_fit_exponent():
    hs = np.array([0.1, 0.05, 0.025])
    assert fit_exponent(hs, 3.0 * hs ** -1.0) == pytest.approx(-1.0)
    assert fit_exponent(hs, 2.0 * hs ** -0.5) == pytest.approx(-0.5)


def test_sweep_keeps_dimension_and_energy(capsys):
    assert main(["sweep", "--E", "2", "--levels", "40,42", "--points", "0.8,0.1"]) == 0
    rows = csv_rows(capsys.readouterr().out)
    assert [int(row["N"]) for row in rows] == [40, 42]
    for row in rows:
        assert float(row["h"]) == ModelParams(d=2, E=2.0, N=int(row["N"])).h


@pytest.mark.slow
def test_sweep_exponents(capsys):
    assert main(["sweep", "--levels", "20,30,40,50,60,70,80", "--points", "0.8,0;1.8,0", "--format", "json"]) == 0
    fits = {float(r): slope for r, slope in json.loads(capsys.readouterr().out)["data"]["fits"].items()}
    assert fits[0.8] == pytest.approx(-1.0, abs=0.1)
    assert fits[1.8] == pytest.approx(-0.5, abs=0.1)

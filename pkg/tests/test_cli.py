import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neumannlab import cli, geom

property_test = pytest.mark.property

SPECTRUM = {
    "domain": "square",
    "experiment": {"kind": "spectrum"},
    "ladder": {"source": "solver", "k_range": [3.0, 6.5], "resolution": 0.05},
    "solver": {"nodes_per_wavelength": 10},
    "output": "spec",
}

NONCONC = {
    "domain": "square",
    "experiment": {"kind": "nonconcentration", "center": "corner:0", "deltas": [0.5]},
    "ladder": {"source": "oracle", "family": "square", "indices": [[m, 0] for m in (10, 14, 20, 28, 40)]},
    "output": "nc",
}


def _strip_time(path):
    rep = json.loads(path.read_text())
    rep.pop("timestamp")
    return rep


# --- parsing ----------------------------------------------------------------


def test_minimal_config_gets_defaults(tmp_path):
    cfg = cli.parse_config('{"domain": "square", "experiment": {"kind": "restriction"}, "ladder": {"k_range": [10, 20]}}', tmp_path)
    assert cfg.experiment["delta"] == 0.5 and cfg.experiment["exponent"] == 0.25
    assert cfg.solver["nodes_per_wavelength"] == 12.0
    assert cfg.ladder["source"] == "solver" and cfg.ladder["resolution"] == 0.05
    assert cfg.parallelism == 1 and cfg.output == "out"


def test_delta_out_of_range(tmp_path):
    doc = json.dumps({"domain": "square", "experiment": {"kind": "restriction", "delta": 1.2}, "ladder": {"k_range": [10, 20]}})
    with pytest.raises(cli.ValidationError) as info:
        cli.parse_config(doc, tmp_path)
    assert info.value.field == "delta"


def test_missing_domain_file(tmp_path):
    doc = json.dumps({"domain": "nowhere.json", "experiment": {"kind": "spectrum"}, "ladder": {"k_range": [1, 2]}})
    with pytest.raises(cli.ValidationError) as info:
        cli.parse_config(doc, tmp_path)
    assert info.value.field == "domain"


def test_parse_error_position(tmp_path):
    with pytest.raises(cli.ParseError) as info:
        cli.parse_config('{\n  "domain": "square",\n  "experiment": ,\n}', tmp_path)
    assert (info.value.line, info.value.column) == (3, 17)


def test_unknown_field_rejected(tmp_path):
    with pytest.raises(cli.ValidationError) as info:
        cli.parse_config('{"domain": "square", "experiment": "spectrum", "colour": 1}', tmp_path)
    assert info.value.field == "colour"


def test_domain_file_and_inline(tmp_path):
    path = tmp_path / "sq.json"
    path.write_text(json.dumps(geom.unit_square().to_config()))
    a = cli.parse_config(json.dumps({**SPECTRUM, "domain": "sq.json"}), tmp_path)
    b = cli.parse_config(json.dumps(SPECTRUM), tmp_path)
    assert a.config_hash == b.config_hash


def test_hash_ignores_formatting_and_output(tmp_path):
    a = cli.parse_config(json.dumps(SPECTRUM), tmp_path)
    b = cli.parse_config(json.dumps({**SPECTRUM, "output": "elsewhere", "parallelism": 4}, indent=4), tmp_path)
    assert a.config_hash == b.config_hash


@property_test
@settings(max_examples=15)
@given(st.floats(0.0, 0.99), st.floats(0.0, 0.99))
def test_hash_tracks_semantic_fields(d1, d2):
    def h(d):
        doc = {**NONCONC, "experiment": {"kind": "nonconcentration", "deltas": [d]}}
        return cli.parse_config(json.dumps(doc)).config_hash

    assert (h(d1) == h(d2)) == (d1 == d2)


# --- runs -------------------------------------------------------------------


def _run(tmp_path, doc):
    cfg = cli.parse_config(json.dumps(doc), tmp_path)
    assert cli.run(cfg) == 0
    return tmp_path / doc["output"]


def test_spectrum_run_matches_oracle(tmp_path):
    out = _run(tmp_path, SPECTRUM)
    rep = json.loads((out / "report.json").read_text())
    assert rep["spectrum"]["verdict"] == "PASS"
    assert rep["spectrum"]["eigenvalues"][0] == pytest.approx(math.pi, rel=1e-6)
    assert (out / "curves.csv").read_text().startswith("experiment,series,k,h,value,label")


def test_rerun_identical_and_resume(tmp_path):
    out = _run(tmp_path, SPECTRUM)
    first = _strip_time(out / "report.json")
    assert _strip_time(_run(tmp_path, SPECTRUM) / "report.json") == first

    # drop the report record as if the run had been killed after solving
    ledger = out / "modes.jsonl"
    lines = [ln for ln in ledger.read_text().splitlines() if json.loads(ln)["type"] != "report"]
    ledger.write_text("\n".join(lines) + "\n")
    again = _strip_time(_run(tmp_path, SPECTRUM) / "report.json")
    assert again["ledger"]["solved"] == 0 and again["ledger"]["reused"] == first["ledger"]["solved"]
    assert again["spectrum"] == first["spectrum"]


def test_lock_held(tmp_path):
    out = tmp_path / "spec"
    out.mkdir()
    (out / ".lock").write_text("1")
    cfg = cli.parse_config(json.dumps(SPECTRUM), tmp_path)
    assert cli.run(cfg) == 1
    assert json.loads((out / "error.json").read_text())["error"] == "LockHeld"


def test_export_plots_nonconcentration(tmp_path):
    out = _run(tmp_path, NONCONC)
    files = cli.export_plots(out / "report.json", tmp_path / "plots")
    dat = [f for f in files if f.suffix == ".dat"]
    assert dat and (tmp_path / "plots" / "plots.txt").exists()
    body = dat[0].read_text().splitlines()
    assert "# log10_h log10_value" in body
    rows = [tuple(map(float, ln.split())) for ln in body if not ln.startswith("#")]
    assert len(rows) == 5 and all(h < 0 for h, _ in rows)


def test_export_plots_transfer(tmp_path):
    doc = {"domain": "square", "experiment": {"kind": "transfer_scaling", "hs": [1 / 20, 1 / 30, 1 / 45, 1 / 65]}, "output": "tr"}
    out = _run(tmp_path, doc)
    files = cli.export_plots(out / "report.json")
    assert any(f.name.endswith(".dat") for f in files)


def test_export_missing_report(tmp_path):
    with pytest.raises(cli.MissingReport):
        cli.export_plots(tmp_path / "report.json")


# --- subcommands ------------------------------------------------------------


def test_geom_check(capsys):
    assert cli.main(["geom", "check", "semi-ellipse"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert "corners" in json.dumps(out)


def test_unknown_domain_is_clean_error(capsys):
    assert cli.main(["geom", "check", "no-such-domain"]) == 2
    assert "error" in json.loads(capsys.readouterr().out)


def test_eig_refine_appends(tmp_path, capsys):
    assert cli.main(["eig", "refine", "--domain", "square", "--bracket", "3.1", "3.2", "--npw", "10", "--out", str(tmp_path)]) == 0
    recs = [json.loads(ln) for ln in (tmp_path / "modes.jsonl").read_text().splitlines()]
    assert recs and abs(recs[-1]["payload"]["k"] - math.pi) < 1e-6


def test_scale_run_subcommand(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps(NONCONC))
    assert cli.main(["scale", "run", str(cfg)]) == 0
    assert (tmp_path / "nc" / "report.json").exists()

import json
import shutil

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsdi import cli
from nsdi.config import (
    ConfigError,
    RunConfig,
    emit_config,
    header_lines,
    load_config,
    parse_config,
    resolve_workers,
    validate,
)
from nsdi.groundstate import save_ground_state
from nsdi.potentials import SoftCoreParams
from nsdi.yields import read_sweep_table

DESK = ["--n-points", "192", "--dx", "0.8"]
SHORT_PULSE = ["--omega", "0.5", "--n-c", "1"]


# configuration ---------------------------------------------------------------

floats = st.floats(0.001, 10.0, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(
    F0=st.lists(floats, min_size=1, max_size=4).map(tuple),
    n_c=st.lists(st.integers(1, 12), min_size=1, max_size=3).map(tuple),
    dx=floats,
    soften=st.booleans(),
    gauge=st.sampled_from(["length", "velocity"]),
    output=st.text("abcxyz_/", min_size=1, max_size=10),
)
def test_emit_parse_round_trip(F0, n_c, dx, soften, gauge, output):
    cfg = RunConfig().with_values({"pulse.F0": F0, "pulse.n_c": n_c, "grid.dx": dx,
                                   "potential.soften_repulsion": soften, "yields.gauge": gauge,
                                   "run.output": output})
    assert parse_config(emit_config(cfg)) == cfg


def test_header_lines_reparse_to_physical_config():
    cfg = RunConfig().with_values({"pulse.F0": "0.1,0.2", "run.output": "elsewhere"})
    text = "\n".join("# " + line for line in header_lines(cfg, "yields", "0.1.0")) + "\n0.1 0.2 0.3\n"
    back = parse_config("\n".join(line for line in text.splitlines() if line.startswith("#")))
    assert back.pulse == cfg.pulse
    assert back.run.output == RunConfig().run.output
    assert back.digest() == cfg.digest()


def test_ranges_and_lists():
    cfg = RunConfig().with_values({"pulse.F0": "0.1:0.3:0.05", "pulse.n_c": "2,5"})
    assert cfg.pulse.F0 == (0.1, 0.15, 0.2, 0.25, 0.3)
    assert cfg.pulse.n_c == (2, 5)
    assert len(cfg.pulse_points()) == 10
    for bad in ("0.3:0.1:0.1", "0.1:0.3", "0.1:0.3:0", ""):
        with pytest.raises(ConfigError):
            RunConfig().with_values({"pulse.F0": bad})


def test_zip_and_phi_count():
    cfg = RunConfig().with_values({"pulse.omega": "0.06,0.12", "pulse.n_c": "2,4", "pulse.zip": "true",
                                   "pulse.phi_count": "4"})
    pts = cfg.pulse_points()
    assert {(w, n) for _, w, n, _ in pts} == {(0.06, 2), (0.12, 4)}
    assert len(pts) == 8 and pts[1][3] == pytest.approx(np.pi / 2)
    with pytest.raises(ConfigError):
        cfg.with_values({"pulse.n_c": "2"}).pulse_points()


def test_unknown_keys_and_bad_values():
    with pytest.raises(ConfigError):
        RunConfig().with_values({"grid.size": "3"})
    with pytest.raises(ConfigError):
        RunConfig().with_values({"nosection": "3"})
    with pytest.raises(ConfigError):
        RunConfig().with_values({"grid.n_points": "many"})
    with pytest.raises(ConfigError):
        parse_config("grid.dx 0.3")


def test_digest_ignores_output_location():
    a = RunConfig()
    assert a.digest() == a.with_values({"run.output": "x", "run.workers": 4}).digest()
    assert a.digest() != a.with_values({"grid.dx": 0.31}).digest()
    assert len(a.digest()) == 16


def test_workers_environment_override(monkeypatch):
    cfg = RunConfig().with_values({"run.workers": 3})
    monkeypatch.delenv("NSDI_WORKERS", raising=False)
    assert resolve_workers(cfg) == 3
    monkeypatch.setenv("NSDI_WORKERS", "2")
    assert resolve_workers(cfg) == 2
    monkeypatch.setenv("NSDI_WORKERS", "lots")
    with pytest.raises(ConfigError):
        resolve_workers(cfg)


@pytest.mark.parametrize("key,value,command", [
    ("grid.n_points", "7", "ground"),
    ("grid.dx", "-0.3", "ground"),
    ("absorber.x0_fraction", "0.5", "ground"),
    ("yields.gauge", "coulomb", "ground"),
    ("rates.eta", "1.5", "rates"),
    ("partition.b", "5", "ground"),
    ("pulse.n_c", "0", "rates"),
    ("grid.n_points", "256", "yields"),
    ("pulse.omega", "0.02", "yields"),
    ("partition.b", "200", "yields"),
    ("momenta.r_cut", "160", "momenta"),
])
def test_validation_rejects(key, value, command):
    with pytest.raises(ConfigError):
        validate(RunConfig().with_values({key: value}), command)


def test_defaults_validate_for_every_command():
    for command in ("ground", "yields", "momenta", "ionmom", "rates"):
        validate(RunConfig(), command)


def test_load_config_with_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\ngrid.n_points = 256\npulse.F0 = 0.1, 0.2\n")
    cfg = load_config(path, {"grid.dx": "0.5"})
    assert cfg.grid.n_points == 256 and cfg.grid.dx == 0.5 and cfg.pulse.F0 == (0.1, 0.2)


# command line -----------------------------------------------------------------

def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


def test_validation_failure_exit_code(capsys, tmp_path):
    code = cli.main(["yields", "--n-points", "128", "--dx", "0.3", "-o", str(tmp_path)])
    assert code == 2
    msg = error_line(capsys)
    assert msg["status"] == "error" and msg["code"] == 2 and msg["kind"] == "validation"
    assert "half-width" in msg["message"]


def test_bad_override_syntax(capsys):
    assert cli.main(["rates", "--set", "rates.eta"]) == 2
    assert error_line(capsys)["kind"] == "validation"


def test_mismatched_ground_state_rejected(capsys, tmp_path, small_ground):
    psi, energy = small_ground
    path = tmp_path / "gs.dump"
    save_ground_state(path, psi, energy, SoftCoreParams())
    code = cli.main(["yields", *DESK, *SHORT_PULSE, "--ground", str(path), "-o", str(tmp_path / "o")])
    assert code == 2
    assert "different grid" in error_line(capsys)["message"]


def test_rates_command_and_summary(tmp_path):
    out = tmp_path / "rates"
    code = cli.main(["rates", "--omega", "0.0584,0.094", "--n-c", "5", "--F0", "0.1:0.5:0.02", "-o", str(out)])
    assert code == 0
    lines = (out / "rates_summary.txt").read_text().splitlines()
    assert lines[0].startswith("# omega n_c phi T_p")
    assert len(lines) == 3
    for line in lines[1:]:
        parts = line.split()
        table = read_sweep_table(out / parts[4])
        assert table["F0"].size == 21
        assert float(parts[5]) < float(parts[7])
        assert parts[6] == "true" and parts[8] == "true"
    text = (out / parts[4]).read_text()
    assert "# command: rates" in text
    assert parse_config(text.split("# F0 SI")[0]).pulse.omega == (0.094,)


def test_rates_sweep_is_independent_of_worker_count(tmp_path, monkeypatch):
    monkeypatch.delenv("NSDI_WORKERS", raising=False)
    args = ["--omega", "0.06,0.094,0.12", "--n-c", "2,5", "--F0", "0.1:0.5:0.05"]
    assert cli.main(["sweep", "rates", *args, "-j", "1", "-o", str(tmp_path / "a")]) == 0
    assert cli.main(["sweep", "rates", *args, "-j", "3", "-o", str(tmp_path / "b")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").glob("*.txt"))
    assert names == sorted(p.name for p in (tmp_path / "b").glob("*.txt"))
    assert len(names) == 8
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.fixture
def desk_out(tmp_path, desk_grid_ground):
    psi, energy = desk_grid_ground
    out = tmp_path / "run"
    out.mkdir()
    save_ground_state(out / "ground_state.dump", psi, energy, SoftCoreParams())
    return out


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_yields_sweep_is_independent_of_worker_count(desk_out, monkeypatch):
    monkeypatch.delenv("NSDI_WORKERS", raising=False)
    other = desk_out.parent / "run2"
    shutil.copytree(desk_out, other)
    args = [*DESK, *SHORT_PULSE, "--F0", "0.2,0.3,0.4", "--dt", "0.1"]
    assert cli.main(["sweep", "yields", *args, "-j", "1", "-o", str(desk_out)]) == 0
    monkeypatch.setenv("NSDI_WORKERS", "3")
    assert cli.main(["sweep", "yields", *args, "-j", "1", "-o", str(other)]) == 0
    for name in ["yields_summary.txt", "status.txt"] + [p.name for p in desk_out.glob("yields_*.txt")]:
        assert (desk_out / name).read_bytes() == (other / name).read_bytes(), name
    points = sorted(p.name for p in (desk_out / "points").iterdir())
    assert len(points) == 3
    assert points == sorted(p.name for p in (other / "points").iterdir())
    table = next(desk_out.glob("yields_*.txt"))
    if table.name == "yields_summary.txt":
        table = sorted(desk_out.glob("yields_*.txt"))[0]
    rows = read_sweep_table(table)
    assert np.all(np.diff(rows["P_ion"]) > 0)
    meta = json.loads((desk_out / "yields_run.json").read_text())
    assert meta["command"] == "yields" and len(meta["points"]) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_momenta_and_ionmom_commands(desk_out):
    args = [*DESK, *SHORT_PULSE, "--F0", "0.3", "--phi-count", "2", "-o", str(desk_out)]
    assert cli.main(["ionmom", *args]) == 0
    index = (desk_out / "momenta_index.txt").read_text().splitlines()
    assert len(index) == 3
    label = index[1].split()[4]
    assert (desk_out / "momenta" / f"{label}.dump").exists()
    assert (desk_out / "ionmom" / f"{label}.txt").exists()
    cep = list((desk_out / "ionmom").glob("cep_*.txt"))
    assert len(cep) == 1
    assert "cep_samples: 2" in cep[0].read_text()
    # a rerun reuses the stored distributions
    stamp = (desk_out / "momenta" / f"{label}.dump").stat().st_mtime_ns
    assert cli.main(["momenta", *args]) == 0
    assert (desk_out / "momenta" / f"{label}.dump").stat().st_mtime_ns == stamp


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_ground_command(tmp_path, capsys):
    out = tmp_path / "g"
    assert cli.main(["ground", "--n-points", "48", "--dx", "0.6", "-o", str(out)]) == 0
    summary = json.loads((out / "ground_summary.json").read_text())
    assert summary["E_g"] < -2.5
    assert 0.5 < summary["E_I"] < 1.5 and summary["E_I_ion"] == pytest.approx(1.85, abs=0.05)
    assert "E_g =" in capsys.readouterr().out
    assert (out / "ground_state.dump").exists()


def test_output_table_reused_as_config(tmp_path):
    from nsdi.yields import write_sweep_table

    cfg = RunConfig().with_values({"pulse.F0": "0.2,0.3", "grid.dx": "0.35"})
    path = tmp_path / "table.txt"
    write_sweep_table(path, [[0.2, 1, 2, 3, 4, 5], [0.3, 1, 2, 3, 4, 5]], header_lines(cfg, "yields", "0.1.0"))
    back = load_config(path)
    assert back.digest() == cfg.digest()

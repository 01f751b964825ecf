from __future__ import annotations

import csv
import json
import logging
import subprocess
import sys

import pytest

from maxlab import cli


def _write(tmp_path, text: str, name: str = "run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


SMALL_2D = "[grid]\nn = 32\n[run]\nT = 0.5\n"


def test_check_symbols_default_config(tmp_path):
    out = tmp_path / "sym"
    assert cli.main(["check-symbols", "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "residuals.csv")))
    assert len(rows) == 16
    assert all(float(r["max_residual"]) <= 1e-10 for r in rows)
    ids = {r["identity"]: r for r in csv.DictReader(open(out / "identities.csv"))}
    assert ids["adjugate"]["holds_1e-12"] == "true"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "pass"
    assert set(manifest["outputs"]) == {"identities.csv", "residuals.csv"}


def test_unknown_key_is_named(tmp_path, capsys):
    cfg = _write(tmp_path, "[grid]\nn = 32\nbogus = 1\nworse = 2\n")
    assert cli.main(["linear2d", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "bogus" in capsys.readouterr().err


def test_unknown_section_and_bad_value(tmp_path, capsys):
    cfg = _write(tmp_path, "[plots]\nwidth = 3\n")
    assert cli.main(["linear2d", "--config", cfg, "--out", str(tmp_path / "a")]) == 2
    assert "[plots]" in capsys.readouterr().err
    cfg = _write(tmp_path, "[grid]\nn = many\n", "b.ini")
    assert cli.main(["linear2d", "--config", cfg, "--out", str(tmp_path / "b")]) == 2
    assert "'n'" in capsys.readouterr().err


def test_inline_comments_are_stripped(tmp_path):
    cfg = _write(tmp_path, "[grid]\nn = 48   ; points per axis\n[run]\nintegrator = rk4  # or leapfrog\n")
    c = cli.load_config(cfg, "linear2d")
    assert c["grid"]["n"] == 48
    assert c["run"]["integrator"] == "rk4"


def test_malformed_file(tmp_path):
    cfg = _write(tmp_path, "n = 32\n")
    assert cli.main(["linear2d", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("cmd,text", [
    ("linear2d", "[grid]\ndim = 3\n"),
    ("linear3d", "[run]\nnonlinearity = kerr2d\n"),
    ("kerr2d", "[run]\nnonlinearity = none\n"),
    ("kerr2d", "[coefficients]\npreset = smooth\n[grid]\nn = 16\n"),
])
def test_dimension_and_nonlinearity_mismatch(tmp_path, cmd, text):
    cfg = _write(tmp_path, text)
    assert cli.main([cmd, "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_output_collision_needs_force(tmp_path):
    cfg = _write(tmp_path, SMALL_2D)
    out = str(tmp_path / "o")
    assert cli.main(["linear2d", "--config", cfg, "--out", out]) == 0
    assert cli.main(["linear2d", "--config", cfg, "--out", out]) == 2
    assert cli.main(["linear2d", "--config", cfg, "--out", out, "--force"]) == 0


def test_linear2d_standing_wave_energy_column(tmp_path):
    cfg = _write(tmp_path, "[grid]\nn = 64\n[run]\nsnapshot_every = 10\n")
    out = tmp_path / "o"
    assert cli.main(["linear2d", "--config", cfg, "--out", str(out), "--preset", "standing-wave"]) == 0
    rows = list(csv.DictReader(open(out / "norms.csv")))
    energy = [float(r["energy"]) for r in rows]
    assert max(abs(e - energy[0]) for e in energy) <= 1e-9 * abs(energy[0])
    assert float(rows[-1]["time"]) == pytest.approx(1.0)
    snaps = sorted(p.name for p in (out / "snapshots").iterdir())
    assert "t_0.bin" in snaps and "t_10.bin" in snaps


def test_fixed_seed_gives_identical_outputs(tmp_path):
    cfg = _write(tmp_path, SMALL_2D)
    hashes = []
    for name in ("a", "b"):
        assert cli.main(["linear2d", "--config", cfg, "--out", str(tmp_path / name), "--seed", "5"]) == 0
        hashes.append(json.loads((tmp_path / name / "manifest.json").read_text())["outputs"])
    assert hashes[0] == hashes[1]
    assert (tmp_path / "a" / "norms.csv").read_bytes() == (tmp_path / "b" / "norms.csv").read_bytes()


def test_manifest_hashes_are_git_blob_hashes(tmp_path):
    cfg = _write(tmp_path, SMALL_2D)
    out = tmp_path / "o"
    cli.main(["linear2d", "--config", cfg, "--out", str(out)])
    m = json.loads((out / "manifest.json").read_text())
    data = (out / "norms.csv").read_bytes()
    assert m["outputs"]["norms.csv"] == cli.git_blob_hash(data)
    assert m["version"] and m["config"]["grid"]["n"] == 32
    assert "wall_seconds" in m["timings"]


def test_git_blob_hash_matches_git_hash_object():
    # reference values from `git hash-object`
    assert cli.git_blob_hash(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"
    assert cli.git_blob_hash(b"a,b\n1,2\n") == "cfa20f81071245f292f0b52b37beb7adf9259a26"


def test_invariant_violation_exits_3(tmp_path):
    cfg = _write(tmp_path, "[cylinder]\nn = 32\nn3 = 64\nT = 0.5\nsamples = 4\n")
    assert cli.main(["cyl-consistency", "--config", cfg, "--out", str(tmp_path / "o")]) == 3
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["status"] == "violation" and m["violations"]


def test_kerr2d_small(tmp_path):
    cfg = _write(tmp_path, SMALL_2D)
    out = tmp_path / "o"
    assert cli.main(["kerr2d", "--config", cfg, "--out", str(out)]) == 0
    res = json.loads((out / "manifest.json").read_text())["results"]
    assert res["convergence"]["ratio"] == pytest.approx(4.0, rel=0.15)
    assert (out / "bootstrap.csv").exists()


@pytest.mark.parametrize("cmd,text,files", [
    ("check-compat", "", {"compat.csv"}),
    ("check-helmholtz", "[helmholtz]\nn = 8\ncount = 5\ntorus_count = 5\n", {"helmholtz.csv"}),
    ("check-envelopes", "[envelopes]\nn = 128\ncommutator_lams = 8 16\nenvelope_n = 64\n",
     {"commutator.csv", "envelope.csv", "band_energy.csv", "mollifier.csv"}),
    ("strichartz-sweep", "[sweep]\nseeds = 2\nlams = 4\nrefinements = 2 3\nT = 0.25\n", {"sweep.csv", "summary.json"}),
])
def test_check_subcommands(tmp_path, cmd, text, files):
    cfg = _write(tmp_path, text or "\n")
    out = tmp_path / "o"
    assert cli.main([cmd, "--config", cfg, "--out", str(out), "--workers", "1"]) == 0
    assert files <= set(json.loads((out / "manifest.json").read_text())["outputs"])


def test_every_schema_key_is_documented():
    for keys in cli.SCHEMA.values():
        for key in keys.values():
            assert key.doc


def test_log_level_from_environment(monkeypatch):
    monkeypatch.setenv("MAXLAB_LOG", "DEBUG")
    logging.getLogger().handlers.clear()
    cli._setup_logging()
    assert logging.getLogger().level == logging.DEBUG


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "maxlab.cli", "check-compat", "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "pass" in proc.stdout

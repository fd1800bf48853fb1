import json
import subprocess


def run(cli, *args, cwd=None):
    return subprocess.run([str(cli), *args], capture_output=True, text=True, cwd=cwd)


def write_config(tmp_path, **overrides):
    config = {"preset": "desk", "dataset": "law", "source_rows": 300, "synthetic_rows": 200, "seeds": [1]}
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


def test_missing_csv_exits_2_with_path(cli, tmp_path):
    missing = tmp_path / "nowhere" / "law.csv"
    schema = tmp_path / "law.schema.json"
    assert run(cli, "simulate", "--rows", "5", "--out", str(tmp_path)).returncode == 0
    config = write_config(tmp_path, data_path=str(missing), schema_path=str(schema))
    r = run(cli, "prepare", "--config", str(config), "--out", str(tmp_path / "out"))
    assert r.returncode == 2
    assert str(missing) in r.stderr


def test_missing_config_exits_2(cli, tmp_path):
    r = run(cli, "run", "--config", str(tmp_path / "absent.json"))
    assert r.returncode == 2
    assert "absent.json" in r.stderr


def test_bad_flag_exits_2(cli):
    assert run(cli, "run", "--preset", "enormous").returncode == 2
    assert run(cli, "run", "--seed", "1,x").returncode == 2


def test_prepare_is_deterministic(cli, tmp_path):
    config = write_config(tmp_path, seeds=[1, 2])
    for name in ("a", "b"):
        assert run(cli, "prepare", "--config", str(config), "--out", str(tmp_path / name)).returncode == 0
    for seed in (1, 2):
        a = (tmp_path / "a" / f"seed-{seed}" / "split.json").read_bytes()
        b = (tmp_path / "b" / f"seed-{seed}" / "split.json").read_bytes()
        assert a == b
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert "seed-2/split.json" in manifest["artifacts"]


def test_synthesize_counts(cli, tmp_path):
    config = write_config(tmp_path, synthetic_rows=2000)
    r = run(cli, "synthesize", "--config", str(config), "--epochs", "2", "--out", str(tmp_path / "s"))
    assert r.returncode == 0, r.stderr
    assert "2000 rows, 6000 counterfactual records" in r.stdout
    cf = (tmp_path / "s" / "seed-1" / "counterfactuals.csv").read_text().splitlines()
    assert len([line for line in cf if not line.startswith("#")]) == 1 + 6000


def test_run_and_report(cli, tmp_path):
    config = write_config(tmp_path)
    out = tmp_path / "r"
    r = run(cli, "run", "--config", str(config), "--epochs", "2", "--out", str(out))
    assert r.returncode == 0, r.stderr
    rows = (out / "table_law.csv").read_text().splitlines()
    assert len(rows) == 6
    assert rows[1].startswith("Constant,") and ",0.000±0.000,0.000±0.000," in rows[1]
    report = run(cli, "report", "--out", str(out))
    assert report.returncode == 0
    assert report.stdout == (out / "table_law.csv").read_text()


def test_bounds_verb(cli, tmp_path):
    r = run(cli, "bounds", "--out", str(tmp_path))
    assert r.returncode == 0
    lines = [line for line in r.stdout.splitlines() if not line.startswith("config ")]
    assert lines[0].startswith("label,")
    assert lines[1].startswith("unit,")
    assert len(lines) == 1 + 2 + 20

import csv
import io
import json

import pytest

from treerange.__main__ import main
from treerange.errors import ConfigError, ValidationError
from treerange.harness import BRW_HEADER, HEADER, ExperimentConfig, load_config, run, verify


def _read(path):
    text = path.read_text(encoding="utf-8")
    assert "\r" not in text
    return list(csv.reader(io.StringIO(text)))


def _strip_elapsed(rows):
    return [r[:-1] for r in rows]


def test_header_and_single_rep_warning(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["infinite-range", "--dim", "5", "--n", "500", "--reps", "1", "--seed", "3", "--out", str(out)]) == 0
    rows = _read(out)
    assert rows[0] == HEADER
    assert rows[1][7] == "0.0"
    assert "single replica" in json.loads(rows[1][8])["warning"]


def test_worker_count_invariance(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["snake-excursion", "--dim", "4", "--n", "300", "--reps", "12", "--seed", "21"]
    assert main(args + ["--workers", "1", "--out", str(a)]) == 0
    assert main(args + ["--workers", "3", "--out", str(b)]) == 0
    assert _strip_elapsed(_read(a)) == _strip_elapsed(_read(b))


def test_seed_env_override(tmp_path, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    monkeypatch.setenv("TREERANGE_SEED", "77")
    main(["snake-excursion", "--n", "50", "--reps", "5", "--seed", "1", "--out", str(a)])
    main(["snake-excursion", "--n", "50", "--reps", "5", "--seed", "2", "--out", str(b)])
    ra, rb = _read(a), _read(b)
    assert ra[1][5] == "77"
    assert _strip_elapsed(ra) == _strip_elapsed(rb)


def test_unknown_key_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"experiment": "green", "dim": 4, "rpes": 3}))
    assert main(["green", "--config", str(cfg)]) == 2
    assert "rpes" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "nope"})


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["nope"])
    assert exc.value.code == 2


def test_validation_errors():
    assert main(["infinite-range", "--n", "1"]) == 2
    assert main(["green", "--dim", "2"]) == 2
    with pytest.raises(ValidationError):
        run(ExperimentConfig("brw", reps=3))


def test_config_file_roundtrip(tmp_path):
    cfg = tmp_path / "c.json"
    out = tmp_path / "o.csv"
    cfg.write_text(json.dumps({"experiment": "head-return-exact", "dim": 4, "n": 2, "options": {"exact": True},
                               "out": str(out)}))
    assert main(["head-return-exact", "--config", str(cfg)]) == 0
    rows = _read(out)
    assert json.loads(rows[1][8])["fraction"] == "11/32"
    assert load_config(cfg).n == 2


def test_brw_csv(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["brw", "--dim", "5", "--p", "3", "--reps", "4", "--seed", "7", "--out", str(out)]) == 0
    rows = _read(out)
    assert rows[0] == BRW_HEADER
    assert len(rows) == 5
    for r in rows[1:]:
        assert int(r[3]) <= int(r[4])


def test_green_cli(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["green", "--x", "1,0,0,0", "--eps", "1e-6", "--out", str(out)]) == 0
    rows = _read(out)
    assert float(rows[1][6]) == pytest.approx(0.2394671218, rel=1e-8)


def test_verify_fast_and_negative_control():
    res = {r.check: r for r in verify("fast")}
    assert all(r.passed for r in res.values()), {k: v.detail for k, v in res.items() if not v.passed}
    bad = {r.check: r for r in verify("fast", corrupt_green=True)}
    assert not bad["green_harmonic"].passed
    assert all(r.passed for k, r in bad.items() if k != "green_harmonic")


def test_verify_exit_code(tmp_path):
    assert main(["verify", "--corrupt-green", "--out", str(tmp_path / "v.csv")]) == 1

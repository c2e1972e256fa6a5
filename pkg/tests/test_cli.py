import csv
import io
import json
import math
import subprocess
import sys

import pytest

from bykov.cli import main
from bykov.config import DEFAULTS, parse_config
from bykov.errors import InvariantViolation, ParseError, UnknownKey


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_empty_config_gives_defaults():
    cfg = parse_config(text="")
    assert cfg.values == DEFAULTS
    assert cfg.model.dc.delta == 4 and cfg.model.dc.K == 3


def test_config_overrides_and_comments():
    cfg = parse_config(text="# geometry\ntau = 0.05   # narrower windows\n\n")
    assert cfg.values["tau"] == 0.05 and cfg.model.geom.tau == 0.05


def test_config_errors(tmp_path):
    with pytest.raises(InvariantViolation):
        parse_config(text="c_v=1\ne_v=2")
    with pytest.raises(UnknownKey):
        parse_config(text="gamma=1")
    with pytest.raises(ParseError) as info:
        parse_config(text="tau=0.1\n\nc_v two")
    assert info.value.line == 3
    with pytest.raises(ParseError):
        parse_config(text="tau=0.1\ntau=0.2")
    with pytest.raises(ParseError):
        parse_config(text="tau=nan")
    with pytest.raises(ParseError):
        parse_config(tmp_path / "missing.cfg")


def test_tabulated_family_from_file(tmp_path):
    xs = [-math.pi + 2 * math.pi * i / 400 for i in range(400)]
    (tmp_path / "shape.csv").write_text("".join(f"{x},{-math.cos(x)}\n" for x in xs))
    (tmp_path / "run.cfg").write_text("family=table:shape.csv\n")
    cfg = parse_config(tmp_path / "run.cfg")
    assert float(cfg.model.family.h_v(0.3, 0.1)) == pytest.approx(-0.1 * math.cos(0.3), abs=1e-6)


def test_validate_output(capsys):
    code, out, _ = run(capsys, "validate")
    assert code == 0
    rec = json.loads(out)
    assert rec["type"] == "validate" and rec["delta"] == 4 and rec["K"] == 3


def test_exit_codes(capsys, tmp_path):
    assert run(capsys, "orbit")[0] == 2                       # missing --lambda
    assert run(capsys, "nonsense")[0] == 2
    (tmp_path / "bad.cfg").write_text("c_v=1\ne_v=2\n")
    code, _, err = run(capsys, "validate", "--config", str(tmp_path / "bad.cfg"))
    assert code == 1 and "InvariantViolation" in err
    (tmp_path / "typo.cfg").write_text("c_v 1\n")
    assert run(capsys, "validate", "--config", str(tmp_path / "typo.cfg"))[0] == 2
    code, _, err = run(capsys, "fixedpoints", "--lambda", "0.12")  # below the fold of branch 1
    assert code == 1 and "NoSolution" in err


def test_delta_command(capsys):
    code, out, _ = run(capsys, "delta", "--strip", "2")
    rec = json.loads(out)
    assert code == 0 and rec["type"] == "delta" and rec["a"] == 2
    assert 0 < rec["c"] < rec["d"] < 0.03


def test_fixedpoints_csv(capsys):
    code, out, _ = run(capsys, "fixedpoints", "--lambda", "0.13", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [r["kind"] for r in rows] == ["Sink", "Saddle"]
    assert float(rows[1]["x"]) == pytest.approx(0.331676, abs=1e-6)


def test_sidecar_files(capsys, tmp_path):
    code, out, _ = run(capsys, "strips", "--strip", "2", "--depth", "2", "--lambda", "0.1",
                       "--csv-dir", str(tmp_path))
    assert code == 0 and len(out.splitlines()) == 2
    head = (tmp_path / "strip_2.csv").read_text().splitlines()
    assert head[0] == "x,lower,upper,image_lower,image_upper" and len(head) == 258
    assert (tmp_path / "strip_3.csv").exists()
    run(capsys, "orbit", "--lambda", "0.1", "--x0", "0", "--y0", str(math.exp(-2 * math.pi / 3)),
        "--csv-dir", str(tmp_path))
    assert (tmp_path / "orbit.csv").read_text().startswith("t,x,y,strip\n")


def test_out_file(capsys, tmp_path):
    target = tmp_path / "o.jsonl"
    code, out, _ = run(capsys, "cover", "--lambda", "0.1", "--out", str(target))
    assert code == 0 and out == ""
    last = json.loads(target.read_text().splitlines()[-1])
    assert last["type"] == "cover" and last["passed"] is True and last["strips"] == [2, 3]


def test_output_independent_of_jobs(capsys):
    base = ["escape", "--lambda", "0.1", "--samples", "400", "--max-iters", "10", "--seed", "5"]
    outs = [run(capsys, *base, "--jobs", j)[1] for j in ("1", "4", "1")]
    assert outs[0] == outs[1] == outs[2] and outs[0]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "bykov", "validate", "--format", "csv"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0 and res.stdout.startswith("type,delta,K")

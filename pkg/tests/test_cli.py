import json

import pytest

from tsysmoment.cli import SpecError, load_spec, main


def write(tmp_path, doc, name="spec.json"):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(p)


def spec(interval, functions, objective, moments, **options):
    d = {"interval": interval, "functions": functions, "objective": objective, "moments": moments}
    if options:
        d["options"] = options
    return d


UNIFORM = spec([0, 1], ["1", "x", "x^2", "x^3"], "x^4", [1, 0.5, 1 / 3, 0.25])
EXAMPLE_II = spec([0, 1], ["1", "x"], "x^2", [1, 0.5])


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_load_spec_errors(tmp_path):
    with pytest.raises(SpecError, match="empty"):
        load_spec(write(tmp_path, ""))
    with pytest.raises(SpecError, match="line 2 column"):
        load_spec(write(tmp_path, '{"interval": [0, 1],\n "functions": ]}'))
    with pytest.raises(SpecError, match="arity"):
        load_spec(write(tmp_path, spec([0, 1], ["1", "x"], "x^2", [1])))
    with pytest.raises(SpecError, match="missing"):
        load_spec(write(tmp_path, {"interval": [0, 1]}))
    with pytest.raises(SpecError, match="unknown identifier"):
        load_spec(write(tmp_path, spec([0, 1], ["1", "y"], "x^2", [1, 0.5])))
    with pytest.raises(SpecError, match="a < b"):
        load_spec(write(tmp_path, spec([1, 0], ["1"], "x", [1])))


def test_usage_errors(tmp_path, capsys):
    assert run(capsys, "verify", "--spec", str(tmp_path / "missing.json"))[0] == 1
    assert run(capsys, "bound", "--spec", write(tmp_path, EXAMPLE_II))[0] == 1  # no --sense
    assert run(capsys, "frobnicate")[0] == 1


@pytest.mark.parametrize("doc,code", [
    (spec([0, 1], ["1", "x", "x^2", "x^3"], "x^4", [1, 0.5, 1 / 3, 0.25]), 0),
    (spec([0, 1], ["1"], "x*(1-x)", [1]), 2),
    (spec([-1, 1], ["1"], "x^3", [1]), 3),
])
def test_verify_exit_codes(tmp_path, capsys, doc, code):
    assert run(capsys, "verify", "--spec", write(tmp_path, doc))[0] == code


def test_bound_text_and_json(tmp_path, capsys):
    path = write(tmp_path, EXAMPLE_II)
    code, out, _ = run(capsys, "bound", "--sense", "max", "--spec", path)
    assert code == 0 and "0.5" in out
    code, out, _ = run(capsys, "bound", "--sense", "min", "--spec", path, "--json")
    rec = json.loads(out)
    assert code == 0 and rec["exit_code"] == 0
    assert rec["value"] == pytest.approx(0.25, abs=1e-12)
    assert rec["atoms"][0][0] == pytest.approx(0.5, abs=1e-12)


def test_bound_infeasible(tmp_path, capsys):
    path = write(tmp_path, spec([0, 1], ["1", "x"], "x^2", [1, 2]))
    assert run(capsys, "bound", "--sense", "max", "--spec", path)[0] == 4


def test_bound_refuted_needs_override(tmp_path, capsys):
    path = write(tmp_path, spec([-1, 1], ["1", "x"], "x^3", [1, 0]))
    assert run(capsys, "bound", "--sense", "max", "--spec", path)[0] == 2
    assert run(capsys, "bound", "--sense", "max", "--spec", path, "--override")[0] == 0


def test_oracle_ladder(tmp_path, capsys):
    path = write(tmp_path, UNIFORM)
    code, out, _ = run(capsys, "oracle", "--spec", path, "--grids", "65,257", "--json")
    rec = json.loads(out)
    assert code == 0
    text = json.dumps(rec)
    assert "65" in text and "257" in text
    assert run(capsys, "oracle", "--spec", path, "--grids", "1")[0] == 1


def test_compare(tmp_path, capsys):
    path = write(tmp_path, UNIFORM)
    assert run(capsys, "compare", "--spec", path, "--alt", "exp(x)")[0] == 0
    assert run(capsys, "compare", "--spec", path, "--alt=-x^4")[0] == 2


def test_byte_determinism(tmp_path, capsys):
    path = write(tmp_path, UNIFORM)
    for argv in (["verify"], ["bound", "--sense", "min"], ["oracle", "--grids", "129"]):
        first = run(capsys, *argv, "--spec", path, "--json")[1]
        second = run(capsys, *argv, "--spec", path, "--json")[1]
        assert first == second


def test_seed_precedence(tmp_path, capsys, monkeypatch):
    path = write(tmp_path, UNIFORM)
    monkeypatch.setenv("TSYS_SEED", "17")
    rec = json.loads(run(capsys, "verify", "--spec", path, "--json")[1])
    assert rec["seed"] == 17
    rec = json.loads(run(capsys, "verify", "--spec", path, "--json", "--seed", "3")[1])
    assert rec["seed"] == 3
    path2 = write(tmp_path, {**UNIFORM, "options": {"seed": 9}}, "seeded.json")
    rec = json.loads(run(capsys, "verify", "--spec", path2, "--json")[1])
    assert rec["seed"] == 9


def test_rescale_option(tmp_path, capsys):
    # nu = (1 + x) mu; the rescaled system (g_i / (1 + x)) has the same moments for nu
    # as the base system has for mu, so example (ii)'s bounds carry over.
    doc = spec([0, 1], ["1", "x"], "x^2", [1, 0.5], rescale="1 + x")
    code, out, _ = run(capsys, "bound", "--sense", "min", "--spec", write(tmp_path, doc), "--json")
    rec = json.loads(out)
    assert code == 0
    assert rec["value"] == pytest.approx(0.25, abs=1e-10)


def test_module_entry_point():
    import subprocess
    import sys

    r = subprocess.run([sys.executable, "-m", "tsysmoment", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "verify" in r.stdout


def test_verify_sign_flipped_system_is_accepted(tmp_path, capsys):
    # det(1, x, x(1-x)) = -Vandermonde never vanishes; one sign flip makes it M+.
    doc = spec([0, 1], ["1", "x"], "x*(1-x)", [1, 0.5])
    code, out, _ = run(capsys, "verify", "--spec", write(tmp_path, doc), "--json")
    rec = json.loads(out)
    assert code == 0
    assert rec["signs"] == [1, 1, -1]


def test_verify_refuted_reports_witness(tmp_path, capsys):
    doc = spec([0, 1], ["1"], "x*(1-x)", [1])
    code, out, _ = run(capsys, "verify", "--spec", write(tmp_path, doc))
    assert code == 2 and "witness" in out

import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given

from torsionkit import generators as gen
from torsionkit.cli import fmt, main
from torsionkit.cochain import rho
from torsionkit.documents import Document, build, complex_payload, emit, load, parse
from torsionkit.errors import ParseError

from helpers import generator, seeds

EXAMPLES = Path(__file__).resolve().parent.parent / "examples"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def machine(out: str) -> dict:
    return json.loads(out.split("--- machine-readable ---\n", 1)[1])


def test_circle_example_parses_as_cw():
    assert load(EXAMPLES / "circle_lambda3.json").kind == "cw"


def test_torsion_of_circle_example(capsys):
    code, out, _ = run(capsys, "torsion", EXAMPLES / "circle_lambda3")
    assert code == 0
    assert "rho = 0.6931472" in out
    assert float(machine(out)["values"]["rho"]) == pytest.approx(math.log(2), abs=1e-14)


@pytest.mark.parametrize("name, value", [
    ("circle_trivial", 0.0), ("two_step", math.log(2)), ("filtered_example", math.log(3)),
    ("torus_product", 0.0), ("klein_bottle", -math.log(2)), ("weighted_torus", -0.5 * math.log(3)),
])
def test_torsion_of_examples(capsys, name, value):
    code, out, _ = run(capsys, "torsion", EXAMPLES / f"{name}.json")
    assert code == 0
    assert float(machine(out)["values"]["rho"]) == pytest.approx(value, abs=1e-12)


def test_missing_file_is_an_input_error(capsys):
    code, _, err = run(capsys, "torsion", "missing_file")
    assert code == 2
    assert "missing_file" in err


def test_unknown_command_is_an_input_error(capsys):
    assert run(capsys, "frobnicate")[0] == 2


def test_verify_suite_filtered(capsys):
    code, out, _ = run(capsys, "verify", "suite", "--kind", "filtered", "--count", "100", "--seed", "7")
    assert code == 0
    assert "100/100 pass" in out


@pytest.mark.parametrize("kind", ["props2_9", "fibration", "detline"])
def test_verify_suite_other_kinds(capsys, kind):
    code, out, _ = run(capsys, "verify", "suite", "--kind", kind, "--count", "5", "--seed", "1")
    assert code == 0
    assert "5/5 pass" in out


def test_verify_filtered_torsion(capsys):
    code, out, _ = run(capsys, "verify", "filtered-torsion", EXAMPLES / "filtered_example.json")
    assert code == 0
    assert "check filtered_torsion: PASS" in out


def test_verify_fibration(capsys):
    code, out, _ = run(capsys, "verify", "fibration", EXAMPLES / "weighted_torus.json")
    assert code == 0
    values = machine(out)["values"]
    assert float(values["rho_LS"]) == pytest.approx(-0.5 * math.log(3), abs=1e-12)


def test_spectral_pages(capsys):
    code, out, _ = run(capsys, "spectral", EXAMPLES / "filtered_example.json", "--pages")
    assert code == 0
    assert "E_1:" in out and "E_inf:" in out
    assert "rho_fil = 1.098612" in out


def test_detline_reports_cross_check(capsys):
    for name in ("circle_lambda3", "weighted_torus", "two_step"):
        code, out, _ = run(capsys, "detline", EXAMPLES / f"{name}.json")
        assert code == 0
        assert all(c["passed"] for c in machine(out)["checks"])


def test_failed_check_exits_one(capsys, tmp_path, monkeypatch):
    import torsionkit.cli as cli
    from torsionkit.filtration import FilteredTorsionReport

    monkeypatch.setattr(cli, "verify_filtered_torsion",
                        lambda FC: FilteredTorsionReport(0.0, 1.0, 1.0, 1e-8, False))
    code, out, _ = run(capsys, "verify", "filtered-torsion", EXAMPLES / "filtered_example.json")
    assert code == 1
    assert "status: fail" in out


def test_reports_are_deterministic(capsys):
    argv = ("verify", "suite", "--kind", "props2_9", "--count", "3", "--seed", "11")
    first = run(capsys, *argv)[1].splitlines()[1:]
    second = run(capsys, *argv)[1].splitlines()[1:]
    assert first == second


def test_timestamp_is_confined_to_header(capsys):
    out = run(capsys, "torsion", EXAMPLES / "circle_lambda3.json")[1]
    assert "generated" in out.splitlines()[0]
    assert all("generated" not in line for line in out.splitlines()[1:])


def test_seven_significant_digits():
    assert fmt(math.pi) == "3.141593"
    assert fmt(0.0) == "0"


def test_invalid_tolerance_environment(capsys, monkeypatch):
    monkeypatch.setenv("TORSION_TOL", "-1")
    assert run(capsys, "torsion", EXAMPLES / "circle_lambda3.json")[0] == 2


def test_gram_not_positive_definite_names_path():
    text = json.dumps({"kind": "complex", "lo": 0, "grams": [[["1"]], [["-1"]]],
                       "differentials": [[["2"]]]})
    with pytest.raises(ParseError) as info:
        parse(text)
    assert "$.grams[1]" in str(info.value)


def test_bad_gram_file_exits_two(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"kind": "complex", "lo": 0, "grams": [[["0"]]], "differentials": []}))
    code, _, err = run(capsys, "torsion", path)
    assert code == 2
    assert "grams[0]" in err


def test_malformed_json_is_a_parse_error():
    with pytest.raises(ParseError):
        parse("{not json")


@pytest.mark.parametrize("name", ["circle_lambda3", "circle_trivial", "torus_diagonal", "two_step",
                                  "filtered_example", "torus_product", "klein_bottle", "weighted_torus"])
def test_example_round_trip(name):
    doc = load(EXAMPLES / f"{name}.json")
    again = parse(emit(doc))
    assert again == doc
    assert emit(again) == emit(doc)


@given(seeds)
def test_complex_round_trip(seed):
    C = gen.random_complex(generator(seed))
    doc = Document("complex", complex_payload(C))
    again = parse(emit(doc))
    assert again == doc
    assert rho(build(again)) == pytest.approx(rho(C), abs=1e-12)

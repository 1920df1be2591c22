import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from causal_kit.dsl import ScmParseError, collect_errors, load_scm, parse_scm, serialize_scm
from causal_kit.random_models import random_scm
from causal_kit.sampling import ancestral_sample
from causal_kit.scm import REAL, Deterministic, Discrete, DiscreteCpt, LinearGaussian, Scm, validate


def only_error(source):
    errors = collect_errors(source)
    assert len(errors) == 1, errors
    return errors[0]


def test_chain_with_inline_noise():
    scm = parse_scm("var v' ~ normal(0,1); var v := v' + 2 + normal(0,1);")
    assert scm.dag.edges == frozenset({("v'", "v")})
    assert isinstance(scm.mechanisms["v'"], LinearGaussian)
    assert isinstance(scm.mechanisms["v"], Deterministic)
    d = ancestral_sample(scm, 50_000, 1)
    diff = d["v"] - d["v'"]
    assert abs(diff.mean() - 2) < 0.03 and abs(diff.var() - 1) < 0.03


def test_empty_file():
    err = only_error("")
    assert (err.span.line, err.span.column) == (1, 1)
    assert err.kind == "syntax" and "expected at least one declaration" in err.message


def test_comment_only_file_is_empty():
    assert "expected at least one declaration" in only_error("# nothing here\n").message


def test_missing_cpt_row_is_named():
    err = only_error("var x : {0,1} ~ bernoulli(0.5);\nvar y : {0,1} cpt | x=0 -> 0.5, 0.5;")
    assert err.kind == "cpt-shape" and "x=1" in err.message and err.span.line == 2


def test_cpt_row_sum():
    err = only_error("var x : {0,1} ~ bernoulli(0.5); var y : {0,1} cpt | x=0 -> 0.5, 0.4 | x=1 -> 0.5, 0.5;")
    assert err.kind == "cpt-shape"


@pytest.mark.parametrize("source, kind", [
    ("var x ~ normal(0,1); var x ~ normal(0,1);", "duplicate-definition"),
    ("var y := z + 1;", "unknown-symbol"),
    ("var y := y + 1;", "unknown-symbol"),
    ("var a : {0,1} := 2;", "domain-mismatch"),
    ("var x ~ normal(0, -1);", "domain-mismatch"),
    ("var x ~ normal(0,1)\nvar y ~ normal(0,1);", "syntax"),
    ("var x ~ normal(0,1); edges x -> x;", "syntax"),
])
def test_error_kinds(source, kind):
    assert kind in {e.kind for e in collect_errors(source)}


def test_independent_errors_are_all_reported():
    errors = collect_errors("var x ~ normal(0,1); var y ~ normal(q, 1); var z ~ normal(w, 1);")
    assert [e.kind for e in errors] == ["unknown-symbol", "unknown-symbol"]
    assert [e.span.column for e in errors] == [37, 59]


def test_parse_raises_with_all_errors():
    with pytest.raises(ScmParseError) as info:
        parse_scm("var y := q; var z := w;")
    assert len(info.value.errors) == 2


def test_crlf_and_comments():
    scm = parse_scm("# model\r\nvar x : {0, 1} ~ bernoulli(0.25); # coin\r\nvar y := 2 * x;\r\n")
    assert scm.domains["y"] == Discrete((0, 2))
    assert serialize_scm(scm).count("\r") == 0


def test_invalid_utf8_is_a_syntax_error():
    err = only_error(b"var x \xff ~ normal(0,1);")
    assert err.kind == "syntax"


def test_deep_nesting_is_an_error_not_a_crash():
    assert collect_errors("var x := " + "(" * 5000 + "1" + ")" * 5000 + ";")
    assert isinstance(collect_errors("var x := " + "- " * 5000 + "x;"), list)


def test_comparison_with_continuous_inputs_may_declare_binary_domain():
    scm = parse_scm("var x ~ normal(0,1); var a : {0, 1} := x + normal(0, 1) > 0;")
    assert scm.domains["a"] == Discrete((0, 1))
    assert "domain-mismatch" in {e.kind for e in collect_errors("var x ~ normal(0,1); var a : {0, 1} := x + 1;")}


def test_vaccination_graph_serializes_three_declarations(vaccine):
    text = serialize_scm(vaccine)
    assert text.count("var ") == 3
    assert parse_scm(text) == vaccine


def test_equal_models_serialize_identically():
    b = Discrete((0, 1))
    x = DiscreteCpt((), {(): (0.5, 0.5)})
    y = DiscreteCpt(("x",), {(1,): (0.2, 0.8), (0,): (0.9, 0.1)})
    one = Scm.from_mechanisms({"x": x, "y": y}, {"x": b, "y": b})
    two = Scm.from_mechanisms({"y": y, "x": x}, {"y": b, "x": b})
    assert one == two and serialize_scm(one) == serialize_scm(two)


def test_load_from_file(tmp_path):
    path = tmp_path / "m.scm.txt"
    path.write_text("var x ~ normal(1, 2);\n")
    assert load_scm(path).mechanisms["x"] == LinearGaussian({}, 1.0, 2.0)


def test_linear_gaussian_with_zero_weight_round_trips():
    scm = Scm.from_mechanisms({"x": LinearGaussian({}), "y": LinearGaussian({"x": 0.0}, 0.0, 1.0)})
    assert parse_scm(serialize_scm(scm)) == scm


@given(st.integers(0, 2**32 - 1))
def test_round_trip_random_models(seed):
    scm = random_scm(seed)
    assert validate(scm) == []
    text = serialize_scm(scm)
    back = parse_scm(text)
    assert back == scm
    assert serialize_scm(back) == text


@given(st.binary(max_size=80))
def test_parser_is_total_on_bytes(blob):
    for err in collect_errors(blob):
        assert err.span.line >= 1 and err.span.column >= 1 and err.span.length >= 1


_TOKENS = ["var", "x", "y'", ":", "{0, 1}", "real", "~", ":=", "cpt", "|", "x=0", "->", "0.5", ",", ";",
           "(", ")", "normal", "bernoulli", "+", "*", "<", "min", "ind", "#c\n", "\n", "1e400", "-"]


@given(st.lists(st.sampled_from(_TOKENS), max_size=30))
def test_error_spans_point_at_real_characters(tokens):
    source = " ".join(tokens)
    lines = source.split("\n")
    for err in collect_errors(source):
        assert 1 <= err.span.line <= len(lines)
        line = lines[err.span.line - 1]
        assert 1 <= err.span.column <= max(len(line), 1)
        assert err.message


def test_real_domain_is_explicit_in_output():
    scm = parse_scm("var x ~ normal(0, 1);")
    assert scm.domains["x"] is REAL
    assert serialize_scm(scm) == "var x : real ~ normal(0, 1);\n"


def test_sampled_values_stay_in_declared_domain():
    scm = parse_scm("var h : {0, 1, 2} ~ uniform(0, 1, 2); var s := h == 1;")
    d = ancestral_sample(scm, 1000, 3)
    assert set(np.unique(d["s"])) <= {0.0, 1.0}

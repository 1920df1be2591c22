import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from causal_kit.random_models import random_binary_dag
from causal_kit.scm import (
    REAL,
    Constant,
    CycleError,
    Dag,
    Discrete,
    DiscreteCpt,
    LinearGaussian,
    Scm,
    ScmError,
    check_valid,
    do_surgery,
    structure_query,
    validate,
)

B = Discrete((0, 1))


def chain(p_row=(0.5, 0.5)):
    mechs = {
        "u": DiscreteCpt((), {(): (0.7, 0.3)}),
        "v": DiscreteCpt(("u",), {(0,): p_row, (1,): (0.0, 1.0)}),
    }
    return Scm.from_mechanisms(mechs, {"u": B, "v": B})


def confounder():
    mechs = {
        "x": DiscreteCpt((), {(): (0.5, 0.5)}),
        "a": DiscreteCpt(("x",), {(0,): (0.8, 0.2), (1,): (0.2, 0.8)}),
        "y": DiscreteCpt(("a", "x"), {(0, 0): (0.9, 0.1), (0, 1): (0.4, 0.6), (1, 0): (0.6, 0.4), (1, 1): (0.1, 0.9)}),
    }
    return Scm.from_mechanisms(mechs, {"x": B, "a": B, "y": B})


def kinds(errors):
    return {e.kind for e in errors}


def test_valid_chain_has_no_errors():
    assert validate(chain()) == []


def test_two_cycle_is_reported_with_both_nodes():
    mechs = {"u": LinearGaussian({"v": 1.0}), "v": LinearGaussian({"u": 1.0})}
    errors = validate(Scm.from_mechanisms(mechs))
    cyc = [e for e in errors if e.kind == "cycle"]
    assert cyc and set(cyc[0].nodes) == {"u", "v"}


def test_row_normalization_error_names_row():
    errors = validate(chain(p_row=(0.5, 0.4)))
    norm = [e for e in errors if e.kind == "cpt-normalization"]
    assert norm and "u=0" in norm[0].message and "0.9" in norm[0].message


def test_self_loop_unknown_node_and_missing_mechanism():
    dag = Dag(("u", "v"), {("u", "u"), ("u", "w")})
    errors = validate(Scm(dag, {"u": Constant(0.0)}, {"u": REAL, "v": REAL}))
    assert {"self-loop", "unknown-node", "missing-mechanism"} <= kinds(errors)


def test_parent_mismatch_and_domain_kind():
    dag = Dag(("u", "v"), {("u", "v")})
    mechs = {"u": LinearGaussian({}), "v": LinearGaussian({})}
    errors = validate(Scm(dag, mechs, {"u": B, "v": REAL}))
    assert {"parent-mismatch", "domain-kind"} <= kinds(errors)


def test_cpt_coverage():
    mechs = {"u": DiscreteCpt((), {(): (0.5, 0.5)}), "v": DiscreteCpt(("u",), {(0,): (0.5, 0.5)})}
    assert "cpt-coverage" in kinds(validate(Scm.from_mechanisms(mechs, {"u": B, "v": B})))


def test_negative_std():
    assert "negative-std" in kinds(validate(Scm.from_mechanisms({"u": LinearGaussian({}, 0.0, -1.0)})))


def test_check_valid_raises():
    with pytest.raises(ScmError):
        check_valid(chain(p_row=(0.2, 0.2)))


def test_structure_query_confounder():
    s = structure_query(confounder().dag)
    assert s.order == ("x", "a", "y")
    assert set(s.parents["y"]) == {"a", "x"}
    assert set(s.children["x"]) == {"a", "y"}


def test_structure_query_single_node():
    s = structure_query(Dag(("n",)))
    assert s.order == ("n",) and s.parents["n"] == ()


def test_structure_query_diamond_order_is_valid():
    dag = Dag(("u", "a", "b", "v"), {("u", "a"), ("u", "b"), ("a", "v"), ("b", "v")})
    order = structure_query(dag).order
    # brute force: the valid topological orders of a diamond
    valid = [p for p in itertools.permutations(dag.nodes) if all(p.index(s) < p.index(t) for s, t in dag.edges)]
    assert order in valid and len(valid) == 2
    assert set(structure_query(dag).parents["v"]) == {"a", "b"}


def test_structure_query_rejects_cycle():
    with pytest.raises(CycleError):
        structure_query(Dag(("u", "v"), {("u", "v"), ("v", "u")}))


def test_do_surgery_on_confounder():
    scm = confounder()
    cut = do_surgery(scm, {"a": 1})
    assert cut.dag.edges == frozenset({("x", "y"), ("a", "y")})
    assert cut.mechanisms["a"] == Constant(1.0)
    assert cut.mechanisms["y"] == scm.mechanisms["y"]
    # input untouched
    assert ("x", "a") in scm.dag.edges


def test_do_surgery_on_root_keeps_edges():
    scm = confounder()
    cut = do_surgery(scm, {"x": 0})
    assert cut.dag.edges == scm.dag.edges
    assert cut.mechanisms["x"] == Constant(0.0)


def test_do_surgery_on_two_nodes():
    cut = do_surgery(confounder(), {"a": 1, "x": 0})
    assert set(structure_query(cut.dag).parents["y"]) == {"a", "x"}
    assert isinstance(cut.mechanisms["a"], Constant) and isinstance(cut.mechanisms["x"], Constant)


def test_do_surgery_errors():
    with pytest.raises(ScmError):
        do_surgery(confounder(), {"nope": 1})
    with pytest.raises(ScmError):
        do_surgery(confounder(), {"a": 2})


@given(st.integers(0, 10_000), st.data())
def test_do_surgery_idempotent_and_commuting(seed, data):
    scm, *_ = random_binary_dag(seed)
    nodes = list(scm.nodes)
    left = data.draw(st.sets(st.sampled_from(nodes)))
    right = data.draw(st.sets(st.sampled_from([n for n in nodes if n not in left]))) if len(left) < len(nodes) else set()
    lmap = {n: data.draw(st.sampled_from([0, 1])) for n in left}
    rmap = {n: data.draw(st.sampled_from([0, 1])) for n in right}
    once = do_surgery(scm, lmap)
    assert do_surgery(once, lmap) == once
    assert do_surgery(do_surgery(scm, lmap), rmap) == do_surgery(do_surgery(scm, rmap), lmap)


@given(st.integers(0, 100_000))
def test_topological_order_respects_edges(seed):
    scm, *_ = random_binary_dag(seed)
    order = structure_query(scm.dag).order
    assert sorted(order) == sorted(scm.nodes)
    for s, t in scm.dag.edges:
        assert order.index(s) < order.index(t)

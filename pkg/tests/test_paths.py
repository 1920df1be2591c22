import pytest
from hypothesis import given
from hypothesis import strategies as st

from causal_kit.experiments import independent_in_joint
from causal_kit.paths import COLLIDER, FORK, MAX_PATH_NODES, classify_paths, d_separated
from causal_kit.random_models import random_binary_dag
from causal_kit.scm import Dag, ScmError

CONFOUNDER = Dag(("x", "a", "y"), {("x", "a"), ("x", "y"), ("a", "y")})


def test_observed_fork_blocks():
    report = classify_paths(Dag(("u", "w", "v"), {("w", "u"), ("w", "v")}), "u", "v", {"w"})
    (path,) = report.paths
    assert path.status == "blocked" and path.steps[0].role == FORK
    assert report.d_separated


def test_unobserved_collider_blocks():
    report = classify_paths(Dag(("u", "w", "v"), {("u", "w"), ("v", "w")}), "u", "v")
    (path,) = report.paths
    assert path.steps[0].role == COLLIDER and not path.open
    assert report.d_separated


def test_observed_collider_descendant_opens():
    dag = Dag(("u", "w", "v", "d"), {("u", "w"), ("v", "w"), ("w", "d")})
    assert not d_separated(dag, "u", "v", {"d"})
    assert d_separated(dag, "u", "v")


def test_confounder_graph_has_causal_and_backdoor_path():
    report = classify_paths(CONFOUNDER, "a", "y")
    assert [p.render() for p in report.open_paths()] == ["a -> y", "a <- x -> y"]
    assert [p.render() for p in report.causal_paths()] == ["a -> y"]
    backdoor = report.paths[1]
    assert backdoor.open and not backdoor.causal and backdoor.steps[0].role == FORK


def test_errors():
    with pytest.raises(ScmError):
        classify_paths(CONFOUNDER, "a", "a")
    with pytest.raises(ScmError):
        classify_paths(CONFOUNDER, "a", "q")
    with pytest.raises(ScmError):
        classify_paths(CONFOUNDER, "a", "y", {"a"})
    big = Dag(tuple(f"n{i}" for i in range(MAX_PATH_NODES + 1)))
    with pytest.raises(ScmError):
        classify_paths(big, "n0", "n1")


@given(st.integers(0, 10**6))
def test_paths_are_simple_and_causal_means_directed_open(seed):
    scm, u, v, observed = random_binary_dag(seed)
    for p in classify_paths(scm.dag, u, v, observed).paths:
        assert len(set(p.nodes)) == len(p.nodes)
        assert p.causal == (p.open and all(p.forward))


@given(st.integers(0, 10**6))
def test_d_separation_matches_brute_force(seed):
    scm, u, v, observed = random_binary_dag(seed)
    assert classify_paths(scm.dag, u, v, observed).d_separated == independent_in_joint(scm, u, v, observed)

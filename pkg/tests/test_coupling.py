import pytest

from modules.bp_engine import BpStatus
from modules.coupling import (Relation, StopReason, boundary_cap_for, conditional_second_explore, coupled_explore,
                              coupled_explore_lower, truncated_explore)
from modules.errors import ParameterDomainError
from modules.gnp_graph import FixedGraphOracle, GnpParams, LazyGnpOracle, UnvisitedPool, explore_component
from modules.rng_stats import chi_square_two_sample, substream


def test_upper_coupling_without_edges():
    joint = coupled_explore(GnpParams(50, 0.0), 3, substream(1, 0, "couple"))
    assert joint.graph_tree.size == 1
    assert joint.bp_outcome.total_size == 1
    assert joint.bp_outcome.status is BpStatus.EXTINCT
    assert joint.holds()


def test_upper_coupling_on_complete_graph_counts_fictitious_children():
    joint = coupled_explore(GnpParams(3, 1.0), 0, substream(1, 0, "couple"))
    assert joint.relation is Relation.TREE_SUBSET_BP
    assert joint.bp_generation_sizes[:2] == (1, 3)
    assert joint.graph_tree.generation_sizes == [1, 2]
    assert joint.bp_outcome.total_size > joint.graph_tree.size
    assert joint.holds()


def test_upper_coupling_holds_in_every_sample():
    params = GnpParams(1000, 1.2 / 1000)
    rng = substream(2, 0, "couple")
    for _ in range(300):
        joint = coupled_explore(params, int(rng.integers(params.n)), rng)
        assert joint.holds()
        tree, bp = joint.graph_tree.generation_sizes, joint.bp_generation_sizes
        assert all(t <= b for t, b in zip(tree, bp))


def test_upper_coupling_respects_caps():
    joint = coupled_explore(GnpParams(200, 0.05), 0, substream(3, 0, "couple"), size_cap=30, width_cap=1000)
    assert joint.bp_outcome.status is BpStatus.CENSORED_SIZE
    assert joint.bp_outcome.total_size >= 30
    assert not joint.graph_tree.complete


def test_lower_coupling_without_edges():
    joint = coupled_explore_lower(GnpParams(50, 0.0), 0, 10, substream(1, 0, "couple"))
    assert joint.relation is Relation.GRAPH_AT_LEAST_BP
    assert joint.graph_tree.size == joint.bp_outcome.total_size == 1
    assert joint.component_size == 1
    assert joint.holds()


def test_lower_coupling_reaches_k_immediately():
    joint = coupled_explore_lower(GnpParams(3, 1.0), 0, 1, substream(1, 0, "couple"))
    assert joint.relation is Relation.BOTH_AT_LEAST_K
    assert joint.graph_tree.size == 1
    assert joint.component_size == 3
    assert joint.holds()


def test_lower_coupling_finds_vertices_outside_the_tree():
    # the root shares 3 candidates with X(3, 1); the fourth pair is spare
    joint = coupled_explore_lower(GnpParams(5, 1.0), 0, 2, substream(1, 0, "couple"))
    assert joint.relation is Relation.BOTH_AT_LEAST_K
    assert joint.bp_generation_sizes == (1, 3)
    assert joint.graph_tree.size == 4
    assert joint.component_size == 5
    assert joint.as_dict()["graph_size"] == 5


def test_lower_coupling_rejects_k_at_least_n():
    with pytest.raises(ParameterDomainError):
        coupled_explore_lower(GnpParams(10, 0.5), 0, 10, substream(1, 0, "couple"))


def test_lower_coupling_dichotomy_in_every_sample():
    params = GnpParams(1000, 1.2 / 1000)
    rng = substream(4, 0, "couple")
    relations = set()
    strictly_larger = 0
    for _ in range(300):
        joint = coupled_explore_lower(params, int(rng.integers(params.n)), 50, rng)
        assert joint.holds()
        assert joint.component_size >= joint.graph_tree.size
        relations.add(joint.relation)
        if joint.relation is Relation.GRAPH_AT_LEAST_BP:
            strictly_larger += joint.component_size > joint.bp_outcome.total_size
    assert relations == {Relation.GRAPH_AT_LEAST_BP, Relation.BOTH_AT_LEAST_K}
    # spare pairs and the finished component make |C_v| exceed the process sometimes
    assert strictly_larger > 0


def test_boundary_cap_preconditions():
    assert boundary_cap_for(0.05, 40) == 2
    with pytest.raises(ParameterDomainError):
        boundary_cap_for(0.0, 100)
    with pytest.raises(ParameterDomainError):
        boundary_cap_for(0.05, 10)


def test_truncated_exploration_without_edges_is_exhausted():
    params = GnpParams(1000, 1.05 / 1000)
    state = truncated_explore(params, 7, 40, substream(1, 0, "trunc"), oracle=FixedGraphOracle({}))
    assert state.stopped_by is StopReason.EXHAUSTED
    assert state.reached == frozenset({7})
    assert state.boundary == ()
    assert not state.event_a


def test_truncated_exploration_stops_partway_through_a_star():
    params = GnpParams(100, 1.1 / 100)
    star = FixedGraphOracle.from_edges([(0, w) for w in range(1, 11)])
    state = truncated_explore(params, 0, 15, substream(1, 0, "trunc"), oracle=star)
    assert state.boundary_cap == 2
    assert state.stopped_by is StopReason.BOUNDARY_CAP
    assert state.boundary == (0, 1, 2)
    assert len(state.boundary) == state.boundary_cap + 1
    assert state.event_a
    assert state.pending == tuple(range(3, 11))
    assert state.reached == frozenset(range(11))


def test_truncated_exploration_size_cap():
    params = GnpParams(50, 1.0)
    state = truncated_explore(params, 0, 40, substream(1, 0, "trunc"))
    assert state.stopped_by is StopReason.SIZE_CAP
    assert len(state.reached) == 40


def test_boundary_arithmetic_over_many_roots():
    params = GnpParams(2000, 1.1 / 2000)
    rng = substream(5, 0, "trunc")
    for _ in range(300):
        state = truncated_explore(params, int(rng.integers(params.n)), 100, rng)
        assert len(state.boundary) <= state.boundary_cap + 1
        if state.stopped_by is StopReason.BOUNDARY_CAP:
            assert len(state.boundary) >= state.boundary_cap
        if state.stopped_by is StopReason.EXHAUSTED:
            assert state.tree.complete and len(state.reached) < 100


def test_second_exploration_without_edges():
    star = FixedGraphOracle.from_edges([(0, w) for w in range(1, 11)])
    params = GnpParams(100, 1.1 / 100)
    state = truncated_explore(params, 0, 15, substream(1, 0, "trunc"), oracle=star)
    silent = GnpParams(100, 0.0)
    second = conditional_second_explore(state, 50, silent, substream(1, 1, "trunc"))
    assert second.size == 1 and not second.hits_boundary and second.complete


def test_second_exploration_with_empty_boundary_never_hits():
    params = GnpParams(1000, 1.05 / 1000)
    state = truncated_explore(params, 7, 40, substream(1, 0, "trunc"), oracle=FixedGraphOracle({}))
    rng = substream(1, 2, "trunc")
    for w in range(8, 28):
        assert not conditional_second_explore(state, w, params, rng).hits_boundary


def test_second_exploration_rejects_reached_root():
    params = GnpParams(1000, 1.05 / 1000)
    state = truncated_explore(params, 7, 40, substream(1, 0, "trunc"), oracle=FixedGraphOracle({}))
    with pytest.raises(ParameterDomainError):
        conditional_second_explore(state, 7, params, substream(1, 3, "trunc"))


def test_second_exploration_avoids_the_first():
    params = GnpParams(60, 0.5)
    star = FixedGraphOracle.from_edges([(0, w) for w in range(1, 11)])
    state = truncated_explore(GnpParams(60, 1.05 / 60), 0, 40, substream(1, 0, "trunc"), oracle=star)
    second = conditional_second_explore(state, 30, params, substream(1, 4, "trunc"))
    assert second.size <= 60 - len(state.reached)


def test_second_exploration_counts_pending_vertices():
    star = FixedGraphOracle.from_edges([(0, w) for w in range(1, 11)])
    state = truncated_explore(GnpParams(100, 1.1 / 100), 0, 15, substream(1, 0, "trunc"), oracle=star)
    with pytest.raises(ParameterDomainError):
        conditional_second_explore(state, 5, GnpParams(100, 0.5), substream(1, 5, "trunc"))
    # every pair from the second root to boundary or pending vertices is an edge at p = 1
    second = conditional_second_explore(state, 50, GnpParams(100, 1.0), substream(1, 5, "trunc"))
    assert second.size == 100 - len(state.reached)
    assert second.hits_boundary


def test_lower_coupling_component_matches_plain_exploration():
    params = GnpParams(300, 1.2 / 300)
    coupled_rng, plain_rng = substream(6, 0, "couple"), substream(6, 0, "gnp")
    coupled, plain = [0] * 10, [0] * 10
    for _ in range(600):
        joint = coupled_explore_lower(params, int(coupled_rng.integers(300)), 20, coupled_rng)
        coupled[min(joint.component_size, 10) - 1] += 1
        tree = explore_component(int(plain_rng.integers(300)), LazyGnpOracle(params, plain_rng), UnvisitedPool(300))
        plain[min(tree.size, 10) - 1] += 1
    _, pvalue = chi_square_two_sample(coupled, plain)
    assert pvalue > 1e-3

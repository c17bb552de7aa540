import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grapher.errors import ConfigError, ValidationError
from grapher.graphs import CandidateGraph
from grapher.rerank import (
    RerankConfig,
    RerankRunRecord,
    column_normalize,
    final_ranking,
    gcs_rank,
    gcs_smooth,
    load_rerank_run,
    normalize_seed,
    ppr_rank,
    rerank,
    row_normalize,
    save_rerank_run,
    solve_oracle,
)

from conftest import random_adjacency


def graph_of(A, ids=None):
    A = np.asarray(A, dtype=float)
    ids = ids or [f"n{i}" for i in range(A.shape[0])]
    return CandidateGraph(ids=ids, adjacency=A, scheme="structural")


PATH3 = graph_of([[0, 1, 0], [1, 0, 1], [0, 1, 0]], ids=["0", "1", "2"])


def star_graph(leaves=20):
    n = leaves + 2  # hub, leaves, detached
    A = np.zeros((n, n))
    A[0, 1 : leaves + 1] = 1.0
    A[1 : leaves + 1, 0] = 1.0
    ids = ["hub"] + [f"leaf{i:02d}" for i in range(leaves)] + ["detached"]
    seed = np.full(n, 0.05)
    seed[-1] = 0.9
    return graph_of(A, ids=ids), seed


def random_case(seed_int, n_max=20):
    rng = np.random.default_rng(seed_int)
    n = int(rng.integers(2, n_max))
    graph = graph_of(random_adjacency(rng, n))
    return graph, rng.random(n)


# ---------------------------------------------------------------------------
# normalization helpers


def test_row_normalize_rows_sum_to_one_or_zero():
    A = np.array([[0, 2, 2], [0, 0, 0], [1, 0, 0]], dtype=float)
    W = row_normalize(A)
    assert np.allclose(W[0], [0, 0.5, 0.5])
    assert np.allclose(W[1], 0.0)
    assert np.allclose(W[2], [1, 0, 0])


def test_column_normalize_mirrors_row():
    A = np.arange(9, dtype=float).reshape(3, 3)
    assert np.allclose(column_normalize(A), row_normalize(A.T).T)


def test_normalize_seed_zero_becomes_uniform():
    assert np.allclose(normalize_seed(np.zeros(4)), 0.25)
    assert np.allclose(normalize_seed(np.array([1.0, 3.0])), [0.25, 0.75])


# ---------------------------------------------------------------------------
# seed validation


def test_seed_validation():
    graph = graph_of(np.zeros((2, 2)))
    cfg = RerankConfig()
    with pytest.raises(ValidationError, match="does not match"):
        gcs_rank(graph, [1.0], cfg)
    with pytest.raises(ValidationError, match=">= 0"):
        gcs_rank(graph, [-0.1, 0.2], cfg)
    with pytest.raises(ValidationError, match="non-finite"):
        gcs_rank(graph, [np.nan, 0.2], cfg)


def test_config_validation():
    for bad in (dict(alpha=0.0), dict(alpha=1.0), dict(epsilon=0.0),
                dict(max_iters=0), dict(algorithm="walk"), dict(ppr_dangling="drop")):
        with pytest.raises(ConfigError):
            RerankConfig(**bad)


# ---------------------------------------------------------------------------
# GCS behavior


def test_gcs_path_graph_closed_form():
    cfg = RerankConfig(alpha=0.5, epsilon=1e-14)
    result = gcs_rank(PATH3, [1.0, 0.0, 0.0], cfg)
    by_id = {e.id: e.final for e in result.entries}
    assert by_id["0"] == pytest.approx(1.0, abs=1e-10)  # floor kicks in
    assert by_id["1"] == pytest.approx(1 / 6, abs=1e-10)
    assert by_id["2"] == pytest.approx(1 / 12, abs=1e-10)
    assert result.converged


def test_gcs_edgeless_graph_returns_seed():
    graph = graph_of(np.zeros((3, 3)))
    seed = [0.3, 0.9, 0.1]
    result = gcs_rank(graph, seed, RerankConfig())
    assert [e.final for e in result.entries] == sorted(seed, reverse=True)
    assert result.ids() == ["n1", "n0", "n2"]


def test_gcs_not_converged_flag():
    cfg = RerankConfig(alpha=0.5, epsilon=1e-12, max_iters=2)
    result = gcs_rank(PATH3, [1.0, 0.0, 0.0], cfg)
    assert not result.converged
    assert result.iterations == 2


def test_gcs_tie_breaks_by_seed_then_id():
    # no edges: finals equal seeds; craft equal finals with unequal seeds
    graph = graph_of(np.zeros((3, 3)), ids=["b", "a", "c"])
    result = gcs_rank(graph, [0.5, 0.5, 0.5], RerankConfig())
    assert result.ids() == ["a", "b", "c"]  # all equal -> id ascending


@settings(max_examples=80, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_gcs_floor_property(seed_int):
    graph, seed = random_case(seed_int)
    result = gcs_rank(graph, seed, RerankConfig(alpha=0.3))
    by_id = {e.id: (e.final, e.seed) for e in result.entries}
    for final, s in by_id.values():
        assert final >= s  # exact: final is an element-wise max


@settings(max_examples=40, deadline=None)
@given(
    st.integers(min_value=0, max_value=2**32 - 1),
    st.sampled_from([0.15, 0.5, 0.85]),
)
def test_gcs_matches_oracle_property(seed_int, alpha):
    graph, seed = random_case(seed_int)
    cfg = RerankConfig(alpha=alpha, epsilon=1e-13)
    p, _, converged = gcs_smooth(
        row_normalize(graph.adjacency), seed, alpha, cfg.epsilon, cfg.max_iters
    )
    assert converged
    assert np.max(np.abs(p - solve_oracle(graph, seed, cfg))) < 1e-9


def test_gcs_scale_equivariance():
    # the iteration is linear in the seed, and max(c*p, c*s) = c*max(p, s)
    graph, seed = random_case(1234)
    cfg = RerankConfig(alpha=0.5, epsilon=1e-14)
    base = gcs_rank(graph, seed, cfg)
    scaled = gcs_rank(graph, 3.0 * seed, cfg)
    assert scaled.ids() == base.ids()
    for a, b in zip(base.entries, scaled.entries):
        assert b.final == pytest.approx(3.0 * a.final, rel=1e-9)


# ---------------------------------------------------------------------------
# PPR behavior


def test_ppr_path_graph_closed_form():
    cfg = RerankConfig(alpha=0.5, epsilon=1e-14, algorithm="ppr")
    result = ppr_rank(PATH3, [1.0, 0.0, 0.0], cfg)
    by_id = {e.id: e.final for e in result.entries}
    assert by_id["0"] == pytest.approx(7 / 12, abs=1e-10)
    assert by_id["1"] == pytest.approx(1 / 3, abs=1e-10)
    assert by_id["2"] == pytest.approx(1 / 12, abs=1e-10)
    assert sum(by_id.values()) == pytest.approx(1.0, abs=1e-12)


def test_ppr_edgeless_graph_returns_normalized_seed():
    graph = graph_of(np.zeros((2, 2)))
    result = ppr_rank(graph, [3.0, 1.0], RerankConfig(algorithm="ppr"))
    by_id = {e.id: e.final for e in result.entries}
    assert by_id["n0"] == pytest.approx(0.75)
    assert by_id["n1"] == pytest.approx(0.25)


def test_ppr_zero_seed_becomes_uniform():
    result = ppr_rank(PATH3, [0.0, 0.0, 0.0], RerankConfig(algorithm="ppr"))
    assert all(e.seed == pytest.approx(1 / 3) for e in result.entries)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_ppr_mass_conservation_property(seed_int):
    graph, seed = random_case(seed_int)
    result = ppr_rank(graph, seed, RerankConfig(algorithm="ppr", epsilon=1e-13))
    assert sum(e.final for e in result.entries) == pytest.approx(1.0, abs=1e-10)
    assert all(e.final >= 0 for e in result.entries)


def test_ppr_dangling_rules_agree_without_dangling_nodes():
    cfg_kwargs = dict(algorithm="ppr", alpha=0.5, epsilon=1e-14)
    seed = [1.0, 0.0, 0.0]
    a = ppr_rank(PATH3, seed, RerankConfig(ppr_dangling="renormalize", **cfg_kwargs))
    b = ppr_rank(PATH3, seed, RerankConfig(ppr_dangling="seed", **cfg_kwargs))
    for x, y in zip(a.entries, b.entries):
        assert x.id == y.id
        assert x.final == pytest.approx(y.final, abs=1e-12)


def test_ppr_column_oracle_on_dangling_free_graph():
    cfg = RerankConfig(alpha=0.5, epsilon=1e-14, algorithm="ppr")
    result = ppr_rank(PATH3, [1.0, 0.0, 0.0], cfg)
    oracle = solve_oracle(PATH3, [1.0, 0.0, 0.0], cfg, normalization="column")
    by_id = {e.id: e.final for e in result.entries}
    for i, node in enumerate(PATH3.ids):
        assert by_id[node] == pytest.approx(oracle[i], abs=1e-10)


def test_ppr_optional_floor_flag():
    graph, seed = star_graph()
    cfg = RerankConfig(algorithm="ppr", ppr_apply_floor=True, epsilon=1e-14)
    result = ppr_rank(graph, seed, cfg)
    by_id = {e.id: (e.final, e.seed) for e in result.entries}
    for final, s in by_id.values():
        assert final >= s


# ---------------------------------------------------------------------------
# hub contrast (the motivating difference between the two smoothers)


def test_hub_contrast():
    graph, seed = star_graph()
    gcs = gcs_rank(graph, seed, RerankConfig(alpha=0.5, epsilon=1e-14))
    ppr = ppr_rank(
        graph, seed, RerankConfig(alpha=0.5, epsilon=1e-14, algorithm="ppr")
    )
    assert gcs.ids()[0] == "detached"
    assert ppr.ids()[0] == "hub"


# ---------------------------------------------------------------------------
# oracle guards, dispatch, ranking utilities


def test_oracle_cap():
    graph = graph_of(np.zeros((1001, 1001)))
    with pytest.raises(ValidationError, match="capped"):
        solve_oracle(graph, np.zeros(1001), RerankConfig())


def test_oracle_column_mode_rejects_dangling():
    A = np.array([[0, 1], [0, 0]], dtype=float)  # column 0 empty
    with pytest.raises(ValidationError, match="dangling"):
        solve_oracle(graph_of(A), [1.0, 0.0], RerankConfig(), normalization="column")


def test_oracle_unknown_normalization():
    with pytest.raises(ConfigError):
        solve_oracle(PATH3, [1.0, 0.0, 0.0], RerankConfig(), normalization="sym")


def test_rerank_dispatch():
    graph, seed = star_graph()
    assert rerank(graph, seed, RerankConfig(algorithm="gcs")).algorithm == "gcs"
    assert rerank(graph, seed, RerankConfig(algorithm="ppr")).algorithm == "ppr"


def test_final_ranking_prefix():
    result = gcs_rank(PATH3, [1.0, 0.0, 0.0], RerankConfig())
    assert final_ranking(result, 2) == result.ids()[:2]
    assert final_ranking(result, 99) == result.ids()
    with pytest.raises(ConfigError):
        final_ranking(result, 0)


# ---------------------------------------------------------------------------
# run file round trip


def test_rerank_run_round_trip(tmp_path):
    graph, seed = star_graph(leaves=3)
    records = [
        RerankRunRecord(
            query_id="q1",
            result=gcs_rank(graph, seed, RerankConfig()),
            scheme="structural",
            alpha=0.5,
            latency_seconds=0.01,
        ),
        RerankRunRecord(
            query_id="q2",
            result=ppr_rank(graph, seed, RerankConfig(algorithm="ppr")),
            scheme="union",
            alpha=0.5,
        ),
    ]
    path = tmp_path / "run.jsonl"
    save_rerank_run(records, path)
    loaded = load_rerank_run(path)
    assert [r.query_id for r in loaded] == ["q1", "q2"]
    assert loaded[0].latency_seconds == 0.01
    assert loaded[1].latency_seconds is None
    assert loaded[1].scheme == "union"
    for orig, back in zip(records, loaded):
        assert back.result.algorithm == orig.result.algorithm
        assert back.result.ids() == orig.result.ids()
        for a, b in zip(orig.result.entries, back.result.entries):
            assert (a.final, a.seed) == (b.final, b.seed)

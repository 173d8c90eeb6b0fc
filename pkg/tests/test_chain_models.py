import itertools
import json

import numpy as np
import pytest

from markov_noise.chain_models import (
    Chain,
    FamilySpec,
    build_graph_walk,
    chain_from_dict,
    family_size,
    graph_volume,
    load_chain,
    make_family,
    random_reversible_chain,
    save_chain,
    stationary_from_generator,
    validate,
)
from markov_noise.errors import (
    DisconnectedGraph,
    EmptyGraph,
    InvalidParams,
    Reducible,
    SelfLoopOrMultiEdge,
    ValidationFailed,
)

from conftest import corpus_id, family_corpus


def test_triangle_walk():
    chain = build_graph_walk([("a", "b"), ("b", "c"), ("a", "c")])
    Q = chain.generator
    assert np.allclose(Q[~np.eye(3, dtype=bool)], 0.5)
    assert np.allclose(np.diag(Q), -1.0)
    assert np.allclose(chain.pi, 1 / 3)


def test_path_walk():
    chain = build_graph_walk([("a", "b"), ("b", "c")])
    assert np.allclose(chain.pi, [0.25, 0.5, 0.25])
    a, b = chain.index("a"), chain.index("b")
    assert chain.generator[a, b] == 1.0
    assert chain.generator[b, a] == 0.5


def test_glued_cliques_bridge_mass():
    chain = make_family("glued_cliques", n=3)
    assert chain.n_states == 12
    assert graph_volume(chain) == 80
    # The K9-side endpoint of the bridge has degree 9.
    assert chain.pi[chain.index("L0")] == pytest.approx(9 / 80, abs=1e-15)
    assert chain.pi[chain.index("S0")] == pytest.approx(3 / 80, abs=1e-15)


@pytest.mark.parametrize(
    "edges, vertices, err",
    [
        ([], None, EmptyGraph),
        ([("a", "a")], None, SelfLoopOrMultiEdge),
        ([("a", "b"), ("b", "a")], None, SelfLoopOrMultiEdge),
        ([("a", "b"), ("c", "d")], None, DisconnectedGraph),
        ([("a", "b")], ["a", "b", "c"], DisconnectedGraph),
    ],
)
def test_graph_walk_errors(edges, vertices, err):
    with pytest.raises(err):
        build_graph_walk(edges, vertices)


def test_rerandomize_one_coordinate():
    chain = make_family("hypercube_rerandomize", n=1)
    assert chain.n_states == 2
    assert chain.generator[0, 1] == 0.5 and chain.generator[1, 0] == 0.5


def test_slice_exclusion_rates_by_brute_force():
    n, k = 4, 2
    chain = make_family("slice_exclusion", n=n, k=k)
    assert chain.n_states == 6
    # Oracle: enumerate ordered pairs (i, j) in [n]^2, each at rate 1/n^2.
    for a, s in enumerate(chain.states):
        expected = {}
        for i, j in itertools.product(range(n), repeat=2):
            t = list(s)
            t[i], t[j] = t[j], t[i]
            t = "".join(t)
            if t != s:
                expected[t] = expected.get(t, 0.0) + 1 / n**2
        assert len(expected) == 4
        for t, rate in expected.items():
            assert rate == pytest.approx(1 / 8)
            assert chain.generator[a, chain.index(t)] == pytest.approx(rate, abs=1e-15)


@pytest.mark.parametrize("n,k", [(4, 0), (4, 4), (4, 5), (1, 1)])
def test_slice_exclusion_invalid(n, k):
    with pytest.raises(InvalidParams):
        make_family("slice_exclusion", n=n, k=k)


@pytest.mark.parametrize("n,k", [(5, 2), (6, 3), (7, 1)])
def test_slice_exclusion_size_and_uniform(n, k):
    from math import comb

    chain = make_family("slice_exclusion", n=n, k=k)
    assert chain.n_states == comb(n, k)
    assert np.all(chain.pi == 1 / comb(n, k))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_regular_glue_is_regular(n):
    chain = make_family("regular_glue", n=n)
    Q = chain.generator
    degree = ((Q > 0) & ~np.eye(chain.n_states, dtype=bool)).sum(axis=1)
    assert np.all(degree == n)
    off = Q[(Q > 0)]
    assert np.allclose(off, 1 / n)


def test_star_join_counts():
    chain = make_family("star_join", n=2)
    assert chain.n_states == 4 * 5
    assert chain.family.params == {"n": 2, "stars": 4, "leaves": 4}
    alt = make_family("star_join", n=3, stars=3, leaves=3)
    assert alt.n_states == 12


@pytest.mark.parametrize("item", family_corpus(64), ids=corpus_id)
def test_every_family_validates(item):
    name, params = item
    chain = make_family(name, **params)
    assert chain.n_states == family_size(name, **params)
    report = validate(chain)
    assert report.ok, report.failed()
    if name not in ("hypercube_rerandomize", "slice_exclusion"):
        # unit-rate graph walk: stationary edge flow is 1/vol(G)
        F = chain.flow_matrix()
        vol = graph_volume(chain)
        assert np.allclose(F[F > 0], 1 / vol, rtol=1e-12, atol=0)


def test_unknown_family():
    with pytest.raises(InvalidParams):
        make_family("torus", n=3)


def test_stationary_examples():
    k3 = make_family("complete", n=3)
    assert np.allclose(stationary_from_generator(k3.generator), 1 / 3, atol=1e-15)
    path = build_graph_walk([("a", "b"), ("b", "c")])
    assert np.allclose(stationary_from_generator(path.generator), [0.25, 0.5, 0.25], atol=1e-15)


def test_stationary_recovers_construction_weights(rng):
    weights = rng.uniform(0.1, 1.0, 5)
    pi = weights / weights.sum()
    C = rng.uniform(0.1, 1.0, (5, 5))
    C = np.triu(C, 1) + np.triu(C, 1).T
    Q = C / pi[:, None]
    np.fill_diagonal(Q, -Q.sum(axis=1))
    assert np.max(np.abs(stationary_from_generator(Q) - pi)) <= 1e-10


def test_stationary_reducible():
    Q = np.array([[-1.0, 1.0, 0.0], [1.0, -1.0, 0.0], [0.0, 0.0, 0.0]])
    with pytest.raises(Reducible):
        stationary_from_generator(Q)


def test_validate_passes_k3():
    assert validate(make_family("complete", n=3)).ok


def test_validate_flags_row_sum():
    good = make_family("complete", n=3)
    Q = np.array(good.generator)
    Q[0, 0] += 0.01
    bad = Chain(good.states, Q, good.pi)
    report = validate(bad)
    assert not report.ok
    assert "row_sums_zero" in report.failed()


def test_validate_flags_nonreversible_cycle():
    Q = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]])
    bad = Chain(("a", "b", "c"), Q, np.full(3, 1 / 3))
    report = validate(bad)
    assert "detailed_balance" in report.failed()
    assert "row_sums_zero" not in report.failed()
    with pytest.raises(ValidationFailed):
        Chain.from_generator(("a", "b", "c"), Q)


def test_supplied_pi_must_agree():
    chain = make_family("complete", n=3)
    with pytest.raises(ValidationFailed):
        Chain.from_generator(chain.states, chain.generator, [0.5, 0.25, 0.25])


def test_chain_is_immutable():
    chain = make_family("complete", n=3)
    with pytest.raises(ValueError):
        chain.generator[0, 0] = 1.0
    with pytest.raises(AttributeError):
        chain.pi = None


def test_random_reversible_chain_valid():
    for seed in range(20):
        chain = random_reversible_chain(int(3 + seed), seed)
        assert validate(chain).ok


def test_chain_spec_roundtrip(tmp_path):
    chain = make_family("glued_cliques", n=2)
    path = tmp_path / "c.json"
    save_chain(chain, path)
    again = load_chain(path)
    assert again.states == chain.states
    assert np.array_equal(again.generator, chain.generator)
    assert np.array_equal(again.pi, chain.pi)


def test_chain_spec_family_form():
    chain = chain_from_dict({"family": "cycle", "params": {"n": 3}})
    assert chain.n_states == 6
    assert chain.family == FamilySpec("cycle", {"n": 3})


def test_chain_spec_explicit_without_pi():
    data = {"states": ["x", "y"], "generator": [[-2.0, 2.0], [1.0, -1.0]]}
    chain = chain_from_dict(data)
    assert np.allclose(chain.pi, [1 / 3, 2 / 3])


def test_chain_spec_rejects_garbage(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ValidationFailed):
        load_chain(p)
    with pytest.raises(ValidationFailed):
        chain_from_dict({"states": ["a"]})
    with pytest.raises(ValidationFailed):
        chain_from_dict(json.loads('{"states": ["a","b"], "generator": [[-1, 1], [1, -2]]}'))

"""Finite reversible continuous-time Markov chains.

A :class:`Chain` bundles state labels, a generator matrix ``Q`` (rates per unit
time, rows summing to zero) and its stationary law ``pi``.  Chains are built
either from an undirected graph (unit-rate random walk: ``q_vw = 1/deg(v)``,
``q_vv = -1``), from one of the named families in :data:`FAMILIES`, or from a
user-supplied generator.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from math import comb
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import (
    DisconnectedGraph,
    EmptyGraph,
    InvalidParams,
    NumericalFailure,
    Reducible,
    SelfLoopOrMultiEdge,
    ValidationFailed,
)

ROW_SUM_TOL = 1e-12
DETAILED_BALANCE_TOL = 1e-10
PI_SUM_TOL = 1e-12
PI_AGREEMENT_TOL = 1e-9
STATIONARY_RESIDUAL_TOL = 1e-10

FAMILIES = (
    "complete",
    "cycle",
    "hypercube_walk",
    "hypercube_rerandomize",
    "star",
    "glued_cliques",
    "star_join",
    "regular_glue",
    "slice_exclusion",
)

# Families whose automorphism group acts transitively on states.
TRANSITIVE_FAMILIES = frozenset(
    {"complete", "cycle", "hypercube_walk", "hypercube_rerandomize", "slice_exclusion"}
)


@dataclass(frozen=True)
class FamilySpec:
    name: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"family": self.name, "params": dict(self.params)}


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Chain:
    """A reversible, irreducible continuous-time Markov chain on a finite set.

    Use :meth:`from_generator`, :func:`build_graph_walk` or :func:`make_family`
    rather than the raw constructor; those validate the standing assumptions.
    """

    states: tuple
    generator: np.ndarray
    pi: np.ndarray
    family: FamilySpec | None = None
    declared_automorphisms: tuple | None = None
    declared_transitive: bool | None = None

    @classmethod
    def from_generator(
        cls,
        states: Sequence,
        generator,
        pi=None,
        *,
        family: FamilySpec | None = None,
        declared_automorphisms: Iterable[Sequence[int]] | None = None,
        declared_transitive: bool | None = None,
        validate_chain: bool = True,
    ) -> "Chain":
        Q = np.array(generator, dtype=float)
        states = tuple(states)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValidationFailed("generator must be a square matrix", shape=list(Q.shape))
        if len(states) != Q.shape[0]:
            raise ValidationFailed(
                "state count does not match generator size",
                states=len(states),
                size=Q.shape[0],
            )
        if len(set(states)) != len(states):
            raise ValidationFailed("state labels must be unique")
        if validate_chain:
            _check_generator_shape(Q)
        computed = stationary_from_generator(Q)
        if pi is None:
            pi = computed
        else:
            pi = np.array(pi, dtype=float)
            if pi.shape != computed.shape:
                raise ValidationFailed("pi has the wrong length", length=int(pi.size))
            worst = float(np.max(np.abs(pi - computed)))
            if worst > PI_AGREEMENT_TOL:
                raise ValidationFailed(
                    "supplied pi disagrees with the stationary law of the generator",
                    max_abs_difference=worst,
                )
        autos = None
        if declared_automorphisms is not None:
            autos = tuple(tuple(int(x) for x in p) for p in declared_automorphisms)
        chain = cls(
            states=states,
            generator=_frozen(Q),
            pi=_frozen(pi),
            family=family,
            declared_automorphisms=autos,
            declared_transitive=declared_transitive,
        )
        if validate_chain:
            report = validate(chain)
            if not report.ok:
                raise ValidationFailed(
                    "chain violates standing assumptions",
                    failed=[c.name for c in report.checks if not c.passed],
                )
        return chain

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def is_transitive(self) -> bool:
        return bool(self.declared_transitive)

    def index(self, label) -> int:
        try:
            return self.states.index(label)
        except ValueError:
            raise InvalidParams(f"unknown state label {label!r}") from None

    def subset_mask(self, subset) -> np.ndarray:
        """Boolean mask for a subset given as labels, indices or a mask."""
        arr = np.asarray(subset)
        if arr.dtype == bool:
            if arr.shape != (self.n_states,):
                raise InvalidParams("mask has the wrong length", length=int(arr.size))
            return arr.copy()
        mask = np.zeros(self.n_states, dtype=bool)
        for item in subset:
            if isinstance(item, (int, np.integer)) and not isinstance(item, bool):
                if not 0 <= int(item) < self.n_states:
                    raise InvalidParams(f"state index {item} out of range")
                mask[int(item)] = True
            else:
                mask[self.index(item)] = True
        return mask

    def flow_matrix(self) -> np.ndarray:
        """Stationary edge flow ``pi(i) q_ij`` with zero diagonal."""
        F = self.pi[:, None] * self.generator
        np.fill_diagonal(F, 0.0)
        return F

    def to_dict(self) -> dict:
        out = {
            "states": [str(s) for s in self.states],
            "generator": self.generator.tolist(),
            "pi": self.pi.tolist(),
        }
        if self.declared_transitive is not None:
            out["declared_transitive"] = bool(self.declared_transitive)
        if self.declared_automorphisms:
            out["declared_automorphisms"] = [list(p) for p in self.declared_automorphisms]
        if self.family is not None:
            out["family_tag"] = self.family.to_dict()
        return out


# -- validation -------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst_residual: float


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "worst_residual": c.worst_residual}
                for c in self.checks
            ],
        }


def _is_irreducible(Q: np.ndarray) -> bool:
    adj = (Q > 0).astype(np.int8)
    np.fill_diagonal(adj, 0)
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    return n_comp == 1


def validate(chain: Chain) -> ValidationReport:
    """Check every standing assumption and report worst-case residuals."""
    Q = np.asarray(chain.generator, dtype=float)
    pi = np.asarray(chain.pi, dtype=float)
    checks = []

    off = Q.copy()
    np.fill_diagonal(off, 0.0)
    worst_neg = float(max(0.0, -off.min())) if off.size else 0.0
    checks.append(CheckResult("off_diagonal_nonnegative", worst_neg == 0.0, worst_neg))

    scale = np.maximum(1.0, np.abs(Q).sum(axis=1))
    rows = np.abs(Q.sum(axis=1)) / scale
    worst = float(rows.max()) if rows.size else 0.0
    checks.append(CheckResult("row_sums_zero", worst <= ROW_SUM_TOL, worst))

    flow = pi[:, None] * off
    diff = np.abs(flow - flow.T)
    bound = np.maximum(np.maximum(flow, flow.T), 1e-300)
    ratio = diff / bound
    worst = float(ratio.max()) if ratio.size else 0.0
    checks.append(CheckResult("detailed_balance", worst <= DETAILED_BALANCE_TOL, worst))

    irreducible = Q.shape[0] >= 2 and _is_irreducible(Q)
    checks.append(CheckResult("irreducible", irreducible, 0.0 if irreducible else 1.0))

    worst = float(max(0.0, -pi.min())) if pi.size else 1.0
    checks.append(CheckResult("pi_positive", bool(pi.size and pi.min() > 0), worst))

    worst = float(abs(pi.sum() - 1.0))
    checks.append(CheckResult("pi_normalized", worst <= PI_SUM_TOL, worst))

    residual = pi @ Q
    worst = float(np.abs(residual).max() / max(1.0, np.abs(Q).max())) if pi.size else 1.0
    checks.append(CheckResult("pi_stationary", worst <= STATIONARY_RESIDUAL_TOL, worst))
    return ValidationReport(tuple(checks))


def stationary_from_generator(generator) -> np.ndarray:
    """Solve ``pi Q = 0``, ``sum(pi) = 1`` for an irreducible generator."""
    Q = np.asarray(generator, dtype=float)
    n = Q.shape[0]
    if n == 0:
        raise EmptyGraph("generator has no states")
    if n == 1:
        return np.ones(1)
    if not _is_irreducible(Q):
        raise Reducible("generator is not irreducible")
    A = Q.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"stationary solve failed: {exc}") from exc
    residual = float(np.abs(pi @ Q).max()) / max(1.0, float(np.abs(Q).max()))
    if not np.all(np.isfinite(pi)) or residual > STATIONARY_RESIDUAL_TOL or pi.min() <= 0:
        raise NumericalFailure("stationary solve is inaccurate", residual=residual)
    return pi / pi.sum()


# -- graph walks --------------------------------------------------------------


def _check_generator_shape(Q: np.ndarray) -> None:
    """Fail fast on sign or row-sum violations before attempting a solve."""
    off = Q[~np.eye(Q.shape[0], dtype=bool)]
    if not np.all(np.isfinite(Q)) or np.any(off < 0):
        raise ValidationFailed("generator has negative or non-finite off-diagonal rates")
    sums = np.abs(Q.sum(axis=1))
    scale = np.maximum(1.0, np.abs(Q).sum(axis=1))
    if np.any(sums > ROW_SUM_TOL * scale):
        raise ValidationFailed("generator rows must sum to zero", max_row_sum=float(sums.max()))


def build_graph_walk(
    edges: Iterable[tuple],
    vertices: Sequence | None = None,
    *,
    family: FamilySpec | None = None,
    declared_automorphisms=None,
    declared_transitive: bool | None = None,
) -> Chain:
    """Unit-rate random walk on a simple connected undirected graph.

    Vertex order follows ``vertices`` when given, else first appearance in
    ``edges``.  ``pi(v) = deg(v) / vol(G)`` with ``vol(G)`` twice the edge count.
    """
    edges = [tuple(e) for e in edges]
    if vertices is None:
        order = []
        seen = set()
        for u, v in edges:
            for x in (u, v):
                if x not in seen:
                    seen.add(x)
                    order.append(x)
        vertices = order
    vertices = list(vertices)
    for u, v in edges:
        if u == v:
            raise SelfLoopOrMultiEdge(f"self loop at {u!r}")
    if len(vertices) < 2 or not edges:
        raise EmptyGraph("graph needs at least two vertices and one edge")
    pos = {v: i for i, v in enumerate(vertices)}
    if len(pos) != len(vertices):
        raise SelfLoopOrMultiEdge("duplicate vertex labels")
    n = len(vertices)
    adj = np.zeros((n, n), dtype=np.int64)
    for u, v in edges:
        if u == v:
            raise SelfLoopOrMultiEdge(f"self loop at {u!r}")
        if u not in pos or v not in pos:
            raise EmptyGraph(f"edge ({u!r}, {v!r}) uses an undeclared vertex")
        i, j = pos[u], pos[v]
        if adj[i, j]:
            raise SelfLoopOrMultiEdge(f"repeated edge ({u!r}, {v!r})")
        adj[i, j] = adj[j, i] = 1
    n_comp, _ = connected_components(adj, directed=False)
    if n_comp != 1:
        raise DisconnectedGraph("graph is not connected", components=int(n_comp))
    deg = adj.sum(axis=1).astype(float)
    Q = adj / deg[:, None]
    np.fill_diagonal(Q, -1.0)
    pi = deg / deg.sum()
    return Chain.from_generator(
        vertices,
        Q,
        pi,
        family=family,
        declared_automorphisms=declared_automorphisms,
        declared_transitive=declared_transitive,
    )


def graph_volume(chain: Chain) -> int:
    """Twice the edge count of a unit-rate graph walk."""
    adj = (chain.generator > 0) & ~np.eye(chain.n_states, dtype=bool)
    return int(adj.sum())


# -- named families ---------------------------------------------------------------


def _bits(s: int, n: int) -> str:
    return "".join(str((s >> i) & 1) for i in range(n))


def _require(cond: bool, message: str, **context):
    if not cond:
        raise InvalidParams(message, **context)


def _int_param(params: dict, key: str, default=None) -> int:
    if key not in params:
        if default is None:
            raise InvalidParams(f"missing parameter {key!r}")
        return default
    value = params[key]
    if isinstance(value, bool) or int(value) != value:
        raise InvalidParams(f"parameter {key!r} must be an integer", value=value)
    return int(value)


def _complete(n):
    _require(n >= 2, "complete needs n >= 2", n=n)
    labels = [str(i) for i in range(n)]
    edges = [(labels[i], labels[j]) for i in range(n) for j in range(i + 1, n)]
    shift = [(i + 1) % n for i in range(n)]
    return edges, labels, [shift]


def _cycle(n):
    _require(n >= 2, "cycle needs n >= 2 (2n >= 4 vertices)", n=n)
    m = 2 * n
    labels = [str(i) for i in range(m)]
    edges = [(labels[i], labels[(i + 1) % m]) for i in range(m)]
    rotation = [(i + 1) % m for i in range(m)]
    return edges, labels, [rotation]


def _hypercube(n):
    _require(n >= 1, "hypercube needs n >= 1", n=n)
    size = 1 << n
    labels = [_bits(s, n) for s in range(size)]
    edges = [
        (labels[s], labels[s ^ (1 << i)])
        for s in range(size)
        for i in range(n)
        if s < s ^ (1 << i)
    ]
    flips = [[s ^ (1 << i) for s in range(size)] for i in range(n)]
    return edges, labels, flips


def _star(n):
    _require(n >= 1, "star needs n >= 1 leaves", n=n)
    labels = ["c"] + [f"l{i}" for i in range(n)]
    edges = [("c", f"l{i}") for i in range(n)]
    return edges, labels


def _glued_cliques(n):
    _require(n >= 2, "glued_cliques needs n >= 2", n=n)
    big = [f"L{i}" for i in range(n * n)]
    small = [f"S{i}" for i in range(n)]
    edges = [(big[i], big[j]) for i in range(len(big)) for j in range(i + 1, len(big))]
    edges += [(small[i], small[j]) for i in range(n) for j in range(i + 1, n)]
    edges.append((big[0], small[0]))
    return edges, big + small


def _star_join(n, stars, leaves):
    _require(n >= 1 and stars >= 2 and leaves >= 1, "star_join needs >= 2 stars with >= 1 leaf")
    labels, edges = [], []
    centers = [f"s{s}" for s in range(stars)]
    for s, c in enumerate(centers):
        labels.append(c)
        for j in range(leaves):
            leaf = f"s{s}_{j}"
            labels.append(leaf)
            edges.append((c, leaf))
    edges += [(centers[a], centers[b]) for a in range(stars) for b in range(a + 1, stars)]
    return edges, labels


def _regular_glue(n):
    _require(n >= 2, "regular_glue needs n >= 2 to stay connected", n=n)
    k_labels = [f"K{i}" for i in range(n + 1)]
    size = 1 << n
    h_labels = ["H" + _bits(s, n) for s in range(size)]
    k_edges = [
        (k_labels[i], k_labels[j]) for i in range(n + 1) for j in range(i + 1, n + 1)
    ]
    h_edges = [
        (h_labels[s], h_labels[s ^ (1 << i)])
        for s in range(size)
        for i in range(n)
        if s < s ^ (1 << i)
    ]
    # Lowest-label surgery: drop K0-K1 and H(0)-H(e_0), reconnect K0-H(0), K1-H(e_0).
    k_edges.remove((k_labels[0], k_labels[1]))
    h_edges.remove((h_labels[0], h_labels[1]))
    edges = k_edges + h_edges + [(k_labels[0], h_labels[0]), (k_labels[1], h_labels[1])]
    return edges, k_labels + h_labels


def _rerandomize(n) -> Chain:
    _require(n >= 1, "hypercube_rerandomize needs n >= 1", n=n)
    size = 1 << n
    Q = np.zeros((size, size))
    for s in range(size):
        for i in range(n):
            Q[s, s ^ (1 << i)] = 0.5
    np.fill_diagonal(Q, -n / 2)
    labels = [_bits(s, n) for s in range(size)]
    flips = [[s ^ (1 << i) for s in range(size)] for i in range(n)]
    return Chain.from_generator(
        labels,
        Q,
        np.full(size, 1.0 / size),
        family=FamilySpec("hypercube_rerandomize", {"n": n}),
        declared_automorphisms=flips,
        declared_transitive=True,
    )


def _slice_exclusion(n, k) -> Chain:
    _require(n >= 2 and 0 < k < n, "slice_exclusion needs 0 < k < n", n=n, k=k)
    states = []
    for ones in itertools.combinations(range(n), k):
        w = ["0"] * n
        for i in ones:
            w[i] = "1"
        states.append("".join(w))
    pos = {s: i for i, s in enumerate(states)}
    size = len(states)
    Q = np.zeros((size, size))
    rate = 2.0 / (n * n)  # ordered pairs (i,j) and (j,i) give the same swap
    for s in states:
        for i in range(n):
            for j in range(i + 1, n):
                if s[i] != s[j]:
                    t = list(s)
                    t[i], t[j] = t[j], t[i]
                    Q[pos[s], pos["".join(t)]] += rate
    np.fill_diagonal(Q, -Q.sum(axis=1))
    autos = []
    for i in range(n - 1):
        perm = []
        for s in states:
            t = list(s)
            t[i], t[i + 1] = t[i + 1], t[i]
            perm.append(pos["".join(t)])
        autos.append(perm)
    return Chain.from_generator(
        states,
        Q,
        np.full(size, 1.0 / size),
        family=FamilySpec("slice_exclusion", {"n": n, "k": k}),
        declared_automorphisms=autos,
        declared_transitive=True,
    )


def make_family(spec: FamilySpec | str, **params) -> Chain:
    """Build one of the named chain families.

    ``make_family("cycle", n=4)`` and ``make_family(FamilySpec("cycle", {"n": 4}))``
    are equivalent.
    """
    if isinstance(spec, str):
        spec = FamilySpec(spec, params)
    name, p = spec.name, dict(spec.params)
    if name not in FAMILIES:
        raise InvalidParams(f"unknown family {name!r}", known=list(FAMILIES))
    n = _int_param(p, "n")
    if name == "hypercube_rerandomize":
        return _rerandomize(n)
    if name == "slice_exclusion":
        return _slice_exclusion(n, _int_param(p, "k"))

    autos = None
    if name == "complete":
        edges, labels, autos = _complete(n)
    elif name == "cycle":
        edges, labels, autos = _cycle(n)
    elif name == "hypercube_walk":
        edges, labels, autos = _hypercube(n)
    elif name == "star":
        edges, labels = _star(n)
    elif name == "glued_cliques":
        edges, labels = _glued_cliques(n)
    elif name == "star_join":
        stars = _int_param(p, "stars", 2 * n)
        leaves = _int_param(p, "leaves", n * n)
        p.update(stars=stars, leaves=leaves)
        edges, labels = _star_join(n, stars, leaves)
    else:
        edges, labels = _regular_glue(n)
    return build_graph_walk(
        edges,
        labels,
        family=FamilySpec(name, p),
        declared_automorphisms=autos,
        declared_transitive=name in TRANSITIVE_FAMILIES,
    )


def family_size(name: str, **params) -> int:
    """Number of states a family would have, without building it."""
    n = int(params["n"])
    if name == "complete":
        return n
    if name == "cycle":
        return 2 * n
    if name in ("hypercube_walk", "hypercube_rerandomize"):
        return 1 << n
    if name == "star":
        return n + 1
    if name == "glued_cliques":
        return n * n + n
    if name == "star_join":
        stars = int(params.get("stars", 2 * n))
        leaves = int(params.get("leaves", n * n))
        return stars * (leaves + 1)
    if name == "regular_glue":
        return n + 1 + (1 << n)
    if name == "slice_exclusion":
        return comb(n, int(params["k"]))
    raise InvalidParams(f"unknown family {name!r}")


def random_reversible_chain(
    n_states: int, rng: np.random.Generator | int | None = None, edge_prob: float = 0.3
) -> Chain:
    """Random reversible chain from random weights and symmetric conductances.

    A random spanning tree guarantees irreducibility; extra edges are added
    independently with probability ``edge_prob``.  ``q_ij = c_ij / w_i`` with
    ``w`` normalised to ``pi``, so the construction weights are the exact
    stationary law.
    """
    rng = np.random.default_rng(rng)
    if n_states < 2:
        raise InvalidParams("need at least two states")
    weights = rng.uniform(0.2, 1.0, n_states)
    pi = weights / weights.sum()
    C = np.zeros((n_states, n_states))
    order = rng.permutation(n_states)
    for a in range(1, n_states):
        i, j = order[a], order[rng.integers(a)]
        C[i, j] = C[j, i] = rng.uniform(0.1, 1.0)
    extra = np.triu(rng.random((n_states, n_states)) < edge_prob, 1)
    vals = np.triu(rng.uniform(0.1, 1.0, (n_states, n_states)), 1)
    C = np.where(extra & (C == 0), vals + vals.T, C)
    C = np.triu(C, 1)
    C = C + C.T
    Q = C / pi[:, None] / n_states
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Chain.from_generator([str(i) for i in range(n_states)], Q, pi)


# -- chain spec files ---------------------------------------------------------------


def chain_from_dict(data: dict) -> Chain:
    """Parse the chain-spec JSON schema (family form or explicit form)."""
    if not isinstance(data, dict):
        raise ValidationFailed("chain spec must be a JSON object")
    if "family" in data:
        params = data.get("params", {})
        if not isinstance(params, dict):
            raise InvalidParams("params must be an object")
        return make_family(FamilySpec(str(data["family"]), params))
    if "states" not in data or "generator" not in data:
        raise ValidationFailed("chain spec needs either 'family' or 'states' + 'generator'")
    states = [str(s) for s in data["states"]]
    try:
        Q = np.array(data["generator"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationFailed(f"generator is not a numeric matrix: {exc}") from exc
    return Chain.from_generator(
        states,
        Q,
        data.get("pi"),
        declared_automorphisms=data.get("declared_automorphisms"),
        declared_transitive=data.get("declared_transitive"),
    )


def load_chain(path: str | Path) -> Chain:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationFailed(f"chain spec is not valid JSON: {exc}") from exc
    return chain_from_dict(data)


def save_chain(chain: Chain, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(chain.to_dict(), fh, indent=1)

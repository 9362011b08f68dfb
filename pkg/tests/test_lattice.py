from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from helpers import path
from ssi_core.errors import InvalidInputError
from ssi_core.filters import BankSpec, is_subspace
from ssi_core.lattice import (
    EnumerationLimits,
    build_lattice,
    dedup_banks,
    enumerate_banks,
    join,
    meet,
    span_fingerprint,
    to_dot,
    to_json,
)
from ssi_core.spectral import shift_for


@pytest.fixture(scope="module")
def p2():
    s = shift_for(path(2))
    specs = dedup_banks(enumerate_banks(2, 1), s)
    return s, specs


def _node(lat, spec: BankSpec) -> int:
    """Index of the node spanning the same space as `spec`."""
    hits = [
        i
        for i, node in enumerate(lat.nodes)
        if node.spec is not None
        and is_subspace(spec, node.spec, lat.shift)
        and is_subspace(node.spec, spec, lat.shift)
    ]
    assert len(hits) == 1
    return hits[0]


def test_enumerate_counts():
    assert len(enumerate_banks(2, 1)) == 21
    assert len(enumerate_banks(2, 0)) == 3 + 3
    # degrees are capped at n - 1
    assert enumerate_banks(2, 5) == enumerate_banks(2, 1)
    singles = enumerate_banks(3, 1, EnumerationLimits(max_k=1, max_set_size=1))
    assert [sp.label() for sp in singles[:2]] == ["C=({0}) D=(0)", "C=({0}) D=(1)"]
    assert len(singles) == 6


def test_enumerate_guard():
    with pytest.raises(InvalidInputError) as ei:
        enumerate_banks(5, 1)
    assert ei.value.code == "enumeration-guard"
    assert len(enumerate_banks(5, 0, EnumerationLimits(max_k=1, max_set_size=1))) == 5


def test_dedup_path2(p2):
    _, specs = p2
    assert len(specs) == 11
    dims = Counter()
    s = shift_for(path(2))
    lat = build_lattice(specs, s)
    for node in lat.nodes:
        dims[node.dim] += 1
    assert dims == Counter({1: 3, 2: 4, 3: 3, 4: 1})


def test_dedup_keeps_smallest_representative(p2):
    _, specs = p2
    # {E00, E01}: the pair ({0},0)+({0},1) sorts before the single ({0},1)
    assert BankSpec.of([[0], [0]], [0, 1], 2) in specs
    assert BankSpec.of([[0]], [1], 2) not in specs


def test_lattice_shape_path2(p2):
    s, specs = p2
    lat = build_lattice(specs, s)
    assert len(lat.nodes) == 11
    assert len(lat.edges) == 15
    assert lat.bottom is None
    dims = [node.dim for node in lat.nodes]
    assert dims == sorted(dims)

    full = build_lattice(specs, s, adjoin_bottom=True)
    assert len(full.nodes) == 12
    assert len(full.edges) == 18
    assert full.bottom == 0
    assert full.nodes[0].dim == 0


def test_lattice_on_two_vertices(p2):
    s, specs = p2
    lat = build_lattice(specs, s, adjoin_bottom=True)
    top = _node(lat, BankSpec.of([[0], [1]], [1, 1], 2))
    si = _node(lat, BankSpec.of([[0, 1]], [1], 2))
    left = _node(lat, BankSpec.of([[0]], [1], 2))
    assert lat.nodes[top].dim == 4
    assert lat.nodes[si].dim == 2
    assert join(lat, si, left) == top
    assert meet(lat, si, left) == lat.bottom
    assert all(lat.leq(i, top) for i in range(len(lat.nodes)))
    assert lat.leq(lat.bottom, si) and not lat.leq(si, left)


def test_meet_without_bottom_can_be_missing(p2):
    s, specs = p2
    lat = build_lattice(specs, s)
    si = _node(lat, BankSpec.of([[0, 1]], [1], 2))
    left = _node(lat, BankSpec.of([[0]], [1], 2))
    assert meet(lat, si, left) is None
    identity = _node(lat, BankSpec.of([[0, 1]], [0], 2))
    diag = _node(lat, BankSpec.of([[0], [1]], [0, 0], 2))
    assert meet(lat, si, diag) == identity


def test_duplicate_spans_rejected():
    s = shift_for(path(2))
    specs = [BankSpec.of([[0]], [1], 2), BankSpec.of([[0], [0]], [0, 1], 2)]
    with pytest.raises(InvalidInputError) as ei:
        build_lattice(specs, s)
    assert ei.value.code == "duplicate-span"


def test_lattice_rejects_other_sizes():
    with pytest.raises(InvalidInputError):
        build_lattice([BankSpec.of([[0]], [0], 3)], shift_for(path(2)))


def test_span_fingerprint_ignores_basis_choice():
    e = np.zeros((4, 1))
    e[2, 0] = 1.0
    assert span_fingerprint(e) == span_fingerprint(-e)
    assert span_fingerprint(e) != span_fingerprint(np.eye(4)[:, :1])


def test_dot_and_json(p2):
    s, specs = p2
    lat = build_lattice(specs, s, adjoin_bottom=True)
    dot = to_dot(lat)
    assert dot.startswith("digraph bank_lattice {\n  rankdir=BT;\n")
    assert dot.count("->") == 18
    assert 'n0 [label="trivial\\ndim=0"];' in dot

    doc = to_json(lat)
    assert len(doc["nodes"]) == 12
    assert doc["nodes"][0]["spec"] is None
    assert doc["edges"] == [list(e) for e in lat.edges]
    assert len({n["fingerprint"] for n in doc["nodes"]}) == 12


def test_reachability_matches_containment_on_three_vertices():
    s = shift_for(path(3))
    specs = dedup_banks(enumerate_banks(3, 1), s)
    lat = build_lattice(specs, s)
    idx = range(len(lat.nodes))
    mismatched = [
        (lat.nodes[a].spec.label(), lat.nodes[b].spec.label())
        for a in idx
        for b in idx
        if lat.leq(a, b) != is_subspace(lat.nodes[a].spec, lat.nodes[b].spec, s)
    ]
    assert mismatched == []


def test_degree_chain_is_a_path():
    s = shift_for(path(3))
    chain = [BankSpec.of([[0]], [d], 3) for d in (0, 1, 2)]
    lat = build_lattice(chain, s)
    assert [node.dim for node in lat.nodes] == [1, 2, 3]
    assert sorted(lat.edges) == [(0, 1), (1, 2)]


def test_single_spec_lattice():
    lat = build_lattice([BankSpec.of([[0, 1]], [1], 2)], shift_for(path(2)))
    assert len(lat.nodes) == 1
    assert lat.edges == ()

from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topocrystal.crystal import QuotientEdge, QuotientGraph, TopologicalCrystal, lattice_zd, toblerone
from topocrystal.perturbation import verify_decomposition
from topocrystal.specfile import (SpecError, parse_crystal, parse_perturbation, read_crystal,
                                  read_perturbation)

SPECS = Path(__file__).resolve().parent.parent / "specs"


def dump_crystal(q: QuotientGraph) -> str:
    lines = [f"dimension {q.d}", "vertices"]
    lines += [f"  {name} {w!r}" for name, w in zip(q.names, q.vertex_weights)]
    lines += ["end", "edges"]
    for e in q.edges:
        idx = " ".join(str(c) for c in e.index)
        lines.append(f"  {q.names[e.origin]} {q.names[e.terminus]} {idx} {e.weight!r}")
    lines += ["end", "potential"]
    lines += [f"  {name} {v!r}" for name, v in zip(q.names, q.potential)]
    lines.append("end")
    return "\n".join(lines) + "\n"


@st.composite
def quotients(draw):
    n = draw(st.integers(1, 4))
    d = draw(st.integers(1, 3))
    pos = st.floats(0.01, 100, allow_nan=False)
    edges, seen = [], set()
    for _ in range(draw(st.integers(0, 6))):
        o, t = draw(st.integers(0, n - 1)), draw(st.integers(0, n - 1))
        eta = tuple(draw(st.lists(st.integers(-3, 3), min_size=d, max_size=d)))
        if (o == t and not any(eta)) or (o, t, eta) in seen or (t, o, tuple(-c for c in eta)) in seen:
            continue
        seen.add((o, t, eta))
        edges.append(QuotientEdge(o, t, eta, draw(pos)))
    weights = tuple(draw(st.lists(pos, min_size=n, max_size=n)))
    pot = tuple(draw(st.lists(st.floats(-10, 10), min_size=n, max_size=n)))
    return QuotientGraph(n, d, tuple(edges), weights, pot, tuple(f"s{j}" for j in range(n)))


@settings(max_examples=60, deadline=None)
@given(quotients())
def test_crystal_roundtrip(q):
    assert parse_crystal(dump_crystal(q)) == q


def test_shipped_crystals_match_builders():
    assert read_crystal(SPECS / "z1.crystal").quotient == lattice_zd(1).quotient
    tob = read_crystal(SPECS / "toblerone.crystal").quotient
    assert tob == toblerone().quotient
    assert read_crystal(SPECS / "z2.crystal").quotient.edges == lattice_zd(2).quotient.edges


@pytest.mark.parametrize("crystal,pert", [("z1", "hub"), ("z1", "complete"), ("z1", "hub-mixed"),
                                          ("toblerone", "toblerone")])
def test_shipped_perturbations_decompose(crystal, pert):
    c = read_crystal(SPECS / f"{crystal}.crystal")
    pg = read_perturbation(SPECS / f"{pert}.perturbation", c)
    assert verify_decomposition(pg, trials=3) <= 1e-12


def test_hub_mixed_fields():
    c = read_crystal(SPECS / "z1.crystal")
    pg = read_perturbation(SPECS / "hub-mixed.perturbation", c)
    assert pg.perturbation.removed == frozenset({(0, (3,))})
    assert pg.vertex_profile.amplitude == 0.5 and pg.edge_profile.exponent == -3
    assert pg.potential_profile.table == {(0, (0,)): 2.0}
    assert pg.kernel.alpha == -4 and pg.kernel.hub.cell == (0,)


def test_table_kernel_spec():
    c = lattice_zd(1)
    pg = parse_perturbation("kernel table\nadd\n  0 0 0 5 0.5\n  0 1 0 -2 0.25\nend\n", c)
    assert len(pg.kernel.table) == 2
    assert verify_decomposition(pg, trials=2, support_radius=6) <= 1e-12


@pytest.mark.parametrize("text,line,field", [
    ("vertices\n o\nend\n", 0, "dimension"),
    ("dimension 1\nvertices\n o\nend\nedges\n o o x\nend\n", 6, "edges.index"),
    ("dimension 1\nvertices\n o -1\nend\n", 3, "vertices.weight"),
    ("dimension 1\nvertices\n o\n o\nend\n", 4, "vertices"),
    ("dimension 1\nvertices\n o\nend\nedges\n o q 1\nend\n", 6, "edges.terminus"),
    ("dimension 1\nvertices\n o\n", 2, "vertices"),
    ("dimension 1\nbogus 3\nvertices\n o\nend\n", 2, "bogus"),
    ("dimension 1\nvertices\n o\nend\nedges\n o o 0\nend\n", 0, "edges"),
])
def test_crystal_errors(text, line, field):
    with pytest.raises(SpecError) as info:
        parse_crystal(text)
    assert info.value.line == line and info.value.field == field
    assert str(info.value).startswith(f"line {line}: {field}:")


@pytest.mark.parametrize("text,field", [
    ("kernel star\n", "kernel"),
    ("kernel hub\nalpha -0.5\n", "kernel"),
    ("kernel hub\nhub o 3\n", "hub"),
    ("kernel hub\nadd\n o 0 o 1 1\nend\n", "add"),
    ("remove\n o 0 o 2\nend\n", "remove"),
    ("vertex-measure\n decay 1 1\nend\n", "vertex-measure"),
    ("edge-measure\n 4 0 1\nend\n", "edge-measure"),
    ("vertex-measure\n decay -2 -1\nend\n", "perturbation"),
])
def test_perturbation_errors(text, field):
    c = TopologicalCrystal(parse_crystal("dimension 1\nvertices\n o\nend\nedges\n o o 1\nend\n"))
    with pytest.raises(SpecError) as info:
        parse_perturbation(text, c)
    assert info.value.field == field

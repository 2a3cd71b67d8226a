"""Text formats for crystals and perturbations.

Both formats are line based.  ``#`` starts a comment, blank lines are
ignored, and a block opens with its keyword alone on a line and closes with
``end``.  Sites are referred to by name or by 0-based number.

Crystal::

    dimension 1
    vertices            # name [weight]
      x 1
    end
    edges               # origin terminus eta_1 .. eta_d [weight]
      x x 1
    end
    potential           # name value
      x 0
    end

Perturbation::

    kernel hub          # hub | complete | toblerone | table | none
    alpha -4
    C 1
    shift 0             # hub only; toblerone means hub with shift 1
    hub x 0             # hub vertex: site cell_1 .. cell_d
    star-radius 65536   # optional enumeration radius for degree sums
    remove              # crystal edges to delete: site cell.. site cell..
      x 0 x 1
    end
    add                 # table kernel only: site cell.. site cell.. weight
      x 0 x 5 0.5
    end
    vertex-measure      # "decay amplitude exponent" and/or "site cell.. value"
      decay 0.5 -2
    end
    edge-measure        # "decay ..." and/or "edge-number cell.. value"
    end
    potential           # "decay ..." and/or "site cell.. value"
      x 0 5
    end
"""
from __future__ import annotations

from .crystal import QuotientEdge, QuotientGraph, TopologicalCrystal

__all__ = ["SpecError", "parse_crystal", "parse_perturbation", "read_crystal",
           "read_perturbation"]


class SpecError(ValueError):
    def __init__(self, line: int, field: str, message: str):
        super().__init__(f"line {line}: {field}: {message}")
        self.line, self.field = line, field


def _lines(text: str):
    for no, raw in enumerate(text.splitlines(), 1):
        body = raw.split("#", 1)[0].strip()
        if body:
            yield no, body.split()


def _blocks(text: str, block_names: set[str]):
    """Split into header entries ``(no, key, args)`` and blocks ``name -> [(no, tokens)]``."""
    header, blocks = [], {}
    current, opened = None, 0
    for no, tokens in _lines(text):
        key = tokens[0].lower()
        if current is not None:
            if key == "end" and len(tokens) == 1:
                current = None
            else:
                blocks[current].append((no, tokens))
            continue
        if key in block_names and len(tokens) == 1:
            if key in blocks:
                raise SpecError(no, key, "block given twice")
            current, opened = key, no
            blocks[key] = []
        elif key == "end":
            raise SpecError(no, "end", "no open block")
        else:
            header.append((no, key, tokens[1:]))
    if current is not None:
        raise SpecError(opened, current, "block is not closed with 'end'")
    return header, blocks


def _number(no: int, field: str, token: str, kind=float):
    try:
        return kind(token)
    except ValueError:
        raise SpecError(no, field, f"expected a number, got {token!r}") from None


def parse_crystal(text: str) -> QuotientGraph:
    header, blocks = _blocks(text, {"vertices", "edges", "potential"})
    d = None
    for no, key, args in header:
        if key == "dimension":
            if len(args) != 1:
                raise SpecError(no, "dimension", "expected one integer")
            d = _number(no, "dimension", args[0], int)
            if d < 1:
                raise SpecError(no, "dimension", "must be at least 1")
        else:
            raise SpecError(no, key, "unknown entry")
    if d is None:
        raise SpecError(0, "dimension", "missing")
    if "vertices" not in blocks or not blocks["vertices"]:
        raise SpecError(0, "vertices", "missing or empty")
    names, weights = [], []
    for no, tokens in blocks["vertices"]:
        if len(tokens) not in (1, 2):
            raise SpecError(no, "vertices", "expected 'name [weight]'")
        if tokens[0] in names:
            raise SpecError(no, "vertices", f"duplicate name {tokens[0]!r}")
        names.append(tokens[0])
        w = _number(no, "vertices.weight", tokens[1]) if len(tokens) == 2 else 1.0
        if not w > 0:
            raise SpecError(no, "vertices.weight", "must be positive")
        weights.append(w)

    def site_of(no, field, token):
        if token in names:
            return names.index(token)
        j = _number(no, field, token, int)
        if not 0 <= j < len(names):
            raise SpecError(no, field, f"unknown site {token!r}")
        return j

    edges = []
    for no, tokens in blocks.get("edges", []):
        if len(tokens) not in (2 + d, 3 + d):
            raise SpecError(no, "edges", f"expected 'origin terminus' plus {d} index entries and an optional weight")
        o = site_of(no, "edges.origin", tokens[0])
        t = site_of(no, "edges.terminus", tokens[1])
        eta = tuple(_number(no, "edges.index", v, int) for v in tokens[2:2 + d])
        w = _number(no, "edges.weight", tokens[2 + d]) if len(tokens) == 3 + d else 1.0
        edges.append(QuotientEdge(o, t, eta, w))
    potential = [0.0] * len(names)
    for no, tokens in blocks.get("potential", []):
        if len(tokens) != 2:
            raise SpecError(no, "potential", "expected 'name value'")
        potential[site_of(no, "potential.site", tokens[0])] = _number(no, "potential.value", tokens[1])
    try:
        return QuotientGraph(len(names), d, tuple(edges), tuple(weights), tuple(potential),
                             tuple(names))
    except ValueError as exc:
        raise SpecError(0, "edges", str(exc)) from None


def read_crystal(path) -> TopologicalCrystal:
    with open(path, encoding="utf-8") as fh:
        return TopologicalCrystal(parse_crystal(fh.read()))


def _vertex(no, field, tokens, crystal, names):
    d = crystal.dimension
    if len(tokens) != 1 + d:
        raise SpecError(no, field, f"expected a site and {d} cell entries")
    s = tokens[0]
    if s in names:
        j = names.index(s)
    else:
        j = _number(no, field, s, int)
        if not 0 <= j < crystal.n:
            raise SpecError(no, field, f"unknown site {s!r}")
    return (j, tuple(_number(no, field, c, int) for c in tokens[1:]))


def _profile(no_tokens, field, key_parser):
    from .perturbation import Profile

    overrides, amp, exp = {}, 0.0, -2.0
    for no, tokens in no_tokens:
        if tokens[0].lower() == "decay":
            if len(tokens) != 3:
                raise SpecError(no, field, "expected 'decay amplitude exponent'")
            amp = _number(no, field, tokens[1])
            exp = _number(no, field, tokens[2])
            if exp > 0:
                raise SpecError(no, field, "decay exponent must be nonpositive")
            continue
        key = key_parser(no, tokens[:-1])
        overrides[key] = _number(no, field, tokens[-1])
    return Profile(overrides, amp, exp)


def parse_perturbation(text: str, crystal: TopologicalCrystal):
    """Build a :class:`~topocrystal.perturbation.PerturbedGraph` over ``crystal``."""
    from .kernels import CompleteKernel, HubKernel, TableKernel
    from .perturbation import EdgePerturbation, PerturbedGraph

    header, blocks = _blocks(text, {"remove", "add", "vertex-measure", "edge-measure", "potential"})
    names = list(crystal.quotient.names)
    d = crystal.dimension
    opts: dict = {"kernel": ("none", 0)}
    for no, key, args in header:
        if key in ("kernel",):
            if len(args) != 1 or args[0].lower() not in ("hub", "complete", "toblerone", "table", "none"):
                raise SpecError(no, "kernel", "expected hub, complete, toblerone, table or none")
            opts["kernel"] = (args[0].lower(), no)
        elif key in ("alpha", "c", "shift"):
            if len(args) != 1:
                raise SpecError(no, key, "expected one number")
            opts[key] = (_number(no, key, args[0]), no)
        elif key == "star-radius":
            if len(args) != 1:
                raise SpecError(no, key, "expected one integer")
            opts[key] = (_number(no, key, args[0], int), no)
        elif key == "hub":
            opts["hub"] = (_vertex(no, "hub", args, crystal, names), no)
        else:
            raise SpecError(no, key, "unknown entry")
    kind, kno = opts["kernel"]
    radius = opts.get("star-radius", (None, 0))[0]
    alpha = opts.get("alpha", (-4.0, 0))[0]
    C = opts.get("c", (1.0, 0))[0]
    try:
        if kind in ("hub", "toblerone"):
            hub, hno = opts.get("hub", ((0, (0,) * d), 0))
            if any(hub[1]):
                raise SpecError(hno, "hub", "the hub must sit in cell 0")
            default_shift = 1.0 if (kind == "toblerone" or crystal.n > 1) else 0.0
            shift = opts.get("shift", (default_shift, 0))[0]
            kernel = HubKernel(crystal, C, alpha, hub[0], shift, star_radius=radius)
        elif kind == "complete":
            kernel = CompleteKernel(crystal, C, alpha, star_radius=radius)
        elif kind == "table":
            rows = []
            for no, tokens in blocks.get("add", []):
                if len(tokens) != 3 + 2 * d:
                    raise SpecError(no, "add", "expected 'site cell.. site cell.. weight'")
                x = _vertex(no, "add", tokens[:1 + d], crystal, names)
                y = _vertex(no, "add", tokens[1 + d:2 + 2 * d], crystal, names)
                rows.append((x, y, _number(no, "add.weight", tokens[-1])))
            kernel = TableKernel(crystal, rows, star_radius=radius)
        else:
            kernel = None
    except SpecError:
        raise
    except ValueError as exc:
        raise SpecError(kno, "kernel", str(exc)) from None
    if kind != "table" and blocks.get("add"):
        raise SpecError(blocks["add"][0][0], "add", "only the table kernel takes explicit edges")

    removed = []
    for no, tokens in blocks.get("remove", []):
        if len(tokens) != 2 + 2 * d:
            raise SpecError(no, "remove", "expected 'site cell.. site cell..'")
        x = _vertex(no, "remove", tokens[:1 + d], crystal, names)
        y = _vertex(no, "remove", tokens[1 + d:], crystal, names)
        try:
            removed.append(EdgePerturbation.edge_between(crystal, x, y))
        except ValueError as exc:
            raise SpecError(no, "remove", str(exc)) from None

    def vertex_key(no, tokens):
        return _vertex(no, "vertex", tokens, crystal, names)

    def edge_key(no, tokens):
        if len(tokens) != 1 + d:
            raise SpecError(no, "edge-measure", f"expected an edge number and {d} cell entries")
        q = _number(no, "edge-measure", tokens[0], int)
        if not 0 <= q < len(crystal.quotient.edges):
            raise SpecError(no, "edge-measure", f"unknown quotient edge {q}")
        return (q, tuple(_number(no, "edge-measure", c, int) for c in tokens[1:]))

    vprof = _profile(blocks.get("vertex-measure", []), "vertex-measure", vertex_key)
    eprof = _profile(blocks.get("edge-measure", []), "edge-measure", edge_key)
    pprof = _profile(blocks.get("potential", []), "potential", vertex_key)
    try:
        return PerturbedGraph(crystal, EdgePerturbation(kernel, frozenset(removed)),
                              vprof, eprof, pprof)
    except ValueError as exc:
        raise SpecError(0, "perturbation", str(exc)) from None


def read_perturbation(path, crystal: TopologicalCrystal):
    with open(path, encoding="utf-8") as fh:
        return parse_perturbation(fh.read(), crystal)

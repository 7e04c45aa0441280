"""Netlist parsing and modified nodal analysis.

Grammar: one card per line, the first character of the name selects the type
(R/L/C/V/I/F), `#` starts a comment.  Values accept the SI suffixes p n u m k
M G (case-sensitive).  Sources carry `DC <v>` or `SIN <offset> <amplitude>
<freq_hz> [phase_rad]` waveforms.  Directives: `.tran <tau> <tend>` and
`.method <tag>`.  Field ports (F cards) declare where a conductor model
attaches: `F<name> <n+> <n-> <stranded|solid|foil> <model_ref> [<column>]`.

Parsing is total: every problem is collected with its line and column and
reported at once through NetlistError.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field as dfield

import numpy as np
import scipy.sparse as sp

from fieldcircuit.integrators import method_from_tag
from fieldcircuit.structure import EnergySystem, Partition, StructureError
from fieldcircuit.waveforms import Constant, Sinusoid, WaveformStack


class NetlistError(ValueError):
    """All parse/structure diagnostics for a netlist, line-accurate."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


_SUFFIX = {"p": 1e-12, "n": 1e-9, "u": 1e-6, "m": 1e-3,
           "k": 1e3, "M": 1e6, "G": 1e9}
_NUMBER_RE = re.compile(r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
                        r"([pnumkMG]?)$")

FIELD_KINDS = ("stranded", "solid", "foil")
GROUND = "0"


def parse_value(token: str):
    """SI value with optional case-sensitive suffix; None when malformed."""
    match = _NUMBER_RE.match(token)
    if not match:
        return None
    return float(match.group(1)) * _SUFFIX.get(match.group(2), 1.0)


def format_value(value: float) -> str:
    return repr(float(value))


@dataclass(frozen=True)
class Card:
    kind: str
    name: str
    n_plus: str
    n_minus: str
    value: float = None
    waveform: tuple = None
    field_kind: str = None
    model_ref: str = None
    column: int = 0
    line: int = dfield(default=0, compare=False)


@dataclass(frozen=True)
class Netlist:
    cards: tuple
    tau: float = None
    t_end: float = None
    method: str = None

    @property
    def nodes(self):
        """Non-ground nodes in first-appearance order."""
        seen = []
        for card in self.cards:
            for node in (card.n_plus, card.n_minus):
                if node != GROUND and node not in seen:
                    seen.append(node)
        return tuple(seen)

    def cards_of(self, kind: str):
        return tuple(c for c in self.cards if c.kind == kind)


def _token_columns(raw_line: str):
    cols = []
    for match in re.finditer(r"\S+", raw_line):
        cols.append(match.start() + 1)
    return cols


def parse_netlist(text: str, origin: str = "<netlist>") -> Netlist:
    errors = []
    cards = []
    names = {}
    tau = t_end = method = None
    tran_line = method_line = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.lstrip().startswith("*"):   # whole-line comment
            continue
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        tokens = line.split()
        cols = _token_columns(line)

        def err(msg, tok_idx=0):
            col = cols[tok_idx] if tok_idx < len(cols) else len(line) + 1
            errors.append(f"{origin}:{lineno}:{col}: {msg}")

        head = tokens[0]
        if head.startswith("."):
            if head == ".tran":
                if tran_line is not None:
                    err(f"duplicate .tran directive (first at line {tran_line})")
                    continue
                tran_line = lineno
                if len(tokens) != 3:
                    err(".tran needs exactly two values: <tau> <tend>")
                    continue
                vals = [parse_value(t) for t in tokens[1:]]
                bad = next((i for i, v in enumerate(vals) if v is None), None)
                if bad is not None:
                    err(f"malformed number {tokens[1 + bad]!r}", 1 + bad)
                    continue
                if vals[0] <= 0 or vals[1] <= 0:
                    err(".tran values must be positive", 1)
                    continue
                tau, t_end = vals
            elif head == ".method":
                if method_line is not None:
                    err(f"duplicate .method directive (first at line {method_line})")
                    continue
                method_line = lineno
                if len(tokens) != 2:
                    err(".method needs exactly one tag")
                    continue
                try:
                    method = method_from_tag(tokens[1]).tag
                except ValueError as exc:
                    err(str(exc), 1)
            else:
                err(f"unknown directive {head!r}")
            continue

        kind = head[0].upper()
        if kind not in "RLCVIF":
            err(f"unknown card {head[0]!r}")
            continue
        if len(head) < 2:
            err(f"card needs a name after the type letter, got {head!r}")
            continue
        if head in names:
            err(f"duplicate element name {head!r} (first at line {names[head]})")
            continue
        names[head] = lineno
        if len(tokens) < 3:
            err("card needs two node names")
            continue
        n_plus, n_minus = tokens[1], tokens[2]
        if n_plus == n_minus:
            err(f"element {head!r} connects node {n_plus!r} to itself", 1)
            continue
        body = tokens[3:]

        if kind in "RLC":
            if len(body) != 1:
                err(f"{head!r} needs exactly one value", 3 if body else 2)
                continue
            value = parse_value(body[0])
            if value is None:
                err(f"malformed number {body[0]!r}", 3)
                continue
            if value <= 0.0:
                err(f"{head!r} value must be positive, got {body[0]}", 3)
                continue
            cards.append(Card(kind, head, n_plus, n_minus, value=value,
                              line=lineno))
        elif kind in "VI":
            wf, wf_err = _parse_waveform(body)
            if wf is None:
                err(wf_err, 3)
                continue
            cards.append(Card(kind, head, n_plus, n_minus, waveform=wf,
                              line=lineno))
        else:
            if len(body) not in (2, 3):
                err(f"{head!r} needs <kind> <model_ref> [<column>]",
                    3 if body else 2)
                continue
            if body[0] not in FIELD_KINDS:
                err(f"unknown field-port kind {body[0]!r} "
                    f"(expected one of {', '.join(FIELD_KINDS)})", 3)
                continue
            column = 0
            if len(body) == 3:
                try:
                    column = int(body[2])
                except ValueError:
                    err(f"malformed column index {body[2]!r}", 5)
                    continue
                if column < 0:
                    err("column index must be non-negative", 5)
                    continue
            cards.append(Card("F", head, n_plus, n_minus, field_kind=body[0],
                              model_ref=body[1], column=column, line=lineno))

    if not errors:
        touches_ground = any(GROUND in (c.n_plus, c.n_minus) for c in cards)
        if not cards:
            errors.append(f"{origin}:1:1: netlist defines no elements")
        elif not touches_ground:
            errors.append(f"{origin}:1:1: no element references the ground "
                          f"node '{GROUND}'")
    if errors:
        raise NetlistError(errors)
    return Netlist(tuple(cards), tau, t_end, method)


def _parse_waveform(body):
    if not body:
        return None, "source needs a waveform: DC <v> or SIN <o> <a> <f> [<ph>]"
    tag = body[0]
    if tag == "DC":
        if len(body) != 2:
            return None, "DC waveform needs exactly one value"
        v = parse_value(body[1])
        if v is None:
            return None, f"malformed number {body[1]!r}"
        return ("DC", v), None
    if tag == "SIN":
        if len(body) not in (4, 5):
            return None, "SIN waveform needs <offset> <amplitude> <freq_hz> [<phase_rad>]"
        vals = [parse_value(t) for t in body[1:]]
        for tok, v in zip(body[1:], vals):
            if v is None:
                return None, f"malformed number {tok!r}"
        if len(vals) == 3:
            vals.append(0.0)
        return ("SIN", *vals), None
    return None, f"unknown waveform {tag!r} (expected DC or SIN)"


def print_netlist(nl: Netlist) -> str:
    """Canonical text form; parse(print_netlist(parse(text))) == parse(text)."""
    lines = []
    for card in nl.cards:
        if card.kind in "RLC":
            lines.append(f"{card.name} {card.n_plus} {card.n_minus} "
                         f"{format_value(card.value)}")
        elif card.kind in "VI":
            body = " ".join([card.waveform[0],
                             *(format_value(v) for v in card.waveform[1:])])
            lines.append(f"{card.name} {card.n_plus} {card.n_minus} {body}")
        else:
            lines.append(f"{card.name} {card.n_plus} {card.n_minus} "
                         f"{card.field_kind} {card.model_ref} {card.column}")
    if nl.tau is not None:
        lines.append(f".tran {format_value(nl.tau)} {format_value(nl.t_end)}")
    if nl.method is not None:
        lines.append(f".method {nl.method}")
    return "\n".join(lines) + "\n"


def read_netlist(path: str) -> Netlist:
    with open(path, encoding="utf-8") as fh:
        return parse_netlist(fh.read(), origin=path)


# ---------------------------------------------------------------------------
# incidence construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FieldPort:
    """A circuit branch that a conductor model occupies.

    u_index points into the circuit input stack u = [currents; voltages]:
    stranded/foil ports are current-source-like, solid ports are
    voltage-source-like.
    """

    name: str
    kind: str
    model_ref: str
    column: int
    u_index: int


@dataclass(frozen=True)
class IncidenceSet:
    node_order: tuple
    a_c: object
    a_r: object
    a_l: object
    a_v: object
    a_i: object
    c_diag: np.ndarray
    g_diag: np.ndarray
    l_diag: np.ndarray
    i_branch_names: tuple
    v_branch_names: tuple
    l_branch_names: tuple
    field_ports: tuple

    @property
    def n_phi(self) -> int:
        return len(self.node_order)


def _column(node_index: dict, card: Card, n: int):
    rows, vals = [], []
    if card.n_plus != GROUND:
        rows.append(node_index[card.n_plus])
        vals.append(1.0)
    if card.n_minus != GROUND:
        rows.append(node_index[card.n_minus])
        vals.append(-1.0)
    return sp.csr_array((vals, (rows, [0] * len(rows))), shape=(n, 1))


def _hcat(cols, n: int):
    if not cols:
        return sp.csr_array((n, 0))
    return sp.csr_array(sp.hstack(cols, format="csr"))


def build_incidence(nl: Netlist) -> IncidenceSet:
    """Signed incidence per element group, ground row eliminated.

    Branch ordering mirrors the coupling splittings: the current-source block
    is [stranded ports, foil ports, I sources], the voltage-source block is
    [solid ports, V sources].  Raises NetlistError naming any node with no
    path to ground.
    """
    nodes = nl.nodes
    node_index = {nm: k for k, nm in enumerate(nodes)}
    n = len(nodes)

    parent = {GROUND: GROUND, **{nm: nm for nm in nodes}}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for card in nl.cards:
        ra, rb = find(card.n_plus), find(card.n_minus)
        if ra != rb:
            parent[ra] = rb
    floating = [nm for nm in nodes if find(nm) != find(GROUND)]
    if floating:
        raise NetlistError(
            [f"node {nm!r} has no path to ground" for nm in floating])

    groups = {"C": [], "R": [], "L": [], "V": [], "I": []}
    values = {"C": [], "R": [], "L": []}
    str_ports, foil_ports, sol_ports = [], [], []
    for card in nl.cards:
        if card.kind in ("C", "R", "L"):
            groups[card.kind].append(card)
            values[card.kind].append(card.value)
        elif card.kind in ("V", "I"):
            groups[card.kind].append(card)
        else:
            {"stranded": str_ports, "foil": foil_ports,
             "solid": sol_ports}[card.field_kind].append(card)

    i_cards = str_ports + foil_ports + groups["I"]
    v_cards = sol_ports + groups["V"]

    field_ports = []
    for idx, card in enumerate(i_cards):
        if card.kind == "F":
            field_ports.append(FieldPort(card.name, card.field_kind,
                                         card.model_ref, card.column, idx))
    for idx, card in enumerate(v_cards):
        if card.kind == "F":
            field_ports.append(FieldPort(card.name, card.field_kind,
                                         card.model_ref, card.column,
                                         len(i_cards) + idx))

    return IncidenceSet(
        node_order=nodes,
        a_c=_hcat([_column(node_index, c, n) for c in groups["C"]], n),
        a_r=_hcat([_column(node_index, c, n) for c in groups["R"]], n),
        a_l=_hcat([_column(node_index, c, n) for c in groups["L"]], n),
        a_v=_hcat([_column(node_index, c, n) for c in v_cards], n),
        a_i=_hcat([_column(node_index, c, n) for c in i_cards], n),
        c_diag=np.asarray(values["C"], dtype=np.float64),
        g_diag=1.0 / np.asarray(values["R"], dtype=np.float64)
        if values["R"] else np.zeros(0),
        l_diag=np.asarray(values["L"], dtype=np.float64),
        i_branch_names=tuple(c.name for c in i_cards),
        v_branch_names=tuple(c.name for c in v_cards),
        l_branch_names=tuple(c.name for c in groups["L"]),
        field_ports=tuple(field_ports),
    )


# ---------------------------------------------------------------------------
# the MNA energy-based system
# ---------------------------------------------------------------------------

def _diag(vals: np.ndarray):
    return sp.diags_array(vals, format="csr") if vals.size else sp.csr_array((0, 0))


def mna_system(inc: IncidenceSet) -> EnergySystem:
    """Energy-based DAE of the circuit: z2 = [phi; j_L], z3 = j_V,
    u = [currents; voltages], y = (−A_Iᵀ phi, −j_V)."""
    n_phi = inc.n_phi
    b_l = inc.l_diag.size
    b_v = inc.a_v.shape[1]
    b_i = inc.a_i.shape[1]
    n2 = n_phi + b_l
    a_c, a_r, a_l, a_v, a_i = (sp.csr_array(x) for x in
                               (inc.a_c, inc.a_r, inc.a_l, inc.a_v, inc.a_i))

    e_cap = sp.csr_array(a_c @ _diag(inc.c_diag) @ a_c.T) if inc.c_diag.size \
        else sp.csr_array((n_phi, n_phi))
    e_mat = sp.block_diag((e_cap, _diag(inc.l_diag)), format="csr") if b_l \
        else e_cap
    r_phi = sp.csr_array(a_r @ _diag(inc.g_diag) @ a_r.T) if inc.g_diag.size \
        else sp.csr_array((n_phi, n_phi))

    n = n2 + b_v
    j = sp.bmat([
        [sp.csr_array((n_phi, n_phi)), -a_l, -a_v],
        [a_l.T, sp.csr_array((b_l, b_l)), sp.csr_array((b_l, b_v))],
        [a_v.T, sp.csr_array((b_v, b_l)), sp.csr_array((b_v, b_v))],
    ], format="csr")
    r = sp.bmat([
        [r_phi, sp.csr_array((n_phi, b_l + b_v))],
        [sp.csr_array((b_l + b_v, n_phi)), sp.csr_array((b_l + b_v, b_l + b_v))],
    ], format="csr")
    b = -sp.bmat([
        [a_i, sp.csr_array((n_phi, b_v))],
        [sp.csr_array((b_l, b_i)), sp.csr_array((b_l, b_v))],
        [sp.csr_array((b_v, b_i)), sp.identity(b_v, format="csr")],
    ], format="csr")

    labels = (tuple(f"phi_{nm}" for nm in inc.node_order)
              + tuple(f"jL_{nm}" for nm in inc.l_branch_names)
              + tuple(f"jV_{nm}" for nm in inc.v_branch_names))
    out_labels = (tuple(f"yi_{nm}" for nm in inc.i_branch_names)
                  + tuple(f"yv_{nm}" for nm in inc.v_branch_names))
    return EnergySystem(Partition(0, n2, b_v, b_i + b_v),
                        E=e_mat, J=j, R=r, B=b,
                        M1=sp.csr_array((0, 0)), M2=e_mat,
                        S=sp.identity(n2, format="csr"),
                        state_labels=labels, output_labels=out_labels)


def input_stack(nl: Netlist, inc: IncidenceSet) -> WaveformStack:
    """Source waveforms in u-order; field-port slots are zero (driven through
    the coupling, not externally)."""
    by_name = {c.name: c for c in nl.cards}
    comps = []
    for name in (*inc.i_branch_names, *inc.v_branch_names):
        card = by_name[name]
        if card.kind == "F":
            comps.append(Constant(0.0))
        else:
            comps.append(_waveform_component(card.waveform))
    return WaveformStack(tuple(comps))


def _waveform_component(wf: tuple):
    if wf[0] == "DC":
        return Constant(wf[1])
    offset, amplitude, freq, phase = wf[1:]
    return Sinusoid(offset, amplitude, freq, phase)

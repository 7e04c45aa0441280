"""Corpus of netlists: every valid file survives a parse/print/parse round
trip, every invalid file carries `#! expect-error <line> <substring>`
annotations that must match the diagnostics line-for-line."""

import pathlib

import pytest

from fieldcircuit.mna import NetlistError, parse_netlist, print_netlist

_HERE = pathlib.Path(__file__).parent
VALID = sorted((_HERE / "netlists" / "valid").glob("*.cir"))
INVALID = sorted((_HERE / "netlists" / "invalid").glob("*.cir"))


def _expectations(text):
    """Annotations live behind `#!` so the parser never sees them."""
    out = []
    for raw in text.splitlines():
        if not raw.startswith("#!"):
            continue
        body = raw[2:].strip()
        assert body.startswith("expect-error "), raw
        line_s, _, substring = body[len("expect-error "):].partition(" ")
        out.append((int(line_s), substring))
    return out


def test_corpus_is_large_enough():
    assert len(VALID) >= 30
    assert len(INVALID) >= 20


@pytest.mark.parametrize("path", VALID, ids=lambda p: p.stem)
def test_valid_file_round_trips(path):
    net = parse_netlist(path.read_text(encoding="utf-8"), origin=path.name)
    assert net.cards
    printed = print_netlist(net)
    again = parse_netlist(printed, origin=path.name)
    assert again == net
    assert print_netlist(again) == printed


@pytest.mark.parametrize("path", INVALID, ids=lambda p: p.stem)
def test_invalid_file_diagnostics(path):
    text = path.read_text(encoding="utf-8")
    expected = _expectations(text)
    assert expected, f"{path.name} has no expect-error annotations"
    with pytest.raises(NetlistError) as info:
        parse_netlist(text, origin=path.name)
    got = info.value.errors
    for line, substring in expected:
        matches = [e for e in got
                   if e.startswith(f"{path.name}:{line}:") and substring in e]
        assert matches, (f"{path.name}: expected line {line} to report "
                         f"{substring!r}, got {got}")

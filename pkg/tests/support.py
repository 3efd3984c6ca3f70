"""Shared builders and oracles used by both the unit and acceptance suites."""

from __future__ import annotations

import random
from fractions import Fraction

from storagelab.metrics import OptimizeInstance, jaccard
from storagelab.policy import PolicyKind
from storagelab.simulator import replay
from storagelab.trace import (
    BehaviorEdgeRecord,
    FrameLoad,
    NodeType,
    ScriptStorage,
    VisitEnd,
    VisitStart,
)

THIRD_PARTY = "https://t.net/w"
PAGE_A = "https://a.com/"
PAGE_B = "https://b.com/"


def scenario_same_page():
    """Two frames from the same third party on one page: the second frame
    reads what the first stored."""
    return [
        VisitStart("p0", 1, "tab1", PAGE_A, 1),
        FrameLoad("tab1", "f1", THIRD_PARTY),
        FrameLoad("tab1", "f2", THIRD_PARTY),
        ScriptStorage("tab1", "f1", "local", "set", "u", "x"),
        ScriptStorage("tab1", "f2", "local", "get", "u"),
        VisitEnd("tab1"),
    ]


def scenario_two_tabs():
    """The same page open in two tabs simultaneously; the second tab's frame
    reads what the first tab's frame stored."""
    return [
        VisitStart("p0", 1, "tab1", PAGE_A, 1),
        FrameLoad("tab1", "f1", THIRD_PARTY),
        ScriptStorage("tab1", "f1", "local", "set", "u", "x"),
        VisitStart("p0", 1, "tab2", PAGE_A, 2),
        FrameLoad("tab2", "f1", THIRD_PARTY),
        ScriptStorage("tab2", "f1", "local", "get", "u"),
        VisitEnd("tab1"),
        VisitEnd("tab2"),
    ]


def scenario_reload():
    """Page loaded then reloaded in the same tab (same URL); the frame reads
    after the reload what it stored before."""
    return [
        VisitStart("p0", 1, "tab1", PAGE_A, 1),
        FrameLoad("tab1", "f1", THIRD_PARTY),
        ScriptStorage("tab1", "f1", "local", "set", "u", "x"),
        VisitStart("p0", 1, "tab1", PAGE_A, 2),
        FrameLoad("tab1", "f1", THIRD_PARTY),
        ScriptStorage("tab1", "f1", "local", "get", "u"),
        VisitEnd("tab1"),
    ]


def scenario_cross_site():
    """The same third party embedded on two different first-party pages."""
    return [
        VisitStart("p0", 1, "tab1", PAGE_A, 1),
        FrameLoad("tab1", "f1", THIRD_PARTY),
        ScriptStorage("tab1", "f1", "local", "set", "u", "x"),
        VisitEnd("tab1"),
        VisitStart("p0", 1, "tab1", PAGE_B, 2),
        FrameLoad("tab1", "f1", THIRD_PARTY),
        ScriptStorage("tab1", "f1", "local", "get", "u"),
        VisitEnd("tab1"),
    ]


SCENARIOS = {
    "same_page": scenario_same_page,
    "two_tabs": scenario_two_tabs,
    "reload": scenario_reload,
    "cross_site": scenario_cross_site,
}

# Visibility of the stored value per scenario x policy.
EXPECTED_VISIBILITY = {
    "same_page": {
        PolicyKind.PERMISSIVE: "x",
        PolicyKind.BLOCKING: None,
        PolicyKind.SITE_KEYED: "x",
        PolicyKind.PAGE_LENGTH: "x",
    },
    "two_tabs": {
        PolicyKind.PERMISSIVE: "x",
        PolicyKind.BLOCKING: None,
        PolicyKind.SITE_KEYED: "x",
        PolicyKind.PAGE_LENGTH: None,
    },
    "reload": {
        PolicyKind.PERMISSIVE: "x",
        PolicyKind.BLOCKING: None,
        PolicyKind.SITE_KEYED: "x",
        PolicyKind.PAGE_LENGTH: None,
    },
    "cross_site": {
        PolicyKind.PERMISSIVE: "x",
        PolicyKind.BLOCKING: None,
        PolicyKind.SITE_KEYED: None,
        PolicyKind.PAGE_LENGTH: None,
    },
}


def probe_visibility(events, policy, rules):
    """Result of the scenario's final get: the stored value or None."""
    out = replay(events, policy, rules)
    gets = [op for op in out.storage_op_log if op.op == "get"]
    return gets[-1].result


def visibility_matrix(rules):
    return {
        name: {policy: probe_visibility(build(), policy, rules) for policy in PolicyKind}
        for name, build in SCENARIOS.items()
    }


# ---------------------------------------------------------------------------
# Jaccard brute-force oracle


def brute_force_jaccard(a, b):
    inter = 0
    union_items = []
    for x in a:
        if x in b:
            inter += 1
        union_items.append(x)
    for x in b:
        if x not in a:
            union_items.append(x)
    if not union_items:
        return None
    return Fraction(inter, len(union_items))


def random_set_pairs(seed: int, count: int, universe_size: int = 64):
    rng = random.Random(seed)
    universe = [f"e{i}" for i in range(universe_size)]
    for _ in range(count):
        a = set(rng.sample(universe, rng.randint(0, universe_size)))
        b = set(rng.sample(universe, rng.randint(0, universe_size)))
        yield a, b


def run_jaccard_oracle(seed: int = 1234, count: int = 1000) -> int:
    checked = 0
    for a, b in random_set_pairs(seed, count):
        assert jaccard(a, b) == brute_force_jaccard(a, b)
        checked += 1
    return checked


# ---------------------------------------------------------------------------
# Node-type optimization sample where only storage-linked edges differ


def _edge(st, sk, et, tt, tk) -> str:
    return BehaviorEdgeRecord(st, sk, et, tt, tk).canonical()


def build_storage_separation_sample() -> list[OptimizeInstance]:
    script = "https://w.net/w.js"
    fixed = frozenset({
        _edge(NodeType.SCRIPT, script, "spawns", NodeType.SCRIPT, script + "#worker"),
        _edge(NodeType.SCRIPT, script, "sends_request", NodeType.HTTP_RESOURCE, "https://w.net/r"),
        _edge(NodeType.DOM_ROOT, "https://w.net/f", "loads_script", NodeType.SCRIPT, script),
        _edge(NodeType.SCRIPT, script, "inserts", NodeType.HTML_ELEMENT, "div#x"),
    })
    storage_edges = [
        _edge(NodeType.SCRIPT, script, "reads", NodeType.COOKIE_JAR, "w.net"),
        _edge(NodeType.SCRIPT, script, "writes", NodeType.LOCAL_STORAGE, "w.net"),
        _edge(NodeType.SCRIPT, script, "writes", NodeType.SESSION_STORAGE, "w.net"),
    ]
    sample = []
    for storage_edge in storage_edges:
        with_storage = frozenset(fixed | {storage_edge})
        sample.append(OptimizeInstance(with_storage, with_storage, fixed))
    return sample

from __future__ import annotations

import random

from termdecode.acceptor import build_acceptor
from termdecode.scoring import LexiconModel
from termdecode.synth import (
    make_tasks,
    make_world,
    micro_instance,
    offset_suite,
    starving_suite,
    validate_tasks,
)


def test_world_is_seeded():
    a, b = make_world(5), make_world(5)
    assert a.lexicon.to_json() == b.lexicon.to_json()
    assert a.dictionary == b.dictionary
    assert make_world(6).lexicon.to_json() != a.lexicon.to_json()


def test_tasks_carry_valid_constraints():
    world = make_world(5)
    tasks = make_tasks(world, 1, 40, 1, 4)
    assert validate_tasks(tasks) == []
    assert all(1 <= len(t.constraints) <= 4 for t in tasks)
    scorer = LexiconModel(world.lexicon)
    for t in tasks:
        acc = build_acceptor(t.constraints)
        assert acc.vocabulary() <= set(scorer.vocab.tokens)
        assert all(c.span is not None for c in t.constraints)


def test_lexicon_prefers_generic_translation():
    # the dictionary variant is never the argmax, so unmasked models translate the span themselves
    world = make_world(5)
    for entry in world.dictionary:
        row = dict(world.lexicon.lexicon[entry.source_phrase[0]])
        best = max(row, key=row.get)
        assert all(best != alt[0] for alt in entry.target_alternatives)


def test_micro_instances_are_small():
    rng = random.Random(0)
    for _ in range(20):
        inst = micro_instance(rng)
        assert len(inst.scorer.vocab) <= 8
        assert 1 <= len(inst.constraints) <= 2
        build_acceptor(inst.constraints)


def test_offset_suite_kinds():
    suite = offset_suite(1, 10)
    assert [r.kind for r in suite[:5]] == ["clean", "offset0", "offset1", "offset2", "weak"]
    for r in suite:
        for step in r.trace:
            assert abs(sum(step.attention) - 1.0) < 1e-9


def test_starving_suite_never_attends_spans():
    for r in starving_suite(2, 10):
        spans = [c.span for c in r.task.constraints]
        for step in r.trace:
            top = max(range(len(step.attention)), key=step.attention.__getitem__)
            assert all(top not in s for s in spans)

"""Seeded synthetic suites standing in for real translation data.

The standard suite pairs a word lexicon with a terminology dictionary.  The
lexicon translates each term source word to a *generic* target word and
gives the dictionary's variant of it (``zorbelat`` vs ``zorbelaten``) only a
minority of the mass, so an unmasked model translates constrained spans a
second time.  References use the dictionary variant, which therefore always
occurs in them.

Two replay-trace suites cover attention pathologies: ``starving`` traces
never attend to a constraint span, and ``offset`` traces put the peak on the
word before the span (think of an article) with only secondary attention on
the span itself.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from termdecode.acceptor import ConstraintSpec, Span
from termdecode.scoring import EOS, LexiconModelConfig, ReplayModel, TraceStep
from termdecode.tasks import SentenceTask
from termdecode.terminology import DictionaryEntry, apply_dictionary

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "sch", "st", "br", "kl"]
_VOWELS = ["a", "e", "i", "o", "u", "ei", "au"]
_SUFFIXES = ["en", "es", "er", "um"]


def pseudo_words(rng: random.Random, count: int, syllables: tuple[int, int] = (3, 4), taken: set[str] | None = None):
    taken = taken if taken is not None else set()
    out = []
    while len(out) < count:
        word = "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) for _ in range(rng.randint(*syllables)))
        if word not in taken:
            taken.add(word)
            out.append(word)
    return out


@dataclass
class SyntheticWorld:
    lexicon: LexiconModelConfig
    dictionary: list[DictionaryEntry]
    fillers: list[str]
    # source token -> reference translation
    gloss: dict[str, str] = field(default_factory=dict)


def make_world(seed: int, vocab: int = 120, terms: int = 40, gamma: float = 2.0, epsilon: float = 0.01) -> SyntheticWorld:
    rng = random.Random(seed)
    taken: set[str] = set()
    fillers = ["q" + w for w in pseudo_words(rng, vocab, (2, 3), taken)]
    targets = pseudo_words(rng, vocab, (2, 4), taken)
    lexicon: dict[str, list[tuple[str, float]]] = {}
    gloss: dict[str, str] = {}
    for src, main in zip(fillers, targets):
        p = round(rng.uniform(0.75, 0.9), 3)
        a = round((1 - p) * 0.6, 6)
        others = rng.sample([t for t in targets if t != main], 2)
        lexicon[src] = [(main, p), (others[0], a), (others[1], 1 - p - a)]
        gloss[src] = main
    dictionary = []
    extra_vocab: list[str] = []
    for _ in range(terms):
        width = 1 if rng.random() < 0.7 else 2
        src_words = ["x" + w for w in pseudo_words(rng, width, (2, 3), taken)]
        generic = pseudo_words(rng, width, (3, 4), taken)
        n_alts = 1 if rng.random() < 0.6 else 2
        suffixes = rng.sample(_SUFFIXES, n_alts)
        alts = []
        for suffix in suffixes:
            alt = tuple(g + suffix if k == 0 else g for k, g in enumerate(generic))
            alts.append(alt)
            taken.update(alt)
            extra_vocab.extend(alt)
        for k, (s, g) in enumerate(zip(src_words, generic)):
            other = rng.choice(targets)
            if k == 0:
                lexicon[s] = [(g, 0.7), (alts[0][0], 0.2), (other, 0.1)]
            else:
                lexicon[s] = [(g, 0.9), (other, 0.1)]
            gloss[s] = g
        dictionary.append(DictionaryEntry(tuple(src_words), tuple(alts)))
    config = LexiconModelConfig(lexicon, gamma, epsilon, vocab=sorted(set(extra_vocab)))
    return SyntheticWorld(config, dictionary, fillers, gloss)


def make_tasks(
    world: SyntheticWorld,
    seed: int,
    size: int,
    c_min: int = 1,
    c_max: int = 4,
    fillers: tuple[int, int] = (3, 7),
    prefix: str = "s",
) -> list[SentenceTask]:
    """Sentences with between ``c_min`` and ``c_max`` dictionary terms each."""
    rng = random.Random(seed)
    tasks = []
    for n in range(size):
        c = rng.randint(c_min, c_max) if c_max > 0 else 0
        entries = rng.sample(world.dictionary, c)
        units: list[tuple[tuple[str, ...], tuple[str, ...]]] = []
        for _ in range(rng.randint(*fillers)):
            w = rng.choice(world.fillers)
            units.append(((w,), (world.gloss[w],)))
        for e in entries:
            alt = rng.choice(e.target_alternatives)
            units.insert(rng.randint(0, len(units)), (e.source_phrase, alt))
        source = tuple(t for s, _ in units for t in s)
        reference = tuple(t for _, r in units for t in r)
        constraints = apply_dictionary(world.dictionary, source, reference, max_constraints=c)
        tasks.append(SentenceTask(f"{prefix}{n:04d}", source, tuple(constraints), reference))
    return tasks


def validate_tasks(tasks) -> list[str]:
    """Problems found in generated tasks; empty when every constraint target occurs in its reference."""
    problems = []
    for t in tasks:
        for c in t.constraints:
            if t.reference is None or not any(
                tuple(t.reference[i : i + len(a)]) == a for a in c.alternatives for i in range(len(t.reference))
            ):
                problems.append(f"{t.id}: constraint {c.alternatives} missing from reference")
    return problems


@dataclass
class MicroInstance:
    scorer: object
    source: tuple[str, ...]
    constraints: list[ConstraintSpec]
    max_len: int


def micro_instance(rng: random.Random, targets: int = 4, max_len: int = 4) -> MicroInstance:
    """Tiny random lexicon problem small enough for exhaustive enumeration."""
    vocab = [f"t{i}" for i in range(targets)]
    n = rng.randint(2, 3)
    source = tuple(f"w{i}" for i in range(n))
    lexicon = {}
    for s in source:
        weights = [rng.random() + 0.05 for _ in vocab]
        total = sum(weights)
        probs = [w / total for w in weights]
        probs[-1] = 1.0 - sum(probs[:-1])
        lexicon[s] = list(zip(vocab, probs))
    from termdecode.scoring import LexiconModel

    scorer = LexiconModel(LexiconModelConfig(lexicon, gamma=rng.uniform(1.0, 3.0), epsilon=0.05, vocab=vocab))
    count = rng.randint(1, 2)
    firsts = rng.sample(vocab, count)
    positions = rng.sample(range(n), count)
    constraints = []
    for first, pos in zip(firsts, positions):
        alt = (first,) if rng.random() < 0.6 else (first, rng.choice(vocab))
        constraints.append(ConstraintSpec((alt,), Span(pos, pos + 1)))
    return MicroInstance(scorer, source, constraints, max_len)


def _distribution(weights: dict[str, float]) -> dict[str, float]:
    total = sum(weights.values())
    return {t: (math.log(w / total) if w > 0 else -math.inf) for t, w in weights.items()}


def _peaked(n: int, peak: int, secondary: dict[int, float] | None = None, peak_mass: float = 0.6) -> list[float]:
    att = [0.0] * n
    secondary = secondary or {}
    rest = 1.0 - peak_mass - sum(secondary.values())
    others = [j for j in range(n) if j != peak and j not in secondary]
    for j in others:
        att[j] = rest / len(others)
    for j, w in secondary.items():
        att[j] = w
    att[peak] = peak_mass
    return att


@dataclass
class ReplayTask:
    task: SentenceTask
    trace: list[TraceStep]
    kind: str

    def scorer(self) -> ReplayModel:
        return ReplayModel(self.trace)


def _trace_sentence(n: int) -> tuple[tuple[str, ...], list[str]]:
    return tuple(f"src{j}" for j in range(n)), [f"tgt{j}" for j in range(n)]


def offset_suite(seed: int, size: int, tau: float = 0.3) -> list[ReplayTask]:
    """Replay traces whose attention peak sits next to the constraint span.

    Kinds cycle through ``clean`` (peak inside the span), ``offset0/1/2``
    (secondary attention >= ``tau`` on the span and the constraint token
    becomes likely only after 0, 1 or 2 extra tokens) and ``weak``
    (secondary attention below ``tau``).
    """
    kinds = ["clean", "offset0", "offset1", "offset2", "weak"]
    rng = random.Random(seed)
    out = []
    for k in range(size):
        kind = kinds[k % len(kinds)]
        n = rng.randint(5, 7)
        p = rng.randint(1, n - 3)
        words, glosses = _trace_sentence(n)
        term = f"term{k}"
        extra = int(kind[-1]) if kind.startswith("offset") else 0
        steps = []
        max_len = 3 * n
        for s in range(max_len + 1):
            focus = min(s, n - 1)
            secondary = None
            peak = focus
            in_window = p <= s <= p + extra
            if kind != "clean" and in_window:
                peak = p - 1
                secondary = {p: tau + 0.05 if kind != "weak" else tau - 0.1}
            att = _peaked(n, peak, secondary)
            weights = {g: 0.02 for g in glosses}
            weights[glosses[focus]] = 0.6
            weights["art"] = 0.15 if kind.startswith("offset") and p <= s < p + extra else 0.03
            blocked = kind.startswith("offset") and p <= s < p + extra
            weights[term] = 0.0 if blocked else 0.1
            weights[EOS] = 0.9 if s >= n else 0.005
            steps.append(TraceStep(s, tuple(att), _distribution(weights)))
        constraint = ConstraintSpec(((term,),), Span(p, p + 1))
        reference = tuple(glosses[:p] + [term] + glosses[p + 1 :])
        out.append(ReplayTask(SentenceTask(f"off{k:04d}", words, (constraint,), reference), steps, kind))
    return out


def starving_suite(seed: int, size: int, c_max: int = 2) -> list[ReplayTask]:
    """Replay traces whose attention never reaches any constraint span."""
    rng = random.Random(seed)
    out = []
    for k in range(size):
        n = rng.randint(4, 7)
        c = rng.randint(1, c_max)
        words, glosses = _trace_sentence(n)
        positions = sorted(rng.sample(range(1, n), c))
        terms = [f"term{k}_{i}" for i in range(c)]
        steps = []
        max_len = 3 * n
        for s in range(max_len + 1):
            att = _peaked(n, 0, peak_mass=0.9)
            weights = {g: 0.05 for g in glosses}
            weights[glosses[min(s, n - 1)]] = 0.5
            for t in terms:
                weights[t] = 0.05
            weights[EOS] = 0.9 if s >= n else 0.01
            steps.append(TraceStep(s, tuple(att), _distribution(weights)))
        constraints = tuple(ConstraintSpec(((t,),), Span(p, p + 1)) for t, p in zip(terms, positions))
        out.append(ReplayTask(SentenceTask(f"starve{k:04d}", words, constraints, None), steps, "starving"))
    return out

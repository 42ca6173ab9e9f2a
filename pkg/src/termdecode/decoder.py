"""Multi-stack constrained beam search.

Hypotheses are grouped into one stack per acceptor state and every stack is
pruned to the beam size after each step.  Three modes share the search loop:

``plain``
    unconstrained beam search (single-state acceptor).
``v1``
    every pending constraint is force-expanded at every step.
``v2``
    constraint arcs open only while the scorer attends to the constraint's
    source span; completed spans are masked out of all later attention.
    Starved runs back off to ``v1`` unless fallback is disabled.
"""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Sequence

import numpy as np

from termdecode.acceptor import (
    COMPLEMENT,
    Acceptor,
    Arc,
    Gate,
    Label,
    Span,
    accepts,
    active_arcs,
    build_acceptor,
)
from termdecode.scoring import MaskError, Scorer, StepResult, Vocab

logger = logging.getLogger(__name__)

MODES = ("plain", "v1", "v2")
_MODE_ALIASES = {"unconstrained": "plain"}


class DecodeError(RuntimeError):
    pass


class SearchExhausted(DecodeError):
    pass


class GatingStarved(DecodeError):
    pass


class DecodeConfigError(ValueError):
    pass


class VocabularyError(ValueError):
    pass


@dataclass
class DecodeConfig:
    beam: int = 12
    mode: str = "v1"
    alpha: float = 0.6
    max_len_ratio: float = 3.0
    max_len: int | None = None
    # relaxation A: secondary attention threshold
    secondary_tau: float | None = None
    # compare tau against the span's attention sum instead of its maximum
    span_sum: bool = False
    # relaxations B/C: extra tokens around a constraint while its span is attended
    relax_extra: int = 0
    fallback: bool = True

    def __post_init__(self) -> None:
        self.mode = _MODE_ALIASES.get(self.mode, self.mode)
        if self.mode not in MODES:
            raise DecodeConfigError(f"unknown mode {self.mode!r}")
        if self.beam < 1:
            raise DecodeConfigError("beam must be >= 1")
        if self.secondary_tau is not None and not 0.0 < self.secondary_tau <= 1.0:
            raise DecodeConfigError("secondary_tau must lie in (0, 1]")
        if self.relax_extra not in (0, 1, 2):
            raise DecodeConfigError("relax_extra must be 0, 1 or 2")
        if self.max_len is not None and self.max_len < 1:
            raise DecodeConfigError("max_len must be >= 1")

    def resolve_max_len(self, source_len: int, acceptor: Acceptor) -> int:
        if self.max_len is not None:
            return self.max_len
        needed = sum(min(len(a) for a in c.alternatives) for c in acceptor.constraints)
        return max(math.ceil(self.max_len_ratio * source_len), needed, 1)


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[str, ...]
    score: float
    model_state: Any = field(repr=False)
    acceptor_state: int
    coverage: frozenset[int] = frozenset()
    complete: bool = False

    @property
    def last_token(self) -> str | None:
        return self.tokens[-1] if self.tokens else None


@dataclass
class SearchStats:
    expansions: int = 0
    stacks_touched: int = 0
    fallback_used: bool = False
    constraints_satisfied: bool = False
    steps: int = 0
    # per step: acceptor state -> live hypotheses expanded
    occupancy: list[dict[int, int]] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "expansions": self.expansions,
            "stacks_touched": self.stacks_touched,
            "fallback_used": self.fallback_used,
            "satisfied": self.constraints_satisfied,
        }


@dataclass
class DecodeResult:
    tokens: tuple[str, ...]
    score: float
    normalized: float
    stats: SearchStats
    hypothesis: Hypothesis = field(repr=False)


def length_penalty(length: int, alpha: float) -> float:
    return ((5.0 + length) / 6.0) ** alpha


def normalized_score(hyp: Hypothesis, alpha: float) -> float:
    return hyp.score / length_penalty(len(hyp.tokens), alpha)


def _selection_key(hyp: Hypothesis, alpha: float):
    return (-normalized_score(hyp, alpha), len(hyp.tokens), hyp.tokens)


def _prune_key(hyp: Hypothesis):
    return (-hyp.score, hyp.tokens)


def attention_gate(attention: np.ndarray, tau: float | None = None, span_sum: bool = False) -> Gate:
    """Span predicate: argmax attention inside the span, or (with ``tau``) secondary attention."""
    top = int(np.argmax(attention))

    def gate(span: Span) -> bool:
        if span.start <= top < span.end:
            return True
        if tau is None:
            return False
        weights = attention[span.start : span.end]
        stat = weights.sum() if span_sum else weights.max()
        return bool(stat >= tau)

    return gate


class _LabelMasks:
    """Boolean vocabulary masks for loop/relaxation labels (end-of-sequence excluded)."""

    def __init__(self, vocab: Vocab):
        self.vocab = vocab
        self._cache: dict[Label, np.ndarray] = {}

    def __call__(self, label: Label) -> np.ndarray:
        mask = self._cache.get(label)
        if mask is None:
            mask = np.ones(len(self.vocab), dtype=bool)
            mask[self.vocab.eos_id] = False
            if label.kind == COMPLEMENT:
                ids = [self.vocab.index[t] for t in label.excluded if t in self.vocab]
                mask[ids] = False
            self._cache[label] = mask
        return mask


def _top_k(scores: np.ndarray, k: int, tokens: Sequence[str]) -> list[int]:
    finite = np.flatnonzero(np.isfinite(scores))
    if len(finite) > k:
        kth = np.partition(scores[finite], len(finite) - k)[len(finite) - k]
        finite = finite[scores[finite] >= kth]
    ranked = sorted(finite.tolist(), key=lambda i: (-scores[i], tokens[i]))
    return ranked[:k]


@dataclass
class _Context:
    acceptor: Acceptor
    vocab: Vocab
    max_len: int
    masks: _LabelMasks
    coverage: dict[int, frozenset[int]] = field(default_factory=dict)

    def coverage_of(self, state: int) -> frozenset[int]:
        cov = self.coverage.get(state)
        if cov is None:
            cov = self.coverage[state] = self.acceptor.covered_positions(state)
        return cov


def _context(acceptor: Acceptor, vocab: Vocab, max_len: int) -> _Context:
    return _Context(acceptor, vocab, max_len, _LabelMasks(vocab))


def _expand(hyp: Hypothesis, step: StepResult, arcs: Sequence[Arc], k: int, model_state: Any, ctx: _Context):
    acc, vocab = ctx.acceptor, ctx.vocab
    lp = step.logprobs
    out: list[Hypothesis] = []

    def child(token: str, tid: int, dst: int) -> None:
        score = hyp.score + float(lp[tid])
        if score == -math.inf:
            return
        out.append(Hypothesis(hyp.tokens + (token,), score, model_state, dst, ctx.coverage_of(dst)))

    if len(hyp.tokens) < ctx.max_len:
        literal_ids: list[int] = []
        others: list[Arc] = []
        for arc in arcs:
            if arc.is_literal:
                tid = vocab.index[arc.label.token]
                literal_ids.append(tid)
                child(arc.label.token, tid, arc.dst)
            else:
                others.append(arc)
        if others:
            allowed = ctx.masks(others[0].label)
            if len(others) > 1 or literal_ids:
                allowed = allowed.copy()
                for arc in others[1:]:
                    allowed |= ctx.masks(arc.label)
                allowed[literal_ids] = False
            for tid in _top_k(np.where(allowed, lp, -np.inf), k, vocab.tokens):
                dst = next(a.dst for a in others if ctx.masks(a.label)[tid])
                child(vocab.tokens[tid], tid, dst)
    if acc.is_final(hyp.acceptor_state):
        score = hyp.score + float(lp[vocab.eos_id])
        if score != -math.inf:
            out.append(
                Hypothesis(hyp.tokens + (vocab.eos,), score, model_state, hyp.acceptor_state, hyp.coverage, True)
            )
    return out


def expand_v1(
    hyp: Hypothesis,
    step: StepResult,
    acceptor: Acceptor,
    k: int,
    *,
    model_state: Any = None,
    max_len: int | None = None,
    _ctx: _Context | None = None,
) -> list[Hypothesis]:
    """Top-k loop tokens plus the next token of every outgoing constraint arc."""
    ctx = _ctx or _context(acceptor, step.vocab, max_len if max_len is not None else len(hyp.tokens) + 1)
    return _expand(hyp, step, acceptor.outgoing[hyp.acceptor_state], k, model_state, ctx)


def expand_v2(
    hyp: Hypothesis,
    step: StepResult,
    acceptor: Acceptor,
    config: DecodeConfig,
    *,
    model_state: Any = None,
    max_len: int | None = None,
    _ctx: _Context | None = None,
) -> list[Hypothesis]:
    """Attention-gated expansion: attended constraint arcs replace the vocabulary loop."""
    ctx = _ctx or _context(acceptor, step.vocab, max_len if max_len is not None else len(hyp.tokens) + 1)
    gate = attention_gate(step.attention, config.secondary_tau, config.span_sum)
    arcs = active_arcs(acceptor, hyp.acceptor_state, gate)
    return _expand(hyp, step, arcs, config.beam, model_state, ctx)


Observer = Callable[[Hypothesis, StepResult], None]


def _check_vocab(acceptor: Acceptor, vocab: Vocab) -> None:
    needed = acceptor.vocabulary()
    missing = sorted(needed - set(vocab.tokens))
    if missing:
        raise VocabularyError(f"constraint tokens missing from scorer vocabulary: {missing}")
    if vocab.eos in needed:
        raise VocabularyError("constraints may not contain the end-of-sequence token")


def beam_search(
    scorer: Scorer,
    source: Sequence[str],
    acceptor: Acceptor,
    config: DecodeConfig,
    gated: bool,
    observer: Observer | None = None,
    stats: SearchStats | None = None,
) -> Hypothesis | None:
    """One search pass; returns the best complete hypothesis or ``None``."""
    vocab = scorer.vocab
    _check_vocab(acceptor, vocab)
    stats = stats if stats is not None else SearchStats()
    ctx = _context(acceptor, vocab, config.resolve_max_len(len(source), acceptor))
    start = acceptor.start
    stacks = {start: [Hypothesis((), 0.0, scorer.begin(source), start, ctx.coverage_of(start))]}
    touched = {start}
    finished: list[Hypothesis] = []
    while stacks:
        stats.steps += 1
        stats.occupancy.append({s: len(h) for s, h in sorted(stacks.items())})
        grown: dict[int, list[Hypothesis]] = {}
        for state in sorted(stacks):
            for hyp in stacks[state]:
                stats.expansions += 1
                try:
                    step, model_state = scorer.advance(hyp.model_state, hyp.last_token, hyp.coverage)
                except MaskError as exc:
                    logger.debug("dropping hypothesis %s: %s", hyp.tokens, exc)
                    continue
                if observer is not None:
                    observer(hyp, step)
                if gated:
                    children = expand_v2(hyp, step, acceptor, config, model_state=model_state, _ctx=ctx)
                else:
                    children = expand_v1(hyp, step, acceptor, config.beam, model_state=model_state, _ctx=ctx)
                for c in children:
                    if c.complete:
                        finished.append(c)
                    else:
                        grown.setdefault(c.acceptor_state, []).append(c)
        stacks = {s: heapq.nsmallest(config.beam, hyps, key=_prune_key) for s, hyps in grown.items()}
        touched.update(stacks)
    stats.stacks_touched += len(touched)
    if not finished:
        return None
    return min(finished, key=lambda h: _selection_key(h, config.alpha))


def _result(hyp: Hypothesis, config: DecodeConfig, stats: SearchStats, check: Acceptor) -> DecodeResult:
    tokens = hyp.tokens[:-1] if hyp.complete else hyp.tokens
    stats.constraints_satisfied = accepts(check, tokens)
    return DecodeResult(tokens, hyp.score, normalized_score(hyp, config.alpha), stats, hyp)


def decode(
    scorer: Scorer,
    source: Sequence[str],
    acceptor: Acceptor,
    config: DecodeConfig | None = None,
    observer: Observer | None = None,
) -> DecodeResult:
    config = config or DecodeConfig()
    stats = SearchStats()
    plain = acceptor.strip_spans()
    if config.mode == "plain":
        best = beam_search(scorer, source, Acceptor.empty(), config, False, observer, stats)
        if best is None:
            raise SearchExhausted("search exhausted")
        return _result(best, config, stats, plain)
    if config.mode == "v1":
        best = beam_search(scorer, source, plain, config, False, observer, stats)
        if best is None:
            raise SearchExhausted("search exhausted")
        return _result(best, config, stats, plain)

    if any(c.span is None for c in acceptor.constraints):
        raise DecodeConfigError("v2 requires spans on every constraint")
    for c in acceptor.constraints:
        c.span.check(len(source))
    gated = acceptor
    if acceptor.relaxation != config.relax_extra:
        gated = build_acceptor(acceptor.constraints, config.relax_extra)
    best = beam_search(scorer, source, gated, config, True, observer, stats)
    if best is None:
        if not config.fallback:
            raise GatingStarved("attention gating starved")
        logger.info("attention gating starved; backing off to v1")
        stats.fallback_used = True
        best = beam_search(scorer, source, plain, config, False, observer, stats)
        if best is None:
            raise SearchExhausted("search exhausted")
    return _result(best, config, stats, plain)


def run_with_fallback(
    scorer: Scorer,
    source: Sequence[str],
    acceptor: Acceptor,
    config: DecodeConfig | None = None,
    observer: Observer | None = None,
) -> DecodeResult:
    config = replace(config or DecodeConfig(), mode="v2", fallback=True)
    return decode(scorer, source, acceptor, config, observer)


def count_expansions(result: DecodeResult) -> dict:
    """Scorer-call count and per-step stack occupancy of a finished run."""
    occ = result.stats.occupancy
    return {
        "expansions": result.stats.expansions,
        "steps": result.stats.steps,
        "live_stacks": [len(o) for o in occ],
        "max_live_stacks": max((len(o) for o in occ), default=0),
        "max_stack_size": max((n for o in occ for n in o.values()), default=0),
        "occupancy": occ,
    }

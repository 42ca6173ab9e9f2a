"""Scoring models consumed by the decoder.

A scorer exposes ``begin(source) -> state`` and
``advance(state, prev_token, mask) -> (StepResult, state)``.  ``advance``
must be pure and must give exactly zero attention to masked source
positions.  Two scorers are provided: :class:`LexiconModel`, a synthetic
attention model driven by a word lexicon, and :class:`ReplayModel`, which
serves recorded per-step distributions for golden tests.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol, Sequence

import numpy as np

logger = logging.getLogger(__name__)

EOS = "</s>"


class MaskError(ValueError):
    """Raised when a mask leaves no source position to attend to."""


class ReplayExhausted(LookupError):
    pass


class Vocab:
    """Fixed token inventory shared by a scorer and the decoder."""

    def __init__(self, tokens: Iterable[str], eos: str = EOS):
        ordered = list(dict.fromkeys(tokens))
        if eos not in ordered:
            ordered.append(eos)
        self.tokens: tuple[str, ...] = tuple(ordered)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.eos = eos
        self.eos_id = self.index[eos]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self.index

    def __iter__(self):
        return iter(self.tokens)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self.tokens == other.tokens and self.eos == other.eos

    def __hash__(self) -> int:
        return hash((self.tokens, self.eos))

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.index[t] for t in tokens]


@dataclass(frozen=True, eq=False)
class StepResult:
    """Next-token log-probabilities (aligned with ``vocab``) and attention over the source."""

    logprobs: np.ndarray
    attention: np.ndarray
    vocab: Vocab

    def logprob(self, token: str) -> float:
        return float(self.logprobs[self.vocab.index[token]])

    def as_dict(self) -> dict[str, float]:
        return {t: float(lp) for t, lp in zip(self.vocab.tokens, self.logprobs)}

    def argmax_position(self) -> int:
        return int(np.argmax(self.attention))

    def validate(self, mask: Iterable[int] = ()) -> None:
        total = float(np.exp(self.logprobs).sum())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {total}")
        att = self.attention
        if (att < 0).any() or abs(float(att.sum()) - 1.0) > 1e-9:
            raise ValueError(f"attention is not a distribution: {att}")
        for j in mask:
            if att[j] != 0.0:
                raise ValueError(f"masked position {j} has attention {att[j]}")


class Scorer(Protocol):
    vocab: Vocab

    def begin(self, source: Sequence[str]) -> Any: ...

    def advance(self, state: Any, prev_token: str | None, mask: frozenset[int]) -> tuple[StepResult, Any]: ...


def apply_mask(attention: np.ndarray, mask: Iterable[int]) -> np.ndarray:
    """Zero the masked positions and renormalize."""
    out = np.array(attention, dtype=np.float64)
    idx = [j for j in mask if 0 <= j < len(out)]
    if idx:
        out[idx] = 0.0
    total = out.sum()
    if total <= 0.0:
        raise MaskError(f"mask {sorted(mask)} removes all attention mass")
    return out / total


def lexicon_mixture(attention: Sequence[float], rows: np.ndarray, epsilon: float) -> np.ndarray:
    """``(1 - eps) * sum_j attention_j * rows[j] + eps * uniform``."""
    rows = np.asarray(rows, dtype=np.float64)
    mixed = np.asarray(attention, dtype=np.float64) @ rows
    return (1.0 - epsilon) * mixed + epsilon / rows.shape[1]


@dataclass
class LexiconModelConfig:
    lexicon: dict[str, list[tuple[str, float]]]
    gamma: float = 2.0
    epsilon: float = 0.01
    vocab: list[str] = field(default_factory=list)
    eos: str = EOS

    def __post_init__(self) -> None:
        if self.gamma < 1:
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        if not 0.0 <= self.epsilon <= 0.1:
            raise ValueError(f"epsilon must lie in [0, 0.1], got {self.epsilon}")
        for src, row in self.lexicon.items():
            total = sum(p for _, p in row)
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"lexicon row {src!r} sums to {total}")
            if any(t == self.eos for t, _ in row):
                raise ValueError(f"lexicon row {src!r} emits the end-of-sequence token")

    def to_json(self) -> dict:
        return {
            "lexicon": {s: [[t, p] for t, p in row] for s, row in self.lexicon.items()},
            "gamma": self.gamma,
            "epsilon": self.epsilon,
            "vocab": list(self.vocab),
            "eos": self.eos,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> LexiconModelConfig:
        return cls(
            {s: [(t, float(p)) for t, p in row] for s, row in obj["lexicon"].items()},
            float(obj.get("gamma", 2.0)),
            float(obj.get("epsilon", 0.01)),
            list(obj.get("vocab", [])),
            obj.get("eos", EOS),
        )

    @classmethod
    def load(cls, path: str | Path) -> LexiconModelConfig:
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


class _Sentence:
    """Per-sentence lexicon rows plus a cache of step results keyed by (cursor, mask)."""

    def __init__(self, source: tuple[str, ...], rows: np.ndarray):
        self.source = source
        self.rows = rows
        self.cache: dict[tuple[int, frozenset[int]], tuple[StepResult, int]] = {}


@dataclass(frozen=True)
class LexiconState:
    sentence: _Sentence
    cursor: int
    pending: str | None  # argmax of the last emitted distribution

    def __repr__(self) -> str:
        return f"LexiconState(cursor={self.cursor}, pending={self.pending!r})"


class LexiconModel:
    """Synthetic attention model.

    Attention peaks at a monotone cursor and decays geometrically by
    ``exp(-gamma)`` per position.  The next-token distribution mixes the
    lexicon rows of all source positions by attention.  The cursor moves
    one position when the previously emitted token was the argmax of the
    previous distribution, and skips masked positions.  Once it passes the
    last source position the end-of-sequence token takes ``1 - epsilon``.
    """

    def __init__(self, config: LexiconModelConfig):
        self.config = config
        targets = [t for row in config.lexicon.values() for t, _ in row]
        self.vocab = Vocab(list(config.vocab) + targets, config.eos)
        self._row_cache: dict[str, np.ndarray] = {}
        self._warned: set[str] = set()
        n = len(self.vocab)
        self._uniform = np.full(n, 1.0 / (n - 1))
        self._uniform[self.vocab.eos_id] = 0.0
        self._eos_row = np.zeros(n)
        self._eos_row[self.vocab.eos_id] = 1.0

    def _row(self, src: str) -> np.ndarray:
        row = self._row_cache.get(src)
        if row is None:
            entries = self.config.lexicon.get(src)
            if entries is None:
                if src not in self._warned:
                    logger.warning("source token %r missing from lexicon; using a uniform row", src)
                    self._warned.add(src)
                row = self._uniform
            else:
                row = np.zeros(len(self.vocab))
                for t, p in entries:
                    row[self.vocab.index[t]] += p
            self._row_cache[src] = row
        return row

    def begin(self, source: Sequence[str]) -> LexiconState:
        source = tuple(source)
        if not source:
            raise ValueError("empty source sentence")
        rows = np.stack([self._row(s) for s in source])
        return LexiconState(_Sentence(source, rows), 0, None)

    def attention(self, n: int, cursor: int, mask: frozenset[int]) -> np.ndarray:
        dist = np.abs(np.arange(n) - cursor)
        raw = np.exp(-self.config.gamma * (dist - dist.min()))
        return apply_mask(raw / raw.sum(), mask)

    def advance(
        self, state: LexiconState, prev_token: str | None, mask: frozenset[int] = frozenset()
    ) -> tuple[StepResult, LexiconState]:
        sent = state.sentence
        n = len(sent.source)
        cursor = state.cursor
        if prev_token is not None and prev_token == state.pending:
            cursor += 1
        while cursor < n and cursor in mask:
            cursor += 1
        key = (cursor, mask)
        hit = sent.cache.get(key)
        if hit is None:
            att = self.attention(n, cursor, mask)
            eps = self.config.epsilon
            if cursor >= n:
                probs = (1.0 - eps) * self._eos_row + eps / len(self.vocab)
            else:
                probs = lexicon_mixture(att, sent.rows, eps)
            with np.errstate(divide="ignore"):
                logprobs = np.log(probs)
            # ties resolve to the lexicographically smallest token
            best = np.flatnonzero(probs == probs.max())
            pending = min(self.vocab.tokens[i] for i in best)
            hit = (StepResult(logprobs, att, self.vocab), pending)
            sent.cache[key] = hit
        step, pending = hit
        return step, LexiconState(sent, cursor, pending)


@dataclass(frozen=True)
class TraceStep:
    step: int
    attention: tuple[float, ...]
    logprobs: Mapping[str, float]
    prev: str | None = None

    @classmethod
    def from_json(cls, obj: Mapping) -> TraceStep:
        return cls(
            int(obj["step"]),
            tuple(float(a) for a in obj["attention"]),
            {t: float(lp) for t, lp in obj["logprobs"].items()},
            obj.get("prev"),
        )

    def to_json(self) -> dict:
        out: dict = {"step": self.step, "attention": list(self.attention), "logprobs": dict(self.logprobs)}
        if self.prev is not None:
            out["prev"] = self.prev
        return out


class ReplayModel:
    """Serve recorded step distributions.

    Steps are looked up by ``(step index, previous token)`` when the trace
    records a ``prev`` field for that step, otherwise by step index alone.
    Recorded log-probabilities are returned unchanged; tokens absent from a
    step get ``-inf``.
    """

    def __init__(self, steps: Iterable[TraceStep], vocab: Iterable[str] = (), eos: str = EOS):
        self.steps = tuple(steps)
        tokens = list(vocab)
        for s in self.steps:
            tokens.extend(s.logprobs)
        self.vocab = Vocab(tokens, eos)
        self._by_key: dict[tuple[int, str | None], StepResult] = {}
        for s in self.steps:
            lp = np.full(len(self.vocab), -math.inf)
            for t, v in s.logprobs.items():
                lp[self.vocab.index[t]] = v
            self._by_key[(s.step, s.prev)] = StepResult(lp, np.asarray(s.attention, dtype=np.float64), self.vocab)
        self._masked: dict[tuple[tuple[int, str | None], frozenset[int]], StepResult] = {}

    @classmethod
    def load(cls, path: str | Path, vocab: Iterable[str] = ()) -> ReplayModel:
        steps = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    steps.append(TraceStep.from_json(json.loads(line)))
        return cls(steps, vocab)

    def begin(self, source: Sequence[str]) -> int:
        return 0

    def advance(self, state: int, prev_token: str | None, mask: frozenset[int] = frozenset()) -> tuple[StepResult, int]:
        key = (state, prev_token)
        if key not in self._by_key:
            key = (state, None)
            if key not in self._by_key:
                raise ReplayExhausted(f"replay trace exhausted at step {state}")
        cache_key = (key, mask)
        step = self._masked.get(cache_key)
        if step is None:
            raw = self._by_key[key]
            step = StepResult(raw.logprobs, apply_mask(raw.attention, mask) if mask else raw.attention, self.vocab)
            self._masked[cache_key] = step
        return step, state + 1

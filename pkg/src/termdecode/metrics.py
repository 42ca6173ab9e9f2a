"""Evaluation: repetition count, length ratio, BLEU, constraint satisfaction, speed tables."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from termdecode.acceptor import Acceptor, accepts

REP_ORDER = 7


def rep_count(tokens: Sequence[str], stop_words: Iterable[str] = (), order: int = REP_ORDER) -> int:
    """Extra non-overlapping occurrences of repeated character n-grams in one sentence.

    Stop-word tokens are removed and the rest joined with single spaces.
    Each distinct n-gram is counted greedily left to right without overlap;
    an n-gram seen ``k`` times contributes ``k - 1``.
    """
    stop = set(stop_words)
    text = " ".join(t for t in tokens if t not in stop)
    next_free: dict[str, int] = {}
    occurrences: Counter = Counter()
    for i in range(len(text) - order + 1):
        gram = text[i : i + order]
        if i >= next_free.get(gram, 0):
            occurrences[gram] += 1
            next_free[gram] = i + order
    return sum(k - 1 for k in occurrences.values() if k > 1)


def length_ratio(hypotheses: Sequence[Sequence[str]], references: Sequence[Sequence[str]]) -> float:
    ref_len = sum(len(r) for r in references)
    if ref_len == 0:
        raise ValueError("references are empty")
    return sum(len(h) for h in hypotheses) / ref_len


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(
    hypotheses: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    max_order: int = 4,
    lowercase: bool = True,
) -> float:
    """Unsmoothed corpus BLEU (0-100) against a single reference per sentence."""
    if len(hypotheses) != len(references):
        raise ValueError("hypothesis and reference counts differ")
    if not hypotheses:
        raise ValueError("empty corpus")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        if lowercase:
            hyp = [t.lower() for t in hyp]
            ref = [t.lower() for t in ref]
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            h, r = _ngrams(hyp, n), _ngrams(ref, n)
            matches[n - 1] += sum(min(c, r[g]) for g, c in h.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    if min(matches) == 0:
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(matches, totals)) / max_order
    brevity = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision)


def satisfaction_rate(outputs: Sequence[Sequence[str]], acceptors: Sequence[Acceptor]) -> float:
    """Fraction of outputs accepted by their span-stripped acceptors."""
    if len(outputs) != len(acceptors):
        raise ValueError("output and acceptor counts differ")
    if not outputs:
        return 1.0
    ok = sum(accepts(a.strip_spans(), o) for o, a in zip(outputs, acceptors))
    return ok / len(outputs)


@dataclass
class EvalReport:
    bleu: float
    length_ratio: float
    rep: int
    satisfaction: float | None = None
    sentences: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "bleu": round(self.bleu, 4),
            "length_ratio": round(self.length_ratio, 4),
            "rep": self.rep,
            "satisfaction": self.satisfaction,
            "sentences": self.sentences,
        }


def evaluate(
    hypotheses: Sequence[Sequence[str]],
    references: Sequence[Sequence[str]],
    stop_words: Iterable[str] = (),
    acceptors: Sequence[Acceptor] | None = None,
) -> EvalReport:
    stop = set(stop_words)
    reps = [rep_count(h, stop) for h in hypotheses]
    sentences = [{"rep": r, "hyp_len": len(h), "ref_len": len(ref)} for r, h, ref in zip(reps, hypotheses, references)]
    satisfaction = None
    if acceptors is not None:
        satisfaction = satisfaction_rate(hypotheses, acceptors)
        for row, h, a in zip(sentences, hypotheses, acceptors):
            row["satisfied"] = accepts(a.strip_spans(), h)
    return EvalReport(
        corpus_bleu(hypotheses, references),
        length_ratio(hypotheses, references),
        sum(reps),
        satisfaction,
        sentences,
    )


@dataclass(frozen=True)
class SpeedRow:
    mode: str
    c: int
    sentences: int
    mean_expansions: float
    mean_wall: float
    expansion_ratio: float  # baseline expansions / mode expansions
    wall_ratio: float


def speed_table(runs: Iterable[Mapping], baseline: str = "plain") -> list[SpeedRow]:
    """Aggregate per-sentence run stats into speed ratios against the baseline mode.

    Each run needs ``mode``, ``c``, ``expansions`` and ``wall`` (seconds or any
    consistent unit).  A ratio of 1.0 means as fast as the baseline; 0.2 means
    five times slower.  Without a baseline row for some ``c`` the ratios are NaN.
    """
    groups: dict[tuple[str, int], list[Mapping]] = defaultdict(list)
    for run in runs:
        groups[(run["mode"], int(run["c"]))].append(run)

    def mean(rows, key):
        return sum(float(r[key]) for r in rows) / len(rows)

    rows = []
    for (mode, c), group in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0] != baseline, kv[0][0])):
        base = groups.get((baseline, c))
        exp, wall = mean(group, "expansions"), mean(group, "wall")
        if base:
            exp_ratio = mean(base, "expansions") / exp if exp else math.nan
            wall_ratio = mean(base, "wall") / wall if wall else math.nan
        else:
            exp_ratio = wall_ratio = math.nan
        rows.append(SpeedRow(mode, c, len(group), exp, wall, exp_ratio, wall_ratio))
    return rows


def ratio_between(rows: Sequence[SpeedRow], slow: str, fast: str) -> dict[int, float]:
    """Per constraint count: mean expansions of ``slow`` divided by those of ``fast``."""
    by = {(r.mode, r.c): r for r in rows}
    return {
        c: by[(slow, c)].mean_expansions / by[(fast, c)].mean_expansions
        for (mode, c) in sorted(by)
        if mode == slow and (fast, c) in by
    }


def format_speed_table(rows: Sequence[SpeedRow]) -> str:
    lines = [f"{'mode':<8}{'c':>3}{'n':>6}{'expansions':>13}{'exp ratio':>11}{'wall ratio':>12}"]
    for r in rows:
        lines.append(
            f"{r.mode:<8}{r.c:>3}{r.sentences:>6}{r.mean_expansions:>13.1f}{r.expansion_ratio:>11.2f}{r.wall_ratio:>12.2f}"
        )
    return "\n".join(lines)

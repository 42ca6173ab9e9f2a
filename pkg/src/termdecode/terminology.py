"""Turn dictionaries and reference/baseline pairs into constraint lists."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from termdecode.acceptor import ConstraintSpec, Span


@dataclass(frozen=True)
class DictionaryEntry:
    source_phrase: tuple[str, ...]
    target_alternatives: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "source_phrase", tuple(self.source_phrase))
        object.__setattr__(self, "target_alternatives", tuple(tuple(a) for a in self.target_alternatives))
        if not self.source_phrase:
            raise ValueError("dictionary entry with empty source phrase")
        if not self.target_alternatives or any(not a for a in self.target_alternatives):
            raise ValueError(f"dictionary entry {self.source_phrase} needs non-empty target alternatives")

    @classmethod
    def parse(cls, line: str) -> DictionaryEntry:
        """Parse ``source phrase<TAB>alt1|alt2`` with space-separated tokens."""
        try:
            src, tgt = line.rstrip("\n").split("\t")
        except ValueError:
            raise ValueError(f"dictionary line needs exactly one tab: {line!r}") from None
        return cls(tuple(src.split()), tuple(tuple(a.split()) for a in tgt.split("|")))

    def to_line(self) -> str:
        return " ".join(self.source_phrase) + "\t" + "|".join(" ".join(a) for a in self.target_alternatives)


def load_dictionary(path: str | Path) -> list[DictionaryEntry]:
    with open(path, encoding="utf-8") as fh:
        return [DictionaryEntry.parse(line) for line in fh if line.strip()]


class FrequencyTable:
    """Corpus token counts; unseen tokens count as zero."""

    def __init__(self, counts: Counter | dict[str, int] | None = None):
        self.counts = Counter(counts or {})
        if any(v < 0 for v in self.counts.values()):
            raise ValueError("negative token count")

    @classmethod
    def from_sentences(cls, sentences: Iterable[str | Sequence[str]]) -> FrequencyTable:
        counts: Counter = Counter()
        for s in sentences:
            counts.update(s.split() if isinstance(s, str) else s)
        return cls(counts)

    @classmethod
    def load(cls, path: str | Path) -> FrequencyTable:
        with open(path, encoding="utf-8") as fh:
            return cls.from_sentences(fh)

    def __getitem__(self, token: str) -> int:
        return self.counts.get(token, 0)


def _occurs(needle: Sequence[str], haystack: Sequence[str]) -> bool:
    n = len(needle)
    return any(tuple(haystack[i : i + n]) == tuple(needle) for i in range(len(haystack) - n + 1))


def find_matches(entries: Sequence[DictionaryEntry], source: Sequence[str]) -> list[tuple[int, int, DictionaryEntry]]:
    """All (start, end, entry) occurrences of dictionary source phrases."""
    out = []
    for entry in entries:
        n = len(entry.source_phrase)
        for i in range(len(source) - n + 1):
            if tuple(source[i : i + n]) == entry.source_phrase:
                out.append((i, i + n, entry))
    return out


def apply_dictionary(
    entries: Sequence[DictionaryEntry],
    source: Sequence[str],
    reference: Sequence[str] | None = None,
    max_constraints: int = 2,
    stoplist: Iterable[str] = (),
) -> list[ConstraintSpec]:
    """Span-annotated constraints for dictionary phrases found in ``source``.

    Matches are chosen longest first (leftmost on ties) and never overlap.
    With a reference, entries keep only the alternatives that occur in it and
    are dropped when none do.  Entries whose source tokens are all in
    ``stoplist`` are ignored.  At most ``max_constraints`` are returned,
    keeping the leftmost.
    """
    stop = set(stoplist)
    usable = [e for e in entries if not (stop and all(t in stop for t in e.source_phrase))]
    matches = sorted(find_matches(usable, source), key=lambda m: (-(m[1] - m[0]), m[0]))
    chosen: list[tuple[int, int, tuple[tuple[str, ...], ...]]] = []
    taken: set[int] = set()
    for start, end, entry in matches:
        if taken.intersection(range(start, end)):
            continue
        alts = entry.target_alternatives
        if reference is not None:
            alts = tuple(a for a in alts if _occurs(a, reference))
            if not alts:
                continue
        chosen.append((start, end, alts))
        taken.update(range(start, end))
    chosen.sort()
    return [ConstraintSpec(alts, Span(start, end)) for start, end, alts in chosen[:max_constraints]]


def _missing_ranked(reference: Sequence[str], baseline: Sequence[str], freq: FrequencyTable | None):
    present = set(baseline)
    first: dict[str, int] = {}
    for i, tok in enumerate(reference):
        if tok not in present and tok not in first:
            first[tok] = i
    counts = freq or FrequencyTable()
    return sorted(first, key=lambda t: (counts[t], first[t])), first


def extract_gold_tokens(
    reference: Sequence[str],
    baseline: Sequence[str],
    freq: FrequencyTable | None = None,
    max_tokens: int = 2,
) -> list[ConstraintSpec]:
    """Up to ``max_tokens`` reference tokens absent from the baseline, rarest first."""
    ranked, _ = _missing_ranked(reference, baseline, freq)
    return [ConstraintSpec(((t,),)) for t in ranked[:max_tokens]]


def extract_gold_phrase(
    reference: Sequence[str],
    baseline: Sequence[str],
    freq: FrequencyTable | None = None,
    max_len: int = 5,
) -> ConstraintSpec | None:
    """A window of at most ``max_len`` reference tokens centred on the rarest missing token."""
    ranked, first = _missing_ranked(reference, baseline, freq)
    if not ranked:
        return None
    pos = first[ranked[0]]
    width = min(max_len, len(reference))
    left = (width - 1) // 2
    start = max(0, min(pos - left, len(reference) - width))
    return ConstraintSpec((tuple(reference[start : start + width]),))

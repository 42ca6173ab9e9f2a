"""Reference implementations the tests compare the package against."""

from __future__ import annotations

import itertools

from termdecode.acceptor import Acceptor, accepts, step_state
from termdecode.decoder import length_penalty
from termdecode.scoring import EOS


def committed_parse(constraints, tokens) -> bool:
    """Reference membership: pending phrases must be finished once started."""
    alts = [[tuple(a) for a in c.alternatives] for c in constraints]

    def free(i, done):
        if i == len(tokens):
            return len(done) == len(alts)
        starts = [(c, a) for c in range(len(alts)) if c not in done for a in alts[c] if a[0] == tokens[i]]
        if not starts:
            return free(i + 1, done)
        return inside(i + 1, 1, starts, done)

    def inside(i, depth, cands, done):
        finished = [(c, a) for c, a in cands if len(a) == depth]
        if finished:
            (c, _), = finished
            return free(i, done | {c})
        if i == len(tokens):
            return False
        nxt = [(c, a) for c, a in cands if a[depth] == tokens[i]]
        return bool(nxt) and inside(i + 1, depth + 1, nxt, done)

    return free(0, frozenset())


def rescore(scorer, source, acc: Acceptor, tokens, masked: bool) -> float:
    state = scorer.begin(source)
    node = acc.start
    prev = None
    total = 0.0
    for tok in list(tokens) + [EOS]:
        mask = acc.covered_positions(node) if masked else frozenset()
        step, state = scorer.advance(state, prev, mask)
        total += step.logprob(tok)
        if tok != EOS:
            node = step_state(acc, node, tok)
        prev = tok
    return total


def enumerate_best(scorer, source, acc: Acceptor, max_len: int, alpha: float):
    vocab = [t for t in scorer.vocab.tokens if t != EOS]
    best = None
    for n in range(max_len + 1):
        for seq in itertools.product(vocab, repeat=n):
            if not accepts(acc, seq):
                continue
            score = rescore(scorer, source, acc, seq, masked=False)
            key = (-score / length_penalty(n + 1, alpha), n + 1, seq)
            if best is None or key < best[0]:
                best = (key, seq, score)
    return best

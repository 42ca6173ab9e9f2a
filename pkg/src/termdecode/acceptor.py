"""Finite-state acceptors encoding terminology constraints.

An acceptor built from ``c`` constraints has one plain state per subset of
satisfied constraints.  Each plain state loops over the vocabulary minus the
first tokens of its pending constraints and branches into a token trie for
those constraints; trie nodes below the root are *intermediate* states that
only admit the next token of an in-progress alternative.

With a relaxation budget ``n > 0`` every span-annotated constraint also gets
gadget states that admit up to ``n`` extra tokens before (``pre``) or after
(``post``) the constraint, but only while the span is attended.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

Token = str
Gate = Callable[["Span"], bool]

LITERAL = "literal"
COMPLEMENT = "complement"
WILDCARD = "wildcard"

FORMAT_VERSION = 1


@dataclass(frozen=True, order=True)
class Span:
    """Half-open range ``[start, end)`` of source positions."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid span [{self.start},{self.end})")

    def __contains__(self, position: object) -> bool:
        return isinstance(position, int) and self.start <= position < self.end

    def __len__(self) -> int:
        return self.end - self.start

    def __str__(self) -> str:
        return f"[{self.start},{self.end})"

    def positions(self) -> range:
        return range(self.start, self.end)

    def overlaps(self, other: Span) -> bool:
        return self.start < other.end and other.start < self.end

    def check(self, source_len: int) -> None:
        if self.end > source_len:
            raise ValueError(f"span {self} exceeds source length {source_len}")


def _check_token(token: object) -> Token:
    if not isinstance(token, str) or not token or any(ch.isspace() for ch in token):
        raise ValueError(f"invalid token {token!r}")
    return token


@dataclass(frozen=True)
class ConstraintSpec:
    """One terminology constraint: alternative token sequences plus an optional source span."""

    alternatives: tuple[tuple[Token, ...], ...]
    span: Span | None = None

    def __post_init__(self) -> None:
        alts = tuple(tuple(_check_token(t) for t in alt) for alt in self.alternatives)
        if not alts:
            raise ValueError("constraint needs at least one alternative")
        if any(not alt for alt in alts):
            raise ValueError("constraint alternatives must be non-empty")
        if len(set(alts)) != len(alts):
            raise ValueError(f"duplicate alternatives in constraint {alts}")
        object.__setattr__(self, "alternatives", alts)
        if self.span is not None and not isinstance(self.span, Span):
            object.__setattr__(self, "span", Span(*self.span))

    @classmethod
    def of(cls, *alternatives: str | Sequence[str], span: tuple[int, int] | None = None) -> ConstraintSpec:
        """Shorthand: ``ConstraintSpec.of("Tote Meer", "Toten Meer", span=(4, 6))``."""
        alts = tuple(tuple(a.split()) if isinstance(a, str) else tuple(a) for a in alternatives)
        return cls(alts, Span(*span) if span is not None else None)

    def without_span(self) -> ConstraintSpec:
        return ConstraintSpec(self.alternatives, None)

    def to_json(self) -> dict:
        out: dict = {"alts": [list(a) for a in self.alternatives]}
        if self.span is not None:
            out["span"] = [self.span.start, self.span.end]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> ConstraintSpec:
        if not isinstance(obj, dict) or "alts" not in obj:
            raise ValueError(f"constraint record needs 'alts': {obj!r}")
        span = obj.get("span")
        if span is not None:
            if len(span) != 2:
                raise ValueError(f"span must have two entries: {span!r}")
            span = Span(int(span[0]), int(span[1]))
        return cls(tuple(tuple(a) for a in obj["alts"]), span)


@dataclass(frozen=True)
class Label:
    kind: str
    token: Token | None = None
    excluded: frozenset[Token] = frozenset()

    @classmethod
    def literal(cls, token: Token) -> Label:
        return cls(LITERAL, token)

    @classmethod
    def complement(cls, excluded: Iterable[Token]) -> Label:
        excluded = frozenset(excluded)
        if not excluded:
            return cls(WILDCARD)
        return cls(COMPLEMENT, None, excluded)

    @classmethod
    def wildcard(cls) -> Label:
        return cls(WILDCARD)

    def matches(self, token: Token) -> bool:
        if self.kind == LITERAL:
            return token == self.token
        if self.kind == COMPLEMENT:
            return token not in self.excluded
        return True

    def __str__(self) -> str:
        if self.kind == LITERAL:
            return str(self.token)
        if self.kind == COMPLEMENT:
            return "V - {" + ", ".join(sorted(self.excluded)) + "}"
        return "V"

    def to_json(self) -> dict:
        if self.kind == LITERAL:
            return {"kind": LITERAL, "token": self.token}
        if self.kind == COMPLEMENT:
            return {"kind": COMPLEMENT, "excluded": sorted(self.excluded)}
        return {"kind": WILDCARD}

    @classmethod
    def from_json(cls, obj: dict) -> Label:
        kind = obj["kind"]
        if kind == LITERAL:
            return cls.literal(obj["token"])
        if kind == COMPLEMENT:
            return cls(COMPLEMENT, None, frozenset(obj["excluded"]))
        if kind == WILDCARD:
            return cls.wildcard()
        raise ValueError(f"unknown label kind {kind!r}")


@dataclass(frozen=True)
class Arc:
    src: int
    dst: int
    label: Label
    # spans of the owning constraint(s); shared trie prefixes may have several
    spans: tuple[Span, ...] = ()
    constraint_id: int | None = None
    alt_id: int | None = None
    position: int | None = None
    relaxation: bool = False

    @property
    def span(self) -> Span | None:
        return self.spans[0] if len(self.spans) == 1 else None

    @property
    def is_literal(self) -> bool:
        return self.label.kind == LITERAL

    @property
    def is_loop(self) -> bool:
        return not self.is_literal and not self.relaxation

    def to_json(self) -> dict:
        out = {"src": self.src, "dst": self.dst, "label": self.label.to_json()}
        if self.spans:
            out["spans"] = [[s.start, s.end] for s in self.spans]
        for key in ("constraint_id", "alt_id", "position"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.relaxation:
            out["relaxation"] = True
        return out

    @classmethod
    def from_json(cls, obj: dict) -> Arc:
        return cls(
            obj["src"],
            obj["dst"],
            Label.from_json(obj["label"]),
            tuple(Span(*s) for s in obj.get("spans", ())),
            obj.get("constraint_id"),
            obj.get("alt_id"),
            obj.get("position"),
            bool(obj.get("relaxation", False)),
        )


@dataclass(frozen=True)
class State:
    id: int
    satisfied: int  # bitmask over constraint indices
    intermediate: bool = False
    role: str | None = None  # None, "pre" or "post" for relaxation gadgets
    constraint: int | None = None  # gadget owner
    budget: int = 0  # pre: extras used so far; post: extras still allowed

    def satisfied_set(self) -> frozenset[int]:
        return frozenset(i for i in range(self.satisfied.bit_length()) if self.satisfied >> i & 1)

    def to_json(self) -> dict:
        out = {
            "id": self.id,
            "satisfied": sorted(self.satisfied_set()),
            "intermediate": self.intermediate,
        }
        if self.role is not None:
            out.update(role=self.role, constraint=self.constraint, budget=self.budget)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> State:
        mask = 0
        for i in obj["satisfied"]:
            mask |= 1 << i
        return cls(
            obj["id"], mask, obj["intermediate"], obj.get("role"), obj.get("constraint"), obj.get("budget", 0)
        )


class Acceptor:
    """Immutable compiled constraint automaton."""

    def __init__(
        self,
        constraints: Sequence[ConstraintSpec],
        states: Sequence[State],
        outgoing: Sequence[Sequence[Arc]],
        start: int,
        finals: Iterable[int],
        relaxation: int = 0,
    ):
        self.constraints = tuple(constraints)
        self.states = tuple(states)
        self.outgoing = tuple(tuple(arcs) for arcs in outgoing)
        self.start = start
        self.finals = frozenset(finals)
        self.relaxation = relaxation
        if len(self.outgoing) != len(self.states):
            raise ValueError("outgoing arc table does not match state count")
        if not self.finals:
            raise ValueError("acceptor needs at least one final state")
        self._literals: list[dict[Token, Arc]] = []
        self._others: list[tuple[Arc, ...]] = []
        for arcs in self.outgoing:
            literals: dict[Token, Arc] = {}
            for arc in arcs:
                if arc.is_literal:
                    if arc.label.token in literals:
                        raise ValueError(f"nondeterministic literal {arc.label.token!r} at state {arc.src}")
                    literals[arc.label.token] = arc
            self._literals.append(literals)
            self._others.append(tuple(a for a in arcs if not a.is_literal))

    @classmethod
    def empty(cls) -> Acceptor:
        return build_acceptor([])

    @property
    def full_mask(self) -> int:
        return (1 << len(self.constraints)) - 1

    @property
    def num_arcs(self) -> int:
        return sum(len(arcs) for arcs in self.outgoing)

    def plain_states(self) -> list[State]:
        return [s for s in self.states if not s.intermediate and s.role is None]

    def intermediate_states(self) -> list[State]:
        return [s for s in self.states if s.intermediate]

    def is_final(self, state: int) -> bool:
        return state in self.finals

    def literal_arcs(self, state: int) -> dict[Token, Arc]:
        return self._literals[state]

    def vocabulary(self) -> frozenset[Token]:
        """All tokens named by constraint alternatives."""
        return frozenset(t for c in self.constraints for alt in c.alternatives for t in alt)

    def has_spans(self) -> bool:
        return any(c.span is not None for c in self.constraints)

    def strip_spans(self) -> Acceptor:
        """Span-less, unrelaxed acceptor over the same constraints."""
        if not self.has_spans() and self.relaxation == 0:
            return self
        return build_acceptor([c.without_span() for c in self.constraints])

    def covered_positions(self, state: int) -> frozenset[int]:
        """Source positions spanned by the constraints satisfied in ``state``."""
        out: set[int] = set()
        for i in self.states[state].satisfied_set():
            span = self.constraints[i].span
            if span is not None:
                out.update(span.positions())
        return frozenset(out)

    def to_json(self) -> dict:
        return {
            "format": FORMAT_VERSION,
            "relaxation": self.relaxation,
            "constraints": [c.to_json() for c in self.constraints],
            "start": self.start,
            "finals": sorted(self.finals),
            "states": [s.to_json() for s in self.states],
            "arcs": [a.to_json() for arcs in self.outgoing for a in arcs],
        }

    @classmethod
    def from_json(cls, obj: dict) -> Acceptor:
        if obj.get("format") != FORMAT_VERSION:
            raise ValueError(f"unsupported acceptor format {obj.get('format')!r}")
        states = [State.from_json(s) for s in obj["states"]]
        outgoing: list[list[Arc]] = [[] for _ in states]
        for a in obj["arcs"]:
            arc = Arc.from_json(a)
            outgoing[arc.src].append(arc)
        return cls(
            [ConstraintSpec.from_json(c) for c in obj["constraints"]],
            states,
            outgoing,
            obj["start"],
            obj["finals"],
            obj.get("relaxation", 0),
        )

    def __repr__(self) -> str:
        return (
            f"Acceptor(constraints={len(self.constraints)}, states={len(self.states)}, "
            f"arcs={self.num_arcs}, relaxation={self.relaxation})"
        )


def _popcount(mask: int) -> int:
    return bin(mask).count("1")


def _validate(constraints: Sequence[ConstraintSpec]) -> None:
    spanned = [(i, c.span) for i, c in enumerate(constraints) if c.span is not None]
    for a in range(len(spanned)):
        for b in range(a + 1, len(spanned)):
            (i, si), (j, sj) = spanned[a], spanned[b]
            if si.overlaps(sj):
                raise ValueError(f"constraints {i} and {j} have overlapping spans {si} and {sj}")
    owner: dict[tuple[Token, ...], int] = {}
    for i, c in enumerate(constraints):
        for alt in c.alternatives:
            if alt in owner:
                raise ValueError(f"alternative {' '.join(alt)!r} is shared by constraints {owner[alt]} and {i}")
            owner[alt] = i
    # an alternative that prefixes another one leaves the automaton unable to
    # decide between completing and continuing
    alts = sorted(owner)
    for a, b in zip(alts, alts[1:]):
        if b[: len(a)] == a:
            raise ValueError(f"alternative {' '.join(a)!r} is a prefix of {' '.join(b)!r}")


class _Builder:
    def __init__(self, constraints: tuple[ConstraintSpec, ...], relaxation: int):
        self.cs = constraints
        self.n = relaxation
        self.states: list[State] = []
        self.arcs: list[list[Arc]] = []
        self.base: dict[int, int] = {}
        self.gadgets: dict[tuple[str, int, int, int], int] = {}
        self.todo: list[int] = []

    def new_state(self, **kw) -> int:
        sid = len(self.states)
        self.states.append(State(sid, **kw))
        self.arcs.append([])
        return sid

    def build(self) -> Acceptor:
        c = len(self.cs)
        order = sorted(range(1 << c), key=lambda m: (_popcount(m), [i for i in range(c) if m >> i & 1]))
        for mask in order:
            self.base[mask] = self.new_state(satisfied=mask)
        for mask in order:
            self.expand_base(mask)
        # gadget states are expanded after every plain state so post states can copy arcs
        while self.todo:
            self.expand_gadget(self.todo.pop(0))
        full = (1 << c) - 1
        finals = [s.id for s in self.states if s.satisfied == full and not s.intermediate and s.role != "pre"]
        return Acceptor(self.cs, self.states, self.arcs, self.base[0], finals, self.n)

    def gadget(self, role: str, mask: int, i: int, budget: int) -> int:
        key = (role, mask, i, budget)
        if key not in self.gadgets:
            self.gadgets[key] = self.new_state(satisfied=mask, role=role, constraint=i, budget=budget)
            self.todo.append(self.gadgets[key])
        return self.gadgets[key]

    def after(self, mask: int, i: int, remaining: int) -> int:
        if remaining > 0 and self.cs[i].span is not None:
            return self.gadget("post", mask, i, remaining)
        return self.base[mask]

    def spans_of(self, owners: Iterable[int]) -> tuple[Span, ...]:
        out: list[Span] = []
        for i in owners:
            span = self.cs[i].span
            if span is not None and span not in out:
                out.append(span)
        return tuple(out)

    def add_trie(self, src, entries, depth, mask, role, gadget, complete) -> None:
        groups: dict[Token, list[tuple[int, int, tuple[Token, ...]]]] = {}
        for i, a, rest in entries:
            groups.setdefault(rest[0], []).append((i, a, rest[1:]))
        for token, group in groups.items():
            cids = sorted({i for i, _, _ in group})
            if len(group) == 1 and not group[0][2]:
                dst = complete(group[0][0])
            else:
                dst = self.new_state(satisfied=mask, intermediate=True, role=role, constraint=gadget)
                self.add_trie(dst, group, depth + 1, mask, role, gadget, complete)
            self.arcs[src].append(
                Arc(
                    src,
                    dst,
                    Label.literal(token),
                    self.spans_of(cids),
                    cids[0] if len(cids) == 1 else None,
                    group[0][1] if len(group) == 1 else None,
                    depth,
                )
            )

    def alt_entries(self, constraints: Iterable[int]):
        return [(i, a, alt) for i in constraints for a, alt in enumerate(self.cs[i].alternatives)]

    def expand_base(self, mask: int) -> None:
        src = self.base[mask]
        pending = [i for i in range(len(self.cs)) if not mask >> i & 1]
        entries = self.alt_entries(pending)
        self.add_trie(src, entries, 0, mask, None, None, lambda i: self.after(mask | 1 << i, i, self.n))
        self.arcs[src].append(Arc(src, src, Label.complement(alt[0] for _, _, alt in entries)))
        if self.n:
            for i in pending:
                span = self.cs[i].span
                if span is None:
                    continue
                firsts = {alt[0] for alt in self.cs[i].alternatives}
                dst = self.gadget("pre", mask, i, 1)
                self.arcs[src].append(
                    Arc(src, dst, Label.complement(firsts), (span,), i, relaxation=True)
                )

    def expand_gadget(self, sid: int) -> None:
        state = self.states[sid]
        i, mask = state.constraint, state.satisfied
        span = self.cs[i].span
        if state.role == "pre":
            used = state.budget
            entries = self.alt_entries([i])
            self.add_trie(sid, entries, 0, mask, "pre", i, lambda j: self.after(mask | 1 << j, j, self.n - used))
            if used < self.n:
                firsts = {alt[0] for alt in self.cs[i].alternatives}
                dst = self.gadget("pre", mask, i, used + 1)
                self.arcs[sid].append(Arc(sid, dst, Label.complement(firsts), (span,), i, relaxation=True))
        else:
            base = self.base[mask]
            for arc in self.arcs[base]:
                self.arcs[sid].append(
                    Arc(sid, arc.dst, arc.label, arc.spans, arc.constraint_id, arc.alt_id, arc.position, arc.relaxation)
                )
            dst = self.after(mask, i, state.budget - 1)
            self.arcs[sid].append(Arc(sid, dst, Label.wildcard(), (span,), i, relaxation=True))


def build_acceptor(constraints: Sequence[ConstraintSpec], relaxation: int = 0) -> Acceptor:
    """Compile ``constraints`` into an acceptor.

    ``relaxation`` is the extra-token budget (0, 1 or 2) granted to each
    span-annotated constraint; it may be split between tokens before and
    after the constraint.
    """
    if relaxation not in (0, 1, 2):
        raise ValueError(f"relaxation must be 0, 1 or 2, got {relaxation}")
    constraints = tuple(constraints)
    _validate(constraints)
    return _Builder(constraints, relaxation).build()


def active_arcs(acceptor: Acceptor, state: int, gate: Gate | None = None) -> tuple[Arc, ...]:
    """Arcs usable from ``state`` given an attention gate over spans.

    Without a gate every arc is active.  With a gate, if any span-annotated
    arc is attended only those arcs remain (vocabulary loops are disabled);
    otherwise only span-less arcs remain.  Intermediate states ignore the gate.
    """
    arcs = acceptor.outgoing[state]
    if gate is None or acceptor.states[state].intermediate:
        return arcs
    gated = tuple(a for a in arcs if a.spans and any(gate(s) for s in a.spans))
    if gated:
        return gated
    return tuple(a for a in arcs if not a.spans)


def match_arc(arcs: Sequence[Arc], token: Token) -> Arc | None:
    """First arc in ``arcs`` accepting ``token``; literals take precedence."""
    fallback = None
    for arc in arcs:
        if arc.is_literal:
            if arc.label.token == token:
                return arc
        elif fallback is None and arc.label.matches(token):
            fallback = arc
    return fallback


def step_state(acceptor: Acceptor, state: int, token: Token, gate: Gate | None = None) -> int | None:
    """Follow the arc matching ``token`` from ``state``; ``None`` means reject."""
    if gate is None or acceptor.states[state].intermediate:
        arc = acceptor.literal_arcs(state).get(token)
        if arc is not None:
            return arc.dst
        for arc in acceptor._others[state]:
            if arc.label.matches(token):
                return arc.dst
        return None
    arc = match_arc(active_arcs(acceptor, state, gate), token)
    return None if arc is None else arc.dst


def accepts(
    acceptor: Acceptor,
    tokens: Sequence[Token],
    gates: Gate | Sequence[Gate | None] | None = None,
) -> bool:
    """Membership test.

    ``gates`` is either ``None`` (span gates ignored), a single predicate
    applied at every step, or one predicate (or ``None``) per token.
    """
    state: int | None = acceptor.start
    for t, token in enumerate(tokens):
        if gates is None or callable(gates):
            gate = gates
        else:
            gate = gates[t]
        state = step_state(acceptor, state, token, gate)
        if state is None:
            return False
    return state in acceptor.finals


def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(acceptor: Acceptor) -> str:
    lines = ["digraph acceptor {", "  rankdir=LR;"]
    for s in acceptor.states:
        sat = "{" + ",".join(f"C{i + 1}" for i in sorted(s.satisfied_set())) + "}"
        label = f"s{s.id}\\n{sat}"
        attrs = ["shape=doublecircle" if s.id in acceptor.finals else "shape=circle"]
        if s.id == acceptor.start:
            attrs.append("penwidth=2")
        if s.intermediate:
            attrs.append("style=dashed")
            label += "\\nint"
        if s.role is not None:
            label += f"\\n{s.role}:C{s.constraint + 1}/{s.budget}"
        attrs.append(f'label="{label}"')
        lines.append(f"  {s.id} [{', '.join(attrs)}];")
    for arcs in acceptor.outgoing:
        for a in arcs:
            text = str(a.label)
            if a.spans:
                text += " " + " ".join(str(s) for s in a.spans)
            style = ", style=dotted" if a.relaxation else ""
            lines.append(f"  {a.src} -> {a.dst} [label={_dot_quote(text)}{style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"

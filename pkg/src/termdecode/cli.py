"""Command-line interface: compile, decode, synth, eval, bench.

Exit codes: 0 success, 2 parse error, 3 validation error, 4 decode failure(s).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from termdecode.acceptor import ConstraintSpec, build_acceptor, to_dot
from termdecode.decoder import (
    DecodeConfig,
    DecodeConfigError,
    DecodeError,
    VocabularyError,
    decode,
)
from termdecode.metrics import evaluate, format_speed_table, speed_table
from termdecode.scoring import (
    LexiconModel,
    LexiconModelConfig,
    ReplayExhausted,
    ReplayModel,
)
from termdecode.synth import (
    make_tasks,
    make_world,
    offset_suite,
    starving_suite,
    validate_tasks,
)
from termdecode.tasks import (
    RecordError,
    SentenceTask,
    iter_jsonl,
    read_tasks,
    write_jsonl,
)

logger = logging.getLogger("termdecode")

EXIT_OK, EXIT_PARSE, EXIT_INVALID, EXIT_DECODE = 0, 2, 3, 4


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def cmd_compile(args) -> int:
    records = []
    try:
        for lineno, record in iter_jsonl(args.constraints):
            rid = str(record.get("id", lineno))
            try:
                constraints = [ConstraintSpec.from_json(c) for c in record.get("constraints", [])]
                if "source" in record:
                    for c in constraints:
                        if c.span is not None:
                            c.span.check(len(record["source"]))
                acceptor = build_acceptor(constraints, args.relax_extra)
            except (ValueError, TypeError) as exc:
                return _fail(f"record {rid} (line {lineno}): {exc}", EXIT_INVALID)
            records.append((rid, acceptor))
    except RecordError as exc:
        return _fail(str(exc), EXIT_PARSE)
    dumps = [{"id": rid, **acc.to_json()} for rid, acc in records]
    if args.out:
        write_jsonl(args.out, dumps)
    else:
        for d in dumps:
            print(json.dumps(d, ensure_ascii=False))
    if args.dot == "-":
        for _, acc in records:
            sys.stdout.write(to_dot(acc))
    elif args.dot:
        out = Path(args.dot)
        out.mkdir(parents=True, exist_ok=True)
        for rid, acc in records:
            (out / f"{rid}.dot").write_text(to_dot(acc), encoding="utf-8")
    return EXIT_OK


_CONFIG_KEYS = {
    "mode": "mode",
    "beam": "beam",
    "alpha": "alpha",
    "relax_extra": "relax_extra",
    "secondary_tau": "secondary_tau",
    "span_sum": "span_sum",
    "max_len_ratio": "max_len_ratio",
    "fallback": "fallback",
}


def _decode_config(args) -> DecodeConfig:
    settings: dict = {}
    if args.config:
        settings.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    for key in _CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    unknown = set(settings) - set(_CONFIG_KEYS)
    if unknown:
        raise DecodeConfigError(f"unknown config keys {sorted(unknown)}")
    return DecodeConfig(**settings)


class _Worker:
    """Holds the scorer inside a worker process (or the main process with --jobs 1)."""

    scorer = None
    replay_dir: Path | None = None
    config: DecodeConfig | None = None

    @classmethod
    def setup(cls, lexicon: str | None, replay: str | None, config: DecodeConfig) -> None:
        cls.scorer = LexiconModel(LexiconModelConfig.load(lexicon)) if lexicon else None
        cls.replay_dir = Path(replay) if replay else None
        cls.config = config

    @classmethod
    def run(cls, task: SentenceTask) -> tuple[dict, dict]:
        started = time.perf_counter()
        try:
            scorer = cls.scorer
            if cls.replay_dir is not None:
                scorer = ReplayModel.load(cls.replay_dir / f"{task.id}.jsonl")
            result = decode(scorer, task.source, build_acceptor(task.constraints), cls.config)
        except DecodeConfigError as exc:
            msg = "v2 requires spans" if "requires spans" in str(exc) else str(exc)
            return {"id": task.id, "error": msg}, {"id": task.id, "error": msg}
        except (DecodeError, VocabularyError, ReplayExhausted, ValueError, OSError) as exc:
            return {"id": task.id, "error": str(exc)}, {"id": task.id, "error": str(exc)}
        wall = int((time.perf_counter() - started) * 1e6)
        stats = result.stats.to_json()
        record = {"id": task.id, "tokens": list(result.tokens), "score": round(result.score, 6), "stats": stats}
        return record, {"id": task.id, **stats, "wall_micros": wall}


def _init_worker(lexicon, replay, config) -> None:
    _Worker.setup(lexicon, replay, config)


def _run_tasks(tasks, lexicon, replay, config, jobs):
    if jobs <= 1:
        _Worker.setup(lexicon, replay, config)
        return [_Worker.run(t) for t in tasks]
    with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(lexicon, replay, config)) as pool:
        return list(pool.map(_Worker.run, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))


def cmd_decode(args) -> int:
    if bool(args.lexicon) == bool(args.replay):
        return _fail("give exactly one of --lexicon or --replay", EXIT_INVALID)
    try:
        config = _decode_config(args)
    except (DecodeConfigError, TypeError, ValueError) as exc:
        return _fail(str(exc), EXIT_INVALID)
    try:
        tasks = read_tasks(args.tasks)
    except RecordError as exc:
        return _fail(str(exc), EXIT_PARSE if exc.parse else EXIT_INVALID)
    results = _run_tasks(tasks, args.lexicon, args.replay, config, args.jobs)
    write_jsonl(args.out, [r for r, _ in results]) if args.out else [print(json.dumps(r)) for r, _ in results]
    if args.stats_out:
        write_jsonl(args.stats_out, [s for _, s in results])
    failures = [r for r, _ in results if "error" in r]
    for r in failures:
        print(f"error: record {r['id']}: {r['error']}", file=sys.stderr)
    return EXIT_DECODE if failures else EXIT_OK


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "lexicon":
        world = make_world(args.seed, vocab=args.vocab, terms=args.terms)
        tasks = make_tasks(world, args.seed + 1, args.size, min(args.c_min, args.c_max), args.c_max)
        problems = validate_tasks(tasks)
        if problems:
            return _fail("; ".join(problems[:5]), EXIT_INVALID)
        write_jsonl(out / "tasks.jsonl", [t.to_json() for t in tasks])
        (out / "lexicon.json").write_text(json.dumps(world.lexicon.to_json(), indent=1) + "\n", encoding="utf-8")
        with open(out / "dictionary.tsv", "w", encoding="utf-8") as fh:
            for entry in world.dictionary:
                fh.write(entry.to_line() + "\n")
        return EXIT_OK
    suite = offset_suite(args.seed, args.size) if args.kind == "offset" else starving_suite(args.seed, args.size)
    write_jsonl(out / "tasks.jsonl", [r.task.to_json() for r in suite])
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for r in suite:
        write_jsonl(traces / f"{r.task.id}.jsonl", [s.to_json() for s in r.trace])
    return EXIT_OK


def _read_token_lines(path: str, field: str) -> list[list[str]]:
    """Plain text (one sentence per line) or JSONL records carrying ``field``."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.lstrip().startswith("{"):
                record = json.loads(line)
                rows.append(list(record.get(field) or []))
            else:
                rows.append(line.split())
    return rows


def cmd_eval(args) -> int:
    try:
        hyps = _read_token_lines(args.hyp, "tokens")
        refs = _read_token_lines(args.ref, "reference")
    except json.JSONDecodeError as exc:
        return _fail(f"malformed JSON: {exc}", EXIT_PARSE)
    if len(hyps) != len(refs):
        return _fail(f"{len(hyps)} hypotheses but {len(refs)} references", EXIT_INVALID)
    stop = set()
    if args.stoplist:
        stop = set(Path(args.stoplist).read_text(encoding="utf-8").split())
    acceptors = None
    if args.tasks:
        acceptors = [build_acceptor(t.constraints) for t in read_tasks(args.tasks)]
    report = evaluate(hyps, refs, stop, acceptors)
    text = json.dumps(report.to_json(), indent=1)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    summary = f"BLEU {report.bleu:.2f}  lr {report.length_ratio:.3f}  rep {report.rep}"
    if report.satisfaction is not None:
        summary += f"  satisfied {report.satisfaction:.3f}"
    print(summary)
    return EXIT_OK


def run_bench(tasks, scorer, modes, cs, base: DecodeConfig) -> list[dict]:
    """Decode every task under each (mode, c) cell; tasks with fewer than c constraints are skipped."""
    runs = []
    for c in cs:
        cell = [t.with_constraints(t.constraints[:c]) for t in tasks if len(t.constraints) >= c]
        for mode in modes:
            config = replace(base, mode=mode)
            for t in cell:
                started = time.perf_counter()
                result = decode(scorer, t.source, build_acceptor(t.constraints), config)
                runs.append(
                    {
                        "id": t.id,
                        "mode": mode,
                        "c": c,
                        "expansions": result.stats.expansions,
                        "wall": time.perf_counter() - started,
                        "fallback_used": result.stats.fallback_used,
                    }
                )
    return runs


def cmd_bench(args) -> int:
    try:
        tasks = read_tasks(args.tasks)
        config = _decode_config(args)
    except RecordError as exc:
        return _fail(str(exc), EXIT_PARSE if exc.parse else EXIT_INVALID)
    except (DecodeConfigError, ValueError) as exc:
        return _fail(str(exc), EXIT_INVALID)
    scorer = LexiconModel(LexiconModelConfig.load(args.lexicon))
    modes = args.modes.split(",")
    cs = [int(c) for c in args.cs.split(",")]
    try:
        runs = run_bench(tasks, scorer, modes, cs, config)
    except DecodeError as exc:
        return _fail(str(exc), EXIT_DECODE)
    rows = speed_table(runs)
    print(format_speed_table(rows))
    if args.out:
        Path(args.out).write_text(json.dumps([r.__dict__ for r in rows], indent=1) + "\n", encoding="utf-8")
    return EXIT_OK


def _add_decode_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with decode settings (flags override it)")
    p.add_argument("--mode", choices=["plain", "v1", "v2"])
    p.add_argument("--beam", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--relax-extra", dest="relax_extra", type=int, choices=[0, 1, 2])
    p.add_argument("--secondary-tau", dest="secondary_tau", type=float)
    p.add_argument("--span-sum", dest="span_sum", action="store_const", const=True)
    p.add_argument("--max-len-ratio", dest="max_len_ratio", type=float)
    p.add_argument("--no-fallback", dest="fallback", action="store_const", const=False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="termdecode", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile constraint records into acceptors")
    p.add_argument("constraints")
    p.add_argument("--out", help="acceptor JSONL dump (default: stdout)")
    p.add_argument("--dot", help="directory for <id>.dot files, or - for stdout")
    p.add_argument("--relax-extra", dest="relax_extra", type=int, default=0, choices=[0, 1, 2])
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("decode", help="decode a task file")
    p.add_argument("tasks")
    p.add_argument("--lexicon", help="lexicon model JSON")
    p.add_argument("--replay", help="directory of <id>.jsonl replay traces")
    p.add_argument("--out", help="output JSONL (default: stdout)")
    p.add_argument("--stats-out", dest="stats_out")
    p.add_argument("--jobs", type=int, default=1)
    _add_decode_flags(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("synth", help="generate a synthetic suite")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--size", type=int, default=200)
    p.add_argument("--vocab", type=int, default=120)
    p.add_argument("--terms", type=int, default=40)
    p.add_argument("--c-min", dest="c_min", type=int, default=1)
    p.add_argument("--c-max", dest="c_max", type=int, default=4)
    p.add_argument("--kind", choices=["lexicon", "starving", "offset"], default="lexicon")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score hypotheses against references")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--stoplist")
    p.add_argument("--tasks", help="task file for constraint satisfaction")
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="compare decoding cost across modes and constraint counts")
    p.add_argument("tasks")
    p.add_argument("--lexicon", required=True)
    p.add_argument("--modes", default="plain,v1,v2")
    p.add_argument("--cs", default="2,3,4")
    p.add_argument("--out")
    _add_decode_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

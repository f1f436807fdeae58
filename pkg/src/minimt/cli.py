"""Command-line entry points.

Flag precedence is CLI > config file > built-in defaults. The config file
holds UTF-8 ``key = value`` lines whose keys mirror the Translator
parameters (training, search and model-size tunables alike); unknown keys
are hard errors. Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import checkpoint, decoding, inmt, metrics
from .corpus import ParallelCorpus, encode, tokenize
from .errors import ConfigError, MinimtError
from .estimator import Translator


def parse_config_file(path: str | Path) -> dict:
    """Read ``key = value`` lines; keys must be Translator parameters."""
    defaults = Translator().get_params()
    out: dict = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("%s:%d: expected 'key = value', got %r" % (path, lineno, raw))
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in defaults:
            raise ConfigError("%s:%d: unknown configuration key %r" % (path, lineno, key))
        out[key] = _coerce(value, defaults[key], key)
    return out


def _coerce(text: str, default, key: str):
    if isinstance(default, bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError("key %r expects a boolean, got %r" % (key, text))
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def _resolve_params(args) -> dict:
    """defaults <- config file <- explicit CLI flags."""
    params = Translator().get_params()
    if getattr(args, "config", None):
        params.update(parse_config_file(args.config))
    for key in params:
        flag = getattr(args, "opt_" + key, None)
        if flag is not None:
            params[key] = flag
    return params


def _add_param_flags(parser: argparse.ArgumentParser) -> None:
    for key, default in Translator().get_params().items():
        kind = type(default)
        parser.add_argument(
            "--" + key.replace("_", "-"),
            dest="opt_" + key,
            type=(lambda s: _coerce(s, False, "flag")) if kind is bool else kind,
            default=None,
            help="override %s (default %r)" % (key, default),
            metavar="V",
        )


def _read_lines(path: str) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def _load_model(path: str) -> Translator:
    return Translator.load(path)


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    params = _resolve_params(args)
    translator = Translator(**params)
    src = _read_lines(args.src)
    trg = _read_lines(args.trg)
    dev_src = _read_lines(args.dev_src) if args.dev_src else None
    dev_trg = _read_lines(args.dev_trg) if args.dev_trg else None
    translator.fit(src, trg, dev_src, dev_trg)
    out = translator.save(args.out)
    translator.log_.write_jsonl(out / "train_log.jsonl")
    best = translator.log_.best_bleu
    print("trained %d updates; best dev BLEU %.2f; model saved to %s" % (len(translator.log_.losses), best, out))
    return 0


def cmd_translate(args) -> int:
    translators = [_load_model(m) for m in args.model]
    head = translators[0]
    models = [t.params_ for t in translators]
    cfg = head.beam_config(getattr(args, "opt_beam_size", None))
    nbest = args.nbest
    if nbest > cfg.beam_size:
        raise ConfigError("nbest %d exceeds beam size %d" % (nbest, cfg.beam_size))
    lines_out: list[str] = []
    for i, line in enumerate(_read_lines(args.src)):
        hyps = decoding.beam_search(models, head.encode_source_text(line), cfg, head.attention, nbest=nbest)
        texts = []
        for h in hyps:
            toks = decoding.replace_unknowns(h, tokenize(line), head.trg_vocab_, head.lexicon_)
            if head.trg_bpe_ is not None:
                toks = head.trg_bpe_.join_pieces(toks)
            texts.append(" ".join(toks))
        if nbest == 1:
            lines_out.append(texts[0])
        else:
            lines_out.extend(decoding.format_nbest(hyps, texts, index=i))
    text = "\n".join(lines_out) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_score(args) -> int:
    mt = _load_model(args.model)
    out_lines = []
    for src, trg in zip(_read_lines(args.src), _read_lines(args.trg)):
        lp = decoding.score_sentence(
            mt.params_,
            mt.encode_source_text(src),
            encode(trg, mt.trg_vocab_, mt.trg_bpe_),
            mt.attention,
        )
        out_lines.append("%.6f" % lp)
    text = "\n".join(out_lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_average(args) -> int:
    loaded = []
    for path in args.models:
        p = Path(path)
        loaded.append(checkpoint.load_params(p / "model.ckpt" if p.is_dir() else p))
    avg = decoding.average_checkpoints(loaded)
    out = Path(args.out)
    if out.suffix == ".ckpt":
        checkpoint.save_params(avg, out)
    else:
        first = Path(args.models[0])
        if not first.is_dir():
            raise ConfigError("--out is a directory; pass model directories as inputs")
        out.mkdir(parents=True, exist_ok=True)
        for name in ("src_vocab.json", "trg_vocab.json", "meta.json", "src.bpe", "trg.bpe", "lexicon.json"):
            src_file = first / name
            if src_file.exists():
                (out / name).write_bytes(src_file.read_bytes())
        checkpoint.save_params(avg, out / "model.ckpt")
    print("averaged %d checkpoints -> %s" % (len(loaded), out))
    return 0


def cmd_build_dict(args) -> int:
    corpus = ParallelCorpus(list(zip(_read_lines(args.src), _read_lines(args.trg))))
    stat = decoding.build_stat_dict(corpus)
    stat.save(args.out)
    print("wrote %d dictionary entries to %s" % (len(stat.entries), args.out))
    return 0


def cmd_evaluate(args) -> int:
    hyps = _read_lines(args.hyp)
    refs = _read_lines(args.ref)
    values = {"bleu": metrics.bleu(hyps, refs), "ter": metrics.corpus_ter(hyps, refs)}
    for k, v in values.items():
        print("%s = %.2f" % (k.upper(), v))
    if args.out:
        metrics.write_report(args.out, values)
    return 0


def cmd_simulate(args) -> int:
    mt = _load_model(args.model)
    sources = _read_lines(args.src)
    refs = _read_lines(args.ref)
    cfg = mt.beam_config(getattr(args, "opt_beam_size", None))
    result = inmt.simulate_corpus(mt, sources, refs, cfg, learn=args.learn)
    baseline = inmt.type_everything_baseline(refs)
    report = {
        "sentences": result["sentences"],
        "ksmr": result["ksmr"],
        "baseline_ksmr": baseline["ksmr"],
    }
    print("KSMR = %.2f" % result["ksmr"])
    print("BASELINE_KSMR = %.2f" % baseline["ksmr"])
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_interactive(args) -> int:  # pragma: no cover - terminal loop
    mt = _load_model(args.model)
    print("interactive translation; empty line quits.")
    for raw in sys.stdin:
        source = raw.strip()
        if not source:
            break
        state = inmt.start_session(mt, source)
        print("MT:", state.hypothesis)
        print("commands: '<pos> <char>' correct, '<pos> $' end-of-text, 'a' accept, 'l' accept+learn")
        for command in sys.stdin:
            command = command.strip()
            if command in ("a", "l"):
                final = inmt.accept_session(state, mt, learn=command == "l")
                print("final:", final)
                print("effort:", state.effort())
                break
            try:
                pos_text, char = command.split(" ", 1)
                fb = inmt.Feedback(int(pos_text), "" if char == "$" else char, finish=char == "$")
                inmt.apply_feedback(state, fb, mt)
                print("MT:", state.hypothesis)
            except (ValueError, MinimtError) as exc:
                print("?", exc)
        print("next source:")
    return 0


def resolve_serve_options(model_flag, host_flag, port_flag, env=None) -> tuple[str | None, str, int]:
    """Flag > environment (INMT_ADDR, INMT_CHECKPOINT) > default."""
    env = os.environ if env is None else env
    model = model_flag or env.get("INMT_CHECKPOINT")
    host, port = host_flag, port_flag
    addr = env.get("INMT_ADDR")
    if addr and host is None and port is None:
        host, _, port_text = addr.partition(":")
        port = int(port_text) if port_text else None
    return model, host or "127.0.0.1", int(port or 8000)


def cmd_serve(args) -> int:  # pragma: no cover - network entry
    from .service import ServerConfig, create_app, serve

    model_path, host, port = resolve_serve_options(args.model, args.host, args.port)
    translator = _load_model(model_path) if model_path else None
    cfg = ServerConfig(
        host=host,
        port=port,
        static_dir=args.static,
        max_sessions=args.max_sessions,
        session_timeout=args.session_timeout,
    )
    app = create_app(translator, cfg)
    serve(app, cfg.host, cfg.port)
    return 0


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors -> exit code 1
        self.print_usage(sys.stderr)
        sys.stderr.write("error: %s\n" % message)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="minimt", description="miniature interactive NMT engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[], help="train a model")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--src", required=True)
    p.add_argument("--trg", required=True)
    p.add_argument("--dev-src")
    p.add_argument("--dev-trg")
    p.add_argument("--out", required=True, help="output model directory")
    _add_param_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="translate a file (optionally an ensemble)")
    p.add_argument("--model", nargs="+", required=True, help="model directories")
    p.add_argument("--src", required=True)
    p.add_argument("--out")
    p.add_argument("--nbest", type=int, default=1)
    p.add_argument("--beam-size", dest="opt_beam_size", type=int, default=None)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("score", help="log-probability of given translations")
    p.add_argument("--model", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--trg", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("average", help="average model checkpoints")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_average)

    p = sub.add_parser("build-dict", help="EM lexical dictionary for unk replacement")
    p.add_argument("--src", required=True)
    p.add_argument("--trg", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_dict)

    p = sub.add_parser("evaluate", help="BLEU/TER of a hypothesis file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="simulated interactive sessions, KSMR report")
    p.add_argument("--model", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--learn", action="store_true", help="online update after each accept")
    p.add_argument("--out")
    p.add_argument("--beam-size", dest="opt_beam_size", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("interactive", help="terminal interactive translation")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_interactive)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--model", help="model directory (or INMT_CHECKPOINT)")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--static", help="directory with the web frontend bundle")
    p.add_argument("--max-sessions", type=int, default=64)
    p.add_argument("--session-timeout", type=float, default=1800.0)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 1
    except (MinimtError, OSError, ValueError) as exc:
        sys.stderr.write("error: %s\n" % exc)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

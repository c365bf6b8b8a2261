"""Command-line workflow: synth-data, prepare, lda, train, generate,
evaluate, serve.

Every command accepts --config (JSON run configuration; the
LYRICGEN_CONFIG environment variable supplies the path when the flag is
absent) and explicit flags override config values.  All commands are
deterministic per seed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import urllib.error
import urllib.request
from pathlib import Path

from .config import LdaSettings, ModelDims, RunConfig, resolve_config
from .corpus import (
    save_corpus, save_word_vectors, synth_corpus, synth_word_vectors,
)
from .pipeline import (
    generate_lines, load_bundle, load_prep, load_theme, parse_melody_file,
    parse_melody_text, prepare_corpus, run_evaluate, run_lda, run_training,
)
from .training import TrainConfig

logger = logging.getLogger(__name__)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run configuration JSON "
                        "(default: $LYRICGEN_CONFIG)")
    parser.add_argument("--seed", type=int, help="override the config seed")


def _common(args) -> tuple[RunConfig, int]:
    cfg = resolve_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    return cfg, seed


def _require(value, flag: str, what: str):
    if value is None:
        raise ValueError(f"{flag} is required ({what})")
    return value


# ---------------------------------------------------------------------------
# commands

def cmd_synth_data(args) -> int:
    _, seed = _common(args)
    lines = synth_corpus(seed=seed, n_songs=args.songs,
                         lines_per_song=args.lines_per_song)
    save_corpus(lines, args.out)
    print(f"wrote {len(lines)} lines ({args.songs} songs) to {args.out}")
    if args.vectors:
        table = synth_word_vectors(seed=seed, dim=args.vector_dim)
        save_word_vectors(table, args.vectors)
        print(f"wrote {len(table)} word vectors (dim {args.vector_dim}) "
              f"to {args.vectors}")
    return 0


def cmd_prepare(args) -> int:
    cfg, seed = _common(args)
    corpus = _require(args.corpus or cfg.corpus, "--corpus", "corpus JSONL path")
    out_dir = _require(args.out_dir or cfg.prep_dir, "--out-dir",
                       "prepared-corpus directory")
    prep = prepare_corpus(corpus, out_dir, seed=seed, t_max=args.t_max)
    counts = prep.manifest["counts"]
    print(f"prepared {sum(counts.values())} lines "
          f"(train {counts['train']} / valid {counts['valid']} / "
          f"test {counts['test']}), t_max {prep.t_max}, "
          f"{prep.vocab.n_syllables} syllables, {prep.vocab.n_notes} notes "
          f"-> {out_dir}")
    return 0


def cmd_lda(args) -> int:
    cfg, seed = _common(args)
    prep = load_prep(_require(args.prep or cfg.prep_dir, "--prep",
                              "prepared-corpus directory"))
    out_dir = _require(args.out_dir or cfg.theme_dir, "--out-dir",
                       "theme model directory")
    settings = LdaSettings(
        n_themes=args.themes if args.themes is not None else cfg.lda.n_themes,
        iterations=args.iterations if args.iterations is not None
        else cfg.lda.iterations)
    vectors = args.vectors or cfg.vectors
    art = run_lda(prep, out_dir, settings, seed=seed,
                  vectors_path=vectors, select=args.select)
    for t, (label, words) in enumerate(zip(art.model.labels,
                                           art.model.top_words(5))):
        print(f"theme {t} [{label}]: {' '.join(words)}")
    if args.select:
        sel = json.loads((Path(out_dir) / "selection.json").read_text())
        print("candidate topic counts (held-out perplexity, mean coherence):")
        for rec in sel["candidates"]:
            print(f"  N={rec['n_themes']}: perplexity {rec['perplexity']:.2f}, "
                  f"coherence {rec['mean_coherence']:.3f}")
    return 0


def _train_config(args, cfg: RunConfig, seed: int) -> TrainConfig:
    base = cfg.train.to_json()
    overrides = {
        "mle_epochs": args.mle_epochs, "disc_epochs": args.disc_epochs,
        "adv_rounds": args.adv_rounds,
        "gen_batches_per_round": args.gen_batches,
        "batch_size": args.batch_size, "gen_lr": args.gen_lr,
        "disc_lr": args.disc_lr, "rollouts": args.rollouts,
        "bleu_eval_lines": args.bleu_lines,
    }
    base.update({k: v for k, v in overrides.items() if v is not None})
    if args.reward_baseline:
        base["reward_baseline"] = True
    base["seed"] = seed
    return TrainConfig.from_json(base)


def cmd_train(args) -> int:
    cfg, seed = _common(args)
    prep = load_prep(_require(args.prep or cfg.prep_dir, "--prep",
                              "prepared-corpus directory"))
    out_dir = _require(args.out_dir or cfg.checkpoint_dir, "--out-dir",
                       "checkpoint directory")
    mode = args.mode or cfg.mode
    theme_dir = args.theme_model or cfg.theme_dir
    theme = load_theme(theme_dir) if mode == "tmc" and theme_dir else None
    dims = ModelDims(
        embed_dim=args.embed_dim if args.embed_dim is not None
        else cfg.model.embed_dim,
        hidden_dim=args.hidden_dim if args.hidden_dim is not None
        else cfg.model.hidden_dim,
        theme_dim=cfg.model.theme_dim)
    tconfig = _train_config(args, cfg, seed)
    summary = run_training(prep, mode, args.phase, out_dir, tconfig, dims,
                           theme=theme)
    if "mle_final_loss" in summary:
        print(f"mle: loss {summary['mle_first_loss']:.3f} -> "
              f"{summary['mle_final_loss']:.3f}; "
              f"disc pretrain F1 {summary['disc_final_f1']:.3f}")
    if "adv_rounds_run" in summary:
        print(f"adv: {summary['adv_rounds_run']} rounds"
              f"{' (resumed)' if summary['resumed'] else ''}; "
              f"best round {summary['best_round']} "
              f"(BLEU2 {summary['best_bleu2']:.4f})")
    print(f"checkpoints in {out_dir}")
    return 0


def _format_line(entry: dict) -> str:
    text = " ".join(entry["syllables"])
    if entry.get("aligned") is None:
        return text
    tag = "aligned" if entry["aligned"] else "off"
    return f"{text}  [{tag} {len(entry['syllables'])}/{entry['n_notes']}]"


def _generate_via_server(server: str, melodies, theme_id, seed, count) -> list:
    if melodies is None or len(melodies) != 1:
        raise ValueError("--server mode takes exactly one melody")
    body = json.dumps({
        "notes": [[n.pitch, n.duration] for n in melodies[0]],
        "theme": theme_id, "seed": seed, "count": count,
    }).encode("utf-8")
    req = urllib.request.Request(
        server.rstrip("/") + "/generate", data=body,
        headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            payload = json.load(resp)
    except urllib.error.HTTPError as exc:
        detail = exc.read().decode("utf-8", "replace")
        raise RuntimeError(f"server returned {exc.code}: {detail}") from exc
    except urllib.error.URLError as exc:
        raise RuntimeError(f"cannot reach {server}: {exc.reason}") from exc
    n_notes = len(melodies[0])
    return [{"syllables": line["syllables"], "aligned": line["aligned"],
             "n_notes": n_notes} for line in payload["lines"]]


def cmd_generate(args) -> int:
    cfg, seed = _common(args)
    if args.melody and args.melody_file:
        raise ValueError("--melody and --melody-file are exclusive")
    melodies = None
    if args.melody:
        melodies = [parse_melody_text(args.melody)]
    elif args.melody_file:
        melodies = parse_melody_file(args.melody_file)

    if args.server:
        lines = _generate_via_server(args.server, melodies, args.theme,
                                     seed, args.count)
        model_name = "server"
    else:
        ckpt = _require(args.checkpoint, "--checkpoint", "generator checkpoint")
        vocab_path = args.vocab
        if vocab_path is None:
            prep_dir = args.prep or cfg.prep_dir
            vocab_path = _require(
                prep_dir and str(Path(prep_dir) / "vocab.json"),
                "--prep", "directory holding vocab.json")
        bundle = load_bundle(ckpt, vocab_path,
                             theme_dir=args.theme_model or cfg.theme_dir)
        lines = generate_lines(bundle, melodies, args.theme, seed, args.count)
        model_name = bundle.mode

    if args.json:
        doc = json.dumps({"model": model_name, "seed": seed,
                          "lines": [{"syllables": e["syllables"],
                                     "aligned": e["aligned"]}
                                    for e in lines]},
                         indent=2, sort_keys=True)
        out_text = doc + "\n"
    else:
        out_text = "".join(_format_line(e) + "\n" for e in lines)
    if args.out:
        Path(args.out).write_text(out_text, encoding="utf-8")
    else:
        sys.stdout.write(out_text)
    return 0


def cmd_evaluate(args) -> int:
    cfg, seed = _common(args)
    prep = load_prep(_require(args.prep or cfg.prep_dir, "--prep",
                              "prepared-corpus directory"))
    out_dir = _require(args.out_dir or cfg.report_dir, "--out-dir",
                       "report directory")
    checkpoints = {}
    for spec_str in args.model or []:
        name, sep, path = spec_str.partition("=")
        if not sep or not name or not path:
            raise ValueError(f"--model expects name=path, got {spec_str!r}")
        checkpoints[name] = Path(path)
    if args.theme_model:
        theme = load_theme(args.theme_model)
    elif cfg.theme_dir and Path(cfg.theme_dir).exists():
        theme = load_theme(cfg.theme_dir)
    else:
        theme = None
    run_evaluate(prep, checkpoints, out_dir, seed=seed, theme=theme,
                 pool_cap=args.pool_cap)
    sys.stdout.write((Path(out_dir) / "report.txt").read_text(encoding="utf-8"))
    print(f"report written to {out_dir}")
    return 0


def cmd_serve(args) -> int:
    cfg, seed = _common(args)
    from .service import create_app  # heavy import, keep it lazy
    import uvicorn

    ckpt = _require(args.checkpoint or
                    (cfg.checkpoint_dir and
                     str(Path(cfg.checkpoint_dir) / "best_gen.ckpt")),
                    "--checkpoint", "generator checkpoint to serve")
    vocab_path = args.vocab
    if vocab_path is None:
        prep_dir = args.prep or cfg.prep_dir
        vocab_path = _require(prep_dir and str(Path(prep_dir) / "vocab.json"),
                              "--prep", "directory holding vocab.json")
    bundle = load_bundle(ckpt, vocab_path,
                         theme_dir=args.theme_model or cfg.theme_dir)
    app = create_app(bundle, checkpoint_name=str(ckpt),
                     frontend_dir=args.frontend)
    port = args.port if args.port is not None else cfg.port
    uvicorn.run(app, host=args.host, port=port, log_level="info")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lyricgen",
        description="Melody- and theme-conditioned lyrics generation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="write the synthetic corpus")
    p.add_argument("--out", required=True, help="corpus JSONL to write")
    p.add_argument("--songs", type=int, default=200)
    p.add_argument("--lines-per-song", type=int, default=4)
    p.add_argument("--vectors", help="also write synthetic word vectors here")
    p.add_argument("--vector-dim", type=int, default=16)
    _add_common(p)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("prepare", help="validate, split, and encode a corpus")
    p.add_argument("--corpus", help="corpus JSONL")
    p.add_argument("--out-dir", help="output directory")
    p.add_argument("--t-max", type=int, help="maximum encoded row length")
    _add_common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("lda", help="fit the theme model")
    p.add_argument("--prep", help="prepared-corpus directory")
    p.add_argument("--out-dir", help="theme model directory")
    p.add_argument("--themes", type=int, help="topic count (default 5)")
    p.add_argument("--iterations", type=int, help="Gibbs iterations")
    p.add_argument("--vectors", help="word-vector text file for embeddings")
    p.add_argument("--select", action="store_true",
                   help="also report perplexity/coherence for 2..8 topics")
    _add_common(p)
    p.set_defaults(func=cmd_lda)

    p = sub.add_parser("train", help="train a generator (MLE and/or adversarial)")
    p.add_argument("--prep", help="prepared-corpus directory")
    p.add_argument("--out-dir", help="checkpoint directory")
    p.add_argument("--mode", choices=["none", "mc", "tmc"],
                   help="conditioning mode")
    p.add_argument("--phase", choices=["mle", "adv", "all"], default="all")
    p.add_argument("--theme-model", help="theme model directory (tmc)")
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--mle-epochs", type=int)
    p.add_argument("--disc-epochs", type=int)
    p.add_argument("--adv-rounds", type=int)
    p.add_argument("--gen-batches", type=int,
                   help="generator mini-batches per adversarial round")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--gen-lr", type=float)
    p.add_argument("--disc-lr", type=float)
    p.add_argument("--rollouts", type=int)
    p.add_argument("--bleu-lines", type=int,
                   help="validation lines sampled for per-round BLEU2")
    p.add_argument("--reward-baseline", action="store_true",
                   help="subtract a running-mean reward baseline")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="sample lyric lines")
    p.add_argument("--checkpoint", help="generator checkpoint")
    p.add_argument("--prep", help="prepared-corpus directory (for vocab.json)")
    p.add_argument("--vocab", help="vocabulary JSON (overrides --prep)")
    p.add_argument("--theme-model", help="theme model directory")
    p.add_argument("--melody", help='inline melody, e.g. "60:4 62:4 64:8"')
    p.add_argument("--melody-file",
                   help="melodies from a file (corpus JSONL or pitch:duration lines)")
    p.add_argument("--theme", type=int, help="theme id (-1 = unthemed)")
    p.add_argument("--count", type=int, default=1, help="lines per melody")
    p.add_argument("--json", action="store_true", help="emit JSON")
    p.add_argument("--out", help="write output to a file instead of stdout")
    p.add_argument("--server", help="send the request to a running service "
                   "(URL) instead of loading a checkpoint")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate",
                       help="score baselines and checkpoints; write reports")
    p.add_argument("--prep", help="prepared-corpus directory")
    p.add_argument("--out-dir", help="report directory")
    p.add_argument("--model", action="append", metavar="NAME=CKPT",
                   help="checkpoint to score (repeatable)")
    p.add_argument("--theme-model", help="theme model directory")
    p.add_argument("--pool-cap", type=int, default=5000,
                   help="max validation lines in the BLEU reference pool")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="run the HTTP generation service")
    p.add_argument("--checkpoint", help="generator checkpoint to serve")
    p.add_argument("--prep", help="prepared-corpus directory (for vocab.json)")
    p.add_argument("--vocab", help="vocabulary JSON (overrides --prep)")
    p.add_argument("--theme-model", help="theme model directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int)
    p.add_argument("--frontend", help="static frontend directory to mount at /")
    _add_common(p)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

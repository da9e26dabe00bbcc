"""Command-line pipeline: synth -> tokenize -> train -> sample -> eval -> split.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy
import torch

from . import __version__
from .autoencoder import (detokenize, load_autoencoder, prepare, tokenize,
                          train_autoencoder)
from .config import ConfigError, PipelineConfig, format_config, load_config
from .generator import (GeneratorModel, complete, load_generator, sample, save_generator,
                        train_generator)
from .metrics import component_count, evaluate, rows_to_csv, structural_validity
from .nn.checkpoint import CheckpointError, save_model
from .nn.training import TrainingDiverged
from .quantizer import InvalidCode, TOKEN_MAGIC, TokenFile, read_tokens, write_tokens
from .synthesis import SynthesisFailure, augment_dataset, build_dataset, read_manifest
from .wireframe import (InvalidWireframe, atomic_write_text, read_wireframe,
                        split_components, write_wireframe)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3
TOKEN_INDEX = "tokens.json"


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def versions() -> dict:
    return {"wirehouse": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
            "torch": torch.__version__.split("+")[0]}


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_run_record(path, command: str, cfg: PipelineConfig, seed: int,
                     inputs: dict, params: dict | None = None) -> None:
    record = {
        "command": command,
        "config_hash": cfg.digest(),
        "seed": seed,
        "params": params or {},
        "inputs": {k: file_digest(v) for k, v in sorted(inputs.items())},
        "versions": versions(),
    }
    atomic_write_text(path, json.dumps(record, indent=2, sort_keys=True) + "\n")


def run_record_path(out: Path) -> Path:
    """Directory outputs get ``run.json``; file outputs get ``<file>.run.json``."""
    return out / "run.json" if out.is_dir() else out.with_name(out.name + ".run.json")


def _config(args) -> PipelineConfig:
    return load_config(args.config, args.preset)


def _require(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{p} does not exist")
    return p


def _manifest_file(path) -> Path:
    p = _require(path)
    return p / "manifest.json" if p.is_dir() else p


def _log(quiet: bool):
    def log(row):
        if not quiet:
            print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                           for k, v in row.items()), flush=True)
    return log


# --- subcommands ---------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = _config(args)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.max_segments is not None:
        changes["max_segments"] = args.max_segments
    cfg = dataclasses.replace(cfg, synth=dataclasses.replace(cfg.synth, **changes))
    out = Path(args.out)
    manifest = build_dataset(cfg.synth, args.count, out)
    atomic_write_text(out / "config.ini", format_config(cfg))
    write_run_record(out / "run.json", "synth", cfg, cfg.synth.seed, {},
                     {"count": args.count})
    n_test = len(manifest.split("test"))
    print(f"wrote {len(manifest.entries)} houses ({n_test} test) to {out}")
    return EXIT_OK


def cmd_augment(args) -> int:
    cfg = _config(args)
    src = _manifest_file(args.dataset)
    manifest = augment_dataset(read_manifest(src), args.out, args.copies, args.seed or 0)
    write_run_record(Path(args.out) / "run.json", "augment", cfg, args.seed or 0,
                     {"manifest": src}, {"copies": args.copies})
    print(f"wrote {len(manifest.entries)} items to {args.out}")
    return EXIT_OK


def cmd_train_ae(args) -> int:
    cfg = _config(args)
    torch.set_num_threads(1)
    src = _manifest_file(args.dataset)
    manifest = read_manifest(src)
    houses = [prepare(w, cfg.ae.sigma) for w in manifest.load_split(args.split)]
    if not houses:
        raise ValueError(f"split {args.split!r} of {src} is empty")
    model, history = train_autoencoder(houses, cfg.ae, cfg.ae_train, log=_log(args.quiet))
    out = Path(args.out)
    save_model(out, model, "autoencoder")
    atomic_write_text(out.with_name(out.name + ".metrics.csv"), rows_to_csv(history.epochs))
    write_run_record(run_record_path(out), "train-ae", cfg, cfg.ae.seed, {"manifest": src},
                     {"split": args.split})
    return EXIT_OK


def cmd_tokenize(args) -> int:
    cfg = _config(args)
    torch.set_num_threads(1)
    src = _manifest_file(args.dataset)
    manifest = read_manifest(src)
    model = load_autoencoder(_require(args.ckpt))
    out = Path(args.out)
    index = []
    for e in manifest.entries:
        if args.split != "all" and e.split != args.split:
            continue
        tf = tokenize(manifest.load(e), model)
        rel = f"{e.id}.tok"
        write_tokens(out / rel, tf)
        index.append({"id": e.id, "file": rel, "split": e.split,
                      "segment_count": tf.segment_count, "length": len(tf.tokens)})
    atomic_write_text(out / TOKEN_INDEX, json.dumps(
        {"version": 1, "code_dim": model.cfg.code_dim, "depth": model.cfg.depth,
         "sequences": index}, indent=1) + "\n")
    write_run_record(out / "run.json", "tokenize", cfg, 0,
                     {"manifest": src, "autoencoder": args.ckpt}, {"split": args.split})
    print(f"wrote {len(index)} token files to {out}")
    return EXIT_OK


def read_token_dir(path, split: str = "train") -> list:
    root = _require(path)
    index = json.loads((root / TOKEN_INDEX).read_text())
    return [read_tokens(root / s["file"]).tokens for s in index["sequences"]
            if split == "all" or s["split"] == split]


def cmd_train_gen(args) -> int:
    cfg = _config(args)
    torch.set_num_threads(1)
    seqs = read_token_dir(args.tokens, args.split)
    if not seqs:
        raise ValueError(f"no {args.split!r} token sequences in {args.tokens}")
    model, history = train_generator(seqs, cfg.gen, cfg.gen_train, log=_log(args.quiet))
    out = Path(args.out)
    save_generator(out, model)
    atomic_write_text(out.with_name(out.name + ".metrics.csv"), rows_to_csv(history.epochs))
    write_run_record(run_record_path(out), "train-gen", cfg, cfg.gen.seed,
                     {"tokens": Path(args.tokens) / TOKEN_INDEX}, {"split": args.split})
    return EXIT_OK


def _write_sample(out: Path, name: str, toks: np.ndarray, gen: GeneratorModel, ae) -> None:
    write_tokens(out / f"{name}.tok", TokenFile(gen.cfg.code_dim, gen.cfg.depth, toks))
    write_wireframe(out / f"{name}.wf", detokenize(toks, ae))


def _models(args):
    gen = load_generator(_require(args.ckpt))
    ae = load_autoencoder(_require(args.ae))
    if (gen.cfg.code_dim, gen.cfg.depth) != (ae.cfg.code_dim, ae.cfg.depth):
        raise ValueError("generator and autoencoder checkpoints use different codes")
    return gen, ae


def cmd_sample(args) -> int:
    cfg = _config(args)
    torch.set_num_threads(1)
    gen, ae = _models(args)
    count = cfg.sample.count if args.count is None else args.count
    temp = cfg.sample.temperature if args.temperature is None else args.temperature
    seed = cfg.sample.seed if args.seed is None else args.seed
    out = Path(args.out)
    for i in range(count):
        toks = sample(gen, temp, np.random.default_rng([seed, i]))
        _write_sample(out, f"sample_{i:04d}", toks, gen, ae)
    write_run_record(out / "run.json", "sample", cfg, seed,
                     {"generator": args.ckpt, "autoencoder": args.ae},
                     {"count": count, "temperature": temp})
    print(f"wrote {count} samples to {out}")
    return EXIT_OK


def cmd_complete(args) -> int:
    cfg = _config(args)
    torch.set_num_threads(1)
    gen, ae = _models(args)
    prefix = read_tokens(_require(args.prefix))
    if (prefix.code_dim, prefix.depth) != (gen.cfg.code_dim, gen.cfg.depth):
        raise InvalidCode("prefix token file uses a different code layout")
    body = prefix.tokens[:-1] if prefix.complete else prefix.tokens
    if args.keep_segments is not None:
        body = body[:args.keep_segments * gen.cfg.block]
    temp = cfg.sample.temperature if args.temperature is None else args.temperature
    seed = cfg.sample.seed if args.seed is None else args.seed
    out = Path(args.out)
    for i in range(args.count):
        toks = complete(body, gen, temp, np.random.default_rng([seed, i]))
        _write_sample(out, f"completion_{i:04d}", toks, gen, ae)
    write_run_record(out / "run.json", "complete", cfg, seed,
                     {"generator": args.ckpt, "autoencoder": args.ae, "prefix": args.prefix},
                     {"count": args.count, "temperature": temp,
                      "keep_segments": args.keep_segments})
    print(f"wrote {args.count} completions to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config(args)
    samples = sorted(_require(args.samples).glob("*.wf"))
    if not samples:
        raise ValueError(f"no .wf files in {args.samples}")
    src = _manifest_file(args.dataset)
    manifest = read_manifest(src)
    generated = [read_wireframe(p) for p in samples]
    report, rows = evaluate(generated, manifest.load_split("test"),
                            manifest.load_split("train"), cfg.eval)
    for r in rows:
        r["file"] = samples[r["index"]].name
    out = Path(args.out)
    atomic_write_text(out / "report.json", report.to_json())
    atomic_write_text(out / "per_sample.csv", rows_to_csv(rows))
    novelty = report.novelty
    hist_rows = [{"bin_lo": novelty["edges"][k], "bin_hi": novelty["edges"][k + 1],
                  "count": c,
                  "exemplar_generated": "" if ex is None else samples[rows[ex[0]]["index"]].name,
                  "exemplar_train": "" if ex is None else ex[1]}
                 for k, (c, ex) in enumerate(zip(novelty["counts"], novelty["exemplars"]))]
    atomic_write_text(out / "novelty.csv", rows_to_csv(hist_rows))
    write_run_record(out / "run.json", "eval", cfg, cfg.eval.seed,
                     {"manifest": src, **{f"sample:{p.name}": p for p in samples}})
    print(report.to_json(), end="")
    return EXIT_OK


def cmd_split(args) -> int:
    w = read_wireframe(_require(args.wireframe))
    out = Path(args.out)
    parts = split_components(w)
    for k, part in enumerate(parts):
        write_wireframe(out / f"part_{k:03d}.wf", part)
    print(f"wrote {len(parts)} components to {out}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = _require(args.file)
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == TOKEN_MAGIC:
        tf = read_tokens(path)
        print(f"tokens: {len(tf.tokens)}")
        print(f"segments: {tf.segment_count}")
        print(f"code_dim: {tf.code_dim}  depth: {tf.depth}  complete: {tf.complete}")
        return EXIT_OK
    w = read_wireframe(path)
    cvp2, cvp3 = structural_validity(w) if w.num_vertices else (0.0, 0.0)
    print(f"vertices: {w.num_vertices}")
    print(f"segments: {w.num_segments}")
    print(f"components: {component_count(w)}")
    print(f"cvp2: {cvp2:.4f}")
    print(f"cvp3: {cvp3:.4f}")
    if w.num_vertices:
        lo, hi = w.vertices.min(axis=0), w.vertices.max(axis=0)
        print("bbox: " + " ".join(f"{v:.4g}" for v in (*lo, *hi)))
    return EXIT_OK


# --- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = Parser(prog="wirehouse", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"wirehouse {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    def stage(name, func, help_text, seed=True):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--config", help="key = value config file")
        s.add_argument("--preset", choices=("desk", "paper"), help="base preset (default desk)")
        if seed:
            s.add_argument("--seed", type=int)
        s.set_defaults(func=func)
        return s

    s = stage("synth", cmd_synth, "synthesize a house dataset")
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--max-segments", type=int)
    s.add_argument("--out", required=True)

    s = stage("augment", cmd_augment, "add augmented copies of training houses")
    s.add_argument("--dataset", required=True)
    s.add_argument("--copies", type=int, default=1)
    s.add_argument("--out", required=True)

    s = stage("train-ae", cmd_train_ae, "train the autoencoder", seed=False)
    s.add_argument("--dataset", required=True)
    s.add_argument("--split", default="train", choices=("train", "test"))
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--quiet", action="store_true")

    s = stage("tokenize", cmd_tokenize, "turn a dataset into token files", seed=False)
    s.add_argument("--ckpt", required=True, help="autoencoder checkpoint")
    s.add_argument("--dataset", required=True)
    s.add_argument("--split", default="all", choices=("train", "test", "all"))
    s.add_argument("--out", required=True)

    s = stage("train-gen", cmd_train_gen, "train the generator on token files", seed=False)
    s.add_argument("--tokens", required=True, help="directory written by tokenize")
    s.add_argument("--split", default="train", choices=("train", "test", "all"))
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--quiet", action="store_true")

    s = stage("sample", cmd_sample, "sample wireframes from the generator")
    s.add_argument("--ckpt", required=True, help="generator checkpoint")
    s.add_argument("--ae", required=True, help="autoencoder checkpoint")
    s.add_argument("--count", type=int)
    s.add_argument("--temperature", type=float)
    s.add_argument("--out", required=True)

    s = stage("complete", cmd_complete, "complete a partial token sequence")
    s.add_argument("--ckpt", required=True, help="generator checkpoint")
    s.add_argument("--ae", required=True, help="autoencoder checkpoint")
    s.add_argument("--prefix", required=True, help="token file")
    s.add_argument("--keep-segments", type=int, help="truncate the prefix to this many segments")
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--temperature", type=float)
    s.add_argument("--out", required=True)

    s = stage("eval", cmd_eval, "evaluate samples against a dataset", seed=False)
    s.add_argument("--samples", required=True, help="directory of .wf files")
    s.add_argument("--dataset", required=True)
    s.add_argument("--out", required=True)

    s = sub.add_parser("split", help="write each connected component to its own file")
    s.add_argument("wireframe")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("inspect", help="summarize a wireframe or token file")
    s.add_argument("file")
    s.set_defaults(func=cmd_inspect)
    return p


DATA_ERRORS = (InvalidWireframe, InvalidCode, CheckpointError, SynthesisFailure, OSError,
               ValueError, KeyError, json.JSONDecodeError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"wirehouse: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"wirehouse: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except DATA_ERRORS as exc:
        print(f"wirehouse: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

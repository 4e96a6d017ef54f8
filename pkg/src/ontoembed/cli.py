"""``ontoembed`` command line.

Subcommands: pretrain, align, export, gen-data, eval, check, verify.
Exit codes: 0 ok, 1 configuration error, 2 data error, 3 divergence,
4 failed check.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time

from . import __version__
from .axioms import expand_indications, load_indications, save_indications
from .errors import ConfigError, DataError, DivergenceError
from .grounding import export_embeddings, load_checkpoint, load_embeddings, save_checkpoint
from .ontology import KINDS, OntologyKind, load_ontology, save_ontology
from .trainer import TrainConfig, TrainState, train, train_alignment

log = logging.getLogger("ontoembed")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGENCE, EXIT_CHECK = 0, 1, 2, 3, 4

DEFAULTS = {
    "dim": 64,
    "epochs": 100,
    "batch": 64,
    "lr": 1e-3,
    "p_forall": 2.0,
    "p_sat": 2.0,
    "neg_cap": None,
    "seed": 0,
    "steps_per_epoch": None,
    "literal_quantifier": False,
    "freeze_embeddings_on_align": False,
    "tail_percentage": 30.0,
    "min_few_shot": 2,
    "finetune_epochs": 300,
    "finetune_lr": 1e-2,
    "bootstrap_rounds": 10,
    "patients": 1000,
    "zipf": 1.1,
    "cohesion": 0.0,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _neg_cap(text):
    if text.lower() in ("inf", "all"):
        return math.inf
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive or 'inf'")
    return value


def _add_train_flags(p):
    g = p.add_argument_group("training")
    g.add_argument("--dim", type=int)
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch", type=int, help="seed nodes per axiom batch")
    g.add_argument("--lr", type=float)
    g.add_argument("--p-forall", type=float)
    g.add_argument("--p-sat", type=float)
    g.add_argument("--neg-cap", type=_neg_cap, help="negative pairs per batch (int or 'inf')")
    g.add_argument("--steps-per-epoch", type=int)
    g.add_argument("--literal-quantifier", action="store_true", default=None)
    g.add_argument("--freeze-embeddings-on-align", action="store_true", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ontoembed", description="Axiom-driven ontology embedding pretraining.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON file of flag values (CLI flags take precedence)")
        p.add_argument("--seed", type=int)

    def ontologies(p, required=("diagnosis", "procedure", "medication")):
        for kind in KINDS:
            p.add_argument(f"--{kind.value}", required=kind.value in required,
                           help=f"{kind.value} ontology (child<TAB>parent lines)")

    p = sub.add_parser("pretrain", help="pretrain the three encoders and align them")
    common(p)
    ontologies(p)
    p.add_argument("--indications", help="med<TAB>diag pairs; omit to skip alignment")
    p.add_argument("--out", required=True, help="output directory")
    _add_train_flags(p)

    p = sub.add_parser("align", help="alignment passes only, starting from a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--diagnosis", required=True)
    p.add_argument("--indications", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_train_flags(p)

    p = sub.add_parser("export", help="write the text embedding export of a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="embedding file")

    p = sub.add_parser("gen-data", help="write a synthetic world: ontologies, indications, DDIs, EHR")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--patients", type=int)
    p.add_argument("--zipf", type=float)
    p.add_argument("--cohesion", type=float)

    p = sub.add_parser("eval", help="random vs pretrained initialisation of the reference recommender")
    common(p)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--ehr", required=True)
    p.add_argument("--ddi", required=True)
    ontologies(p, required=())
    p.add_argument("--out", required=True, help="report file (TSV)")
    p.add_argument("--tail-percentage", type=float, help="few-shot tail, in percent (default 30)")
    p.add_argument("--min-few-shot", type=int, help="tail medications needed per few-shot admission")
    p.add_argument("--finetune-epochs", type=int)
    p.add_argument("--finetune-lr", type=float)
    p.add_argument("--bootstrap-rounds", type=int)

    p = sub.add_parser("check", help="run the validation suites")
    common(p)
    p.add_argument("--suite", action="append", help="run only this suite (repeatable)")

    p = sub.add_parser("verify", help="check a run manifest's input digests")
    p.add_argument("manifest")
    return parser


# ---------------------------------------------------------------- config

def resolve_config(args) -> dict:
    """Built-in defaults, overridden by ``--config``, overridden by explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {args.config} must hold a JSON object")
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys in {args.config}: {unknown}")
        if loaded.get("neg_cap") in ("inf", "all"):
            loaded["neg_cap"] = math.inf
        cfg.update(loaded)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(dim=cfg["dim"], epochs=cfg["epochs"], steps_per_epoch=cfg["steps_per_epoch"],
                       seed_count=cfg["batch"], lr=cfg["lr"], p_forall=cfg["p_forall"],
                       p_sat=cfg["p_sat"], neg_cap=cfg["neg_cap"], rng_seed=cfg["seed"],
                       literal_quantifier=bool(cfg["literal_quantifier"]),
                       freeze_embeddings_on_align=bool(cfg["freeze_embeddings_on_align"])).validate()


# ---------------------------------------------------------------- manifest

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json_atomic(obj, path):
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def write_manifest(path, command, cfg, inputs, outputs, started, argv=None):
    """RunManifest: everything needed to rerun the command bit-exactly."""
    manifest = {
        "command": command,
        "argv": list(sys.argv[1:] if argv is None else argv),
        "config": {k: ("inf" if isinstance(v, float) and math.isinf(v) else v) for k, v in cfg.items()},
        "seeds": {"seed": cfg.get("seed")},
        "inputs": {os.fspath(p): sha256_file(p) for p in inputs},
        "outputs": [os.fspath(p) for p in outputs],
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
        "version": __version__,
    }
    write_json_atomic(manifest, path)
    return manifest


def verify_manifest(path) -> list:
    """Inputs whose current digest differs from the manifest (missing files included)."""
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    changed = []
    for p, digest in sorted(manifest["inputs"].items()):
        if not os.path.exists(p) or sha256_file(p) != digest:
            changed.append(p)
    return changed


# ---------------------------------------------------------------- commands

def _load_dags(args, kinds=KINDS):
    dags = {}
    for kind in kinds:
        path = getattr(args, kind.value, None)
        if path:
            dags[kind] = load_ontology(path, kind)
    return dags


def _write_epoch_log(logs, path):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for entry in logs:
            row = {"epoch": entry["epoch"], "sat": entry["sat"],
                   "indication_sat": entry.get("indication_sat"),
                   "loss": {k: float(sum(v) / len(v)) for k, v in entry["loss"].items() if v}}
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _finish_training(ckpt, state, out, command, cfg, inputs, started, argv=None):
    os.makedirs(out, exist_ok=True)
    paths = [os.path.join(out, n) for n in ("checkpoint.bin", "embeddings.tsv", "epoch_log.jsonl")]
    save_checkpoint(ckpt, paths[0])
    export_embeddings(ckpt, paths[1])
    _write_epoch_log(state.logs, paths[2])
    write_manifest(os.path.join(out, "manifest.json"), command, cfg, inputs, paths, started, argv)
    print(f"wrote {', '.join(paths)}")
    print(f"selected epochs: {ckpt.extra.get('selected_epochs')}")


def cmd_pretrain(args, cfg, started):
    tcfg = train_config(cfg)
    dags = _load_dags(args)
    inputs = [getattr(args, k.value) for k in KINDS]
    pairs = None
    if args.indications:
        pairs = expand_indications(load_indications(args.indications), dags[OntologyKind.DIAGNOSIS])
        inputs.append(args.indications)
    state = TrainState(dags, tcfg, pairs)

    def report(entry):
        sat = " ".join(f"{k}={v:.4f}" for k, v in entry["sat"].items())
        ind = entry["indication_sat"]
        log.info("epoch %d %s%s", entry["epoch"], sat, "" if ind is None else f" indication={ind:.4f}")

    ckpt = train(state, on_epoch=report)
    _finish_training(ckpt, state, args.out, "pretrain", cfg, inputs, started, args.argv)
    return EXIT_OK


def cmd_align(args, cfg, started):
    base = load_checkpoint(args.checkpoint)
    cfg = dict(cfg, dim=base.dim)
    tcfg = train_config(cfg)
    ddag = load_ontology(args.diagnosis, OntologyKind.DIAGNOSIS)
    pairs = expand_indications(load_indications(args.indications), ddag)
    med = base.tables.get(OntologyKind.MEDICATION)
    if med is None or OntologyKind.DIAGNOSIS not in base.tables:
        raise DataError("checkpoint lacks medication or diagnosis embeddings")
    unknown = sorted({m for m, _ in pairs if m not in med.index})
    if unknown:
        raise DataError(f"indications name medication(s) absent from the checkpoint: {unknown[:3]}")
    # ontologies are only needed for the structural phases, which align skips
    state = TrainState({}, tcfg, pairs, tables={k: t.copy() for k, t in base.tables.items()},
                       nets={k: n.copy() for k, n in base.nets.items()})
    ckpt = train_alignment(state)
    ckpt.config = tcfg.to_dict()
    _finish_training(ckpt, state, args.out, "align", cfg,
                     [args.checkpoint, args.diagnosis, args.indications], started, args.argv)
    return EXIT_OK


def cmd_export(args, cfg, started):
    ckpt = load_checkpoint(args.checkpoint)
    export_embeddings(ckpt, args.out)
    write_manifest(f"{args.out}.manifest.json", "export", cfg, [args.checkpoint], [args.out], started,
                   args.argv)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_gen_data(args, cfg, started):
    from .downstream.ehr import save_ddi_pairs
    from .synth import gen_synthetic_ehr, make_world

    out = args.out
    os.makedirs(out, exist_ok=True)
    world = make_world(cfg["seed"])
    paths = {k: os.path.join(out, f"{k.value}.tsv") for k in KINDS}
    for kind, path in paths.items():
        save_ontology(world.dags[kind], path)
    ind_path = os.path.join(out, "indications.tsv")
    save_indications(world.indications, ind_path)
    ddi_path = os.path.join(out, "ddi.tsv")
    save_ddi_pairs(world.ddi_pairs, ddi_path)
    ehr_path = os.path.join(out, "ehr.txt")
    gen_synthetic_ehr(world.dags, cfg["patients"], cfg["zipf"], cfg["seed"], ehr_path,
                      drivers=world.drivers, proc_links=world.proc_links, cohesion=cfg["cohesion"])
    outputs = [*paths.values(), ind_path, ddi_path, ehr_path, f"{ehr_path}.manifest.json"]
    write_manifest(os.path.join(out, "manifest.json"), "gen-data", cfg, [], outputs, started, args.argv)
    print(f"wrote {len(outputs)} files to {out}")
    return EXIT_OK


def cmd_eval(args, cfg, started):
    from .downstream.ehr import DdiMatrix, load_ddi_pairs, load_ehr
    from .downstream.evaluate import evaluate, format_report
    from .downstream.recommender import build_vocab, train_reference_model
    from .downstream.split import split_dataset

    tail = cfg["tail_percentage"]
    if not 0 < tail <= 100:
        raise ConfigError(f"--tail-percentage must be in (0, 100], got {tail}")
    for key in ("finetune_epochs", "bootstrap_rounds", "min_few_shot"):
        if cfg[key] < 0 or (key != "finetune_epochs" and cfg[key] == 0):
            raise ConfigError(f"{key} must be positive, got {cfg[key]}")
    tables = load_embeddings(args.embeddings)
    dags = _load_dags(args)
    records = load_ehr(args.ehr, dags or None)
    if not records:
        raise DataError(f"{args.ehr} holds no patients")
    vocab = build_vocab(records)
    ddi = DdiMatrix(vocab[OntologyKind.MEDICATION],
                    [p for p in load_ddi_pairs(args.ddi)
                     if p[0] in vocab[OntologyKind.MEDICATION] and p[1] in vocab[OntologyKind.MEDICATION]])
    split = split_dataset(records, tail_percentage=tail / 100.0, rng_seed=cfg["seed"],
                          min_few_shot=cfg["min_few_shot"])
    dim = next(iter(tables.values())).dim
    kw = dict(epochs=cfg["finetune_epochs"], rng_seed=cfg["seed"], lr=cfg["finetune_lr"])
    models = {"random": train_reference_model(records, split, None, dim=dim, **kw),
              "pretrained": train_reference_model(records, split, tables, **kw)}
    rows = []
    for init, model in models.items():
        res = evaluate(model, split, records, ddi, rounds=cfg["bootstrap_rounds"], rng_seed=cfg["seed"])
        for name, key in (("reference[full]", "full"), ("reference[few-shot]", "few_shot")):
            rows.append((name, init, res[key]))
            if res[key].flags:
                log.warning("%s/%s: %s", name, init, ", ".join(res[key].flags))
    report = format_report(rows)
    tmp = f"{args.out}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(report)
    os.replace(tmp, args.out)
    inputs = [args.embeddings, args.ehr, args.ddi] + [getattr(args, k.value) for k in dags]
    write_manifest(f"{args.out}.manifest.json", "eval", cfg, inputs, [args.out], started, args.argv)
    print(f"few-shot admissions: {len(split.few_shot)} (tail {tail:g}%, "
          f"{len(split.few_shot_meds)} medications)")
    sys.stdout.write(report)
    return EXIT_OK


def cmd_check(args, cfg, started):
    from .checks import SUITES, run_suites

    names = args.suite or list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suite(s) {unknown}; choose from {list(SUITES)}")
    results = run_suites(names)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name} ({r.seconds:.1f}s): {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"failed: {', '.join(failed)}")
        return EXIT_CHECK
    return EXIT_OK


def cmd_verify(args, cfg, started):
    changed = verify_manifest(args.manifest)
    for p in changed:
        print(f"changed: {p}")
    if changed:
        return EXIT_DATA
    print("all inputs match")
    return EXIT_OK


COMMANDS = {"pretrain": cmd_pretrain, "align": cmd_align, "export": cmd_export,
            "gen-data": cmd_gen_data, "eval": cmd_eval, "check": cmd_check, "verify": cmd_verify}


def main(argv=None) -> int:
    started = time.perf_counter()
    try:
        argv = list(sys.argv[1:] if argv is None else argv)
        args = build_parser().parse_args(argv)
        args.argv = argv
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(message)s")
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg, started)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: no such file: {exc.filename}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

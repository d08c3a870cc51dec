"""``agd-evade`` command line.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric failure
(diverged training or a failed self-check).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from . import __version__, attack, corpus, defense, evaluation, experiment, models
from .errors import AgdError, ConfigError, IoFailure
from .nn import serialize, training

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("agd_evade")


def _write_text(path, text):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _load_corpus(path):
    if not Path(path).is_file():
        raise IoFailure(f"corpus not found: {path}")
    return corpus.LabeledCorpus.load(path)


def _curve_path(out, curve):
    return curve or str(Path(out).with_suffix("")) + ".loss.csv"


# -- gen-corpus ---------------------------------------------------------------

def cmd_gen_corpus(args):
    specs = corpus.parse_roster(args.families, seed=args.seed)
    if args.benign == "bundled":
        benign = corpus.bundled_benign(args.benign_count, seed=args.seed, max_length=args.max_length)
        skipped = 0
    else:
        loaded = corpus.load_benign(args.benign, limit=args.benign_count, max_length=args.max_length)
        benign, skipped = loaded.domains, loaded.skipped
    data = corpus.assemble(benign, [(s, args.per_family) for s in specs], args.seed)
    text = data.to_csv()
    _write_text(args.out, text)
    manifest = {
        "families": [dataclasses.asdict(s) for s in specs],
        "per_family": args.per_family,
        "benign_source": args.benign,
        "benign_count": len(benign),
        "benign_skipped": skipped,
        "seed": args.seed,
        "counts": {f"{lab}/{role}": n for (lab, role), n in sorted(data.counts().items())},
        "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
    }
    _write_text(args.manifest or f"{args.out}.manifest.json", _json(manifest))
    print(f"wrote {len(data)} names in {len(data.classes)} classes to {args.out}")
    return EXIT_OK


# -- train ----------------------------------------------------------------------

def cmd_train(args):
    if args.arch not in models.ARCHITECTURES:
        raise ConfigError(f"unknown architecture {args.arch!r}; choose from {models.ARCHITECTURES}")
    data = _load_corpus(args.corpus)
    domains, labels = data.select(args.role)
    model = models.build(args.arch, data.classes, args.input_rows, args.seed)
    model, curve = training.train(model, domains, labels, epochs=args.epochs,
                                  batch_size=args.batch_size, learning_rate=args.lr, seed=args.seed)
    model.metadata.update({"architecture": args.arch, "role": args.role, "epochs": args.epochs})
    size = serialize.save_model(model, args.out)
    _write_text(_curve_path(args.out, args.curve), experiment.curve_csv(curve))
    print(f"{args.arch}: {model.num_params} parameters, final loss {curve[-1]:.4f}, "
          f"{size} bytes -> {args.out}")
    return EXIT_OK


# -- attack ---------------------------------------------------------------------

def _read_domains(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return [line.strip() for line in fh if line.strip() and not line.startswith("#")]
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def cmd_attack(args):
    substitute = serialize.load_model(args.model)
    if args.domains:
        domains = _read_domains(args.domains)
    elif args.corpus:
        domains, _ = _load_corpus(args.corpus).select(args.role)
    else:
        raise ConfigError("give --corpus or --domains")
    report = attack.attack_batch(substitute, domains, args.mode, args.seed)
    _write_text(args.out, report.to_csv())
    _write_text(args.summary or f"{args.out}.summary.json", report.summary_json())
    print(f"{args.mode}: {len(report.succeeded)}/{len(domains)} names attacked, "
          f"{report.collisions} collisions -> {args.out}")
    if args.verify:
        bad = [r for r in report.succeeded if not attack.half_replaced(r.original, r.adversarial)]
        print(f"verify: {len(report.succeeded) - len(bad)}/{len(report.succeeded)} satisfy the "
              "exactly-half constraint")
        if bad:
            return EXIT_NUMERIC
    if not report.succeeded:
        print("no name could be attacked", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


# -- defend ---------------------------------------------------------------------

def cmd_defend(args):
    data = _load_corpus(args.corpus)
    domains, labels = data.select("target_train")
    if args.method == "retrain":
        if not args.model or not args.substitute:
            raise ConfigError("retrain needs --model and --substitute")
        target = serialize.load_model(args.model)
        substitute = serialize.load_model(args.substitute)
        hardened, curve = defense.adversarial_retrain(
            target, domains, labels, substitute, per_family=args.per_family,
            extra_epochs=args.epochs, seed=args.seed, batch_size=args.batch_size,
            learning_rate=args.lr if args.lr is not None else training.DEFAULT_LR)
        serialize.save_model(hardened, args.out)
        _write_text(_curve_path(args.out, None), experiment.curve_csv(curve))
        print(f"retrain: {hardened.metadata['defense']['adversarial_samples']} adversarial samples, "
              f"-> {args.out}")
        return EXIT_OK
    arch = args.arch or "cnn_parallel_invincea"
    if arch not in models.TARGETS:
        raise ConfigError(f"unknown target architecture {arch!r}")
    cfg = defense.DistillationConfig(args.temperature, arch, arch,
                                     args.epochs if args.epochs is not None else training.DEFAULT_EPOCHS,
                                     args.batch_size,
                                     args.lr if args.lr is not None else defense.DEFAULT_DISTILL_LR)
    teacher, student, curves = defense.distill(cfg, domains, labels, data.classes, args.seed,
                                               args.input_rows)
    stem = str(Path(args.out).with_suffix(""))
    for role, model in (("teacher", teacher), ("student", student)):
        serialize.save_model(model, f"{stem}.{role}.agdm")
        _write_text(f"{stem}.{role}.loss.csv", experiment.curve_csv(curves[role]))
    print(f"distill (T={cfg.temperature:g}): {stem}.teacher.agdm, {stem}.student.agdm")
    return EXIT_OK


# -- eval -----------------------------------------------------------------------

def cmd_eval(args):
    model = serialize.load_model(args.model)
    data = _load_corpus(args.corpus)
    domains, labels = data.select(args.role)
    name = Path(args.model).stem
    if args.attack_csv:
        label_of = dict(zip(domains, labels))
        try:
            with open(args.attack_csv, encoding="utf-8", newline="") as fh:
                rows = list(csv.DictReader(fh))
        except OSError as exc:
            raise IoFailure(f"cannot read {args.attack_csv}: {exc}") from exc
        missing = [r["original"] for r in rows if r["original"] not in label_of]
        if missing:
            raise ConfigError(f"{len(missing)} attacked names are not in the {args.role} split")
        labels = [label_of[r["original"]] for r in rows]
        domains = [r["adversarial"] for r in rows]
    table = evaluation.evaluate(model, domains, labels, args.collapse)
    text = evaluation.metrics_csv([(name, model.metadata.get("defense", {}).get("method", "no_defense"),
                                    table)])
    if args.out:
        _write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


# -- run ------------------------------------------------------------------------

def default_config_text() -> str:
    return resources.files("agd_evade.data").joinpath("default.toml").read_text("utf-8")


def cmd_run(args):
    if args.config:
        config = experiment.load_config(args.config)
    else:
        from ._toml import tomllib

        config = experiment.ExperimentConfig.from_dict(tomllib.loads(default_config_text()))
    overrides = {"seed": args.seed, "output_dir": args.out_dir, "threads": args.threads,
                 "per_family": args.per_family, "epochs": args.epochs}
    if args.archs:
        overrides["architectures"] = tuple(a for a in args.archs.split(",") if a)
    config = dataclasses.replace(config, **{k: v for k, v in overrides.items() if v is not None})
    result = experiment.run_experiment(config)
    sys.stdout.write((result.output_dir / "grid.csv").read_text("utf-8"))
    print(f"results in {result.output_dir} (manifest {result.manifest.name})")
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser():
    p = argparse.ArgumentParser(prog="agd-evade", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default="WARNING",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="logging verbosity")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = sub.add_parser("gen-corpus", help="generate a labelled, role-split corpus CSV")
    g.add_argument("--families", default="lcg:2,hex:2,dict:2,cvc:2",
                   help="roster as kind:count pairs, kinds lcg, hex, dict, cvc")
    g.add_argument("--per-family", type=int, default=2000, help="names generated per family")
    g.add_argument("--benign", default="bundled", help="'bundled' or a path to a benign list")
    g.add_argument("--benign-count", type=_positive, default=6500, help="benign names to use")
    g.add_argument("--max-length", type=_positive, default=models.DEFAULT_INPUT_ROWS,
                   help="longest benign name kept")
    g.add_argument("--seed", type=_seed, default=0, help="generation and split seed")
    g.add_argument("--out", required=True, help="output CSV path")
    g.add_argument("--manifest", help="generation manifest path (default: OUT.manifest.json)")
    g.set_defaults(func=cmd_gen_corpus)

    t = sub.add_parser("train", help="train a substitute or target model")
    t.add_argument("--corpus", required=True, help="corpus CSV")
    t.add_argument("--arch", required=True, help=f"one of {', '.join(models.ARCHITECTURES)}")
    t.add_argument("--role", default="target_train", choices=["substitute_train", "target_train"],
                   help="corpus split to train on")
    t.add_argument("--epochs", type=_positive, default=training.DEFAULT_EPOCHS, help="epochs")
    t.add_argument("--batch-size", type=_positive, default=training.DEFAULT_BATCH_SIZE,
                   help="mini-batch size")
    t.add_argument("--lr", type=float, default=training.DEFAULT_LR, help="ADAM learning rate")
    t.add_argument("--input-rows", type=_positive, default=models.DEFAULT_INPUT_ROWS,
                   help="padded input length")
    t.add_argument("--seed", type=_seed, default=0, help="initialisation and shuffling seed")
    t.add_argument("--out", required=True, help="model file (.agdm)")
    t.add_argument("--curve", help="loss-curve CSV (default: OUT stem + .loss.csv)")
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("attack", help="perturb names with MaskDGA or the random baseline")
    a.add_argument("--model", required=True, help="substitute model file")
    a.add_argument("--corpus", help="corpus CSV to take names from")
    a.add_argument("--role", default="test", choices=list(corpus.ROLES), help="corpus split")
    a.add_argument("--domains", help="plain list of names, one per line (instead of --corpus)")
    a.add_argument("--mode", default="maskdga", choices=list(attack.MODES), help="attack mode")
    a.add_argument("--seed", type=_seed, default=0, help="seed for the random mode")
    a.add_argument("--out", required=True, help="adversarial CSV")
    a.add_argument("--summary", help="summary JSON (default: OUT.summary.json)")
    a.add_argument("--verify", action="store_true",
                   help="re-check the exactly-half constraint on every output")
    a.set_defaults(func=cmd_attack)

    d = sub.add_parser("defend", help="harden a target by re-training or distillation")
    d.add_argument("--method", required=True, choices=["retrain", "distill"], help="defense")
    d.add_argument("--corpus", required=True, help="corpus CSV (target_train split is used)")
    d.add_argument("--model", help="trained target model (retrain)")
    d.add_argument("--substitute", help="substitute model used to craft samples (retrain)")
    d.add_argument("--per-family", type=int, default=defense.DEFAULT_PER_FAMILY,
                   help="adversarial samples per family (retrain)")
    d.add_argument("--arch", help="teacher and student architecture (distill)")
    d.add_argument("--temperature", type=float, default=defense.DEFAULT_TEMPERATURE,
                   help="softmax temperature (distill)")
    d.add_argument("--epochs", type=int, default=None,
                   help="extra epochs for retrain (default 2) or training epochs for distill (default 5)")
    d.add_argument("--batch-size", type=_positive, default=training.DEFAULT_BATCH_SIZE,
                   help="mini-batch size")
    d.add_argument("--lr", type=float, default=None,
                   help="ADAM learning rate (default 0.01 for retrain, 0.003 for distill)")
    d.add_argument("--input-rows", type=_positive, default=models.DEFAULT_INPUT_ROWS,
                   help="padded input length (distill)")
    d.add_argument("--seed", type=_seed, default=0, help="sampling and training seed")
    d.add_argument("--out", required=True,
                   help="hardened model file; for distill the stem of OUT.teacher/student.agdm")
    d.set_defaults(func=cmd_defend)

    e = sub.add_parser("eval", help="precision, recall and F1 of a model on a split")
    e.add_argument("--model", required=True, help="model file")
    e.add_argument("--corpus", required=True, help="corpus CSV")
    e.add_argument("--role", default="test", choices=list(corpus.ROLES), help="corpus split")
    e.add_argument("--attack-csv", help="evaluate the adversarial names of an attack CSV instead")
    e.add_argument("--collapse", default="dga_collapsed", choices=list(evaluation.COLLAPSE_MODES),
                   help="correctness convention")
    e.add_argument("--out", help="also write the metrics CSV here")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("run", help="run the full attack/defense grid from a TOML config")
    r.add_argument("--config", help="experiment TOML (default: the bundled desk config)")
    r.add_argument("--seed", type=_seed, help="override [experiment].seed")
    r.add_argument("--out-dir", help="override [experiment].output_dir")
    r.add_argument("--per-family", type=_positive, help="override [corpus].per_family")
    r.add_argument("--epochs", type=_positive, help="override [targets].epochs")
    r.add_argument("--archs", help="override [targets].architectures (comma separated)")
    r.add_argument("--threads", type=_positive,
                   help=f"evaluation workers (default: ${experiment.THREADS_ENV} or 1)")
    r.set_defaults(func=cmd_run)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "method", None) == "retrain" and args.epochs is None:
        args.epochs = defense.DEFAULT_EXTRA_EPOCHS
    try:
        return args.func(args)
    except AgdError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end experiment runner: corpus, substitute, targets, attacks, defenses.

Every stage is seeded from the single experiment seed, so two runs with the
same configuration write byte-identical metric tables. Wall-clock timings go
to ``timings.json``, which the manifest deliberately leaves out.
"""

from __future__ import annotations

import contextlib
import dataclasses
import hashlib
import json
import logging
import os
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import _kernels, attack, corpus, defense, evaluation, models
from .errors import AgdError, ConfigError, IoFailure, StageFailure
from .nn import serialize, training

log = logging.getLogger(__name__)

DEFENSES = ("no_defense", "retrain", "distill")
THREADS_ENV = "AGD_EVADE_THREADS"

# TOML section -> fields of ExperimentConfig it may set
_SECTIONS = {
    "experiment": ("name", "seed", "output_dir", "input_rows", "threads"),
    "corpus": ("families", "per_family", "benign", "benign_count"),
    "substitute": ("substitute_epochs",),
    "targets": ("architectures", "epochs", "batch_size", "learning_rate"),
    "attack": ("attack_modes",),
    "defense": ("defenses", "retrain_per_family", "retrain_epochs", "temperature",
                "distill_learning_rate"),
}
# keys whose TOML spelling differs from the field name
_ALIASES = {
    ("substitute", "epochs"): "substitute_epochs",
    ("attack", "modes"): "attack_modes",
    ("defense", "methods"): "defenses",
    ("defense", "per_family"): "retrain_per_family",
    ("defense", "extra_epochs"): "retrain_epochs",
    ("defense", "learning_rate"): "distill_learning_rate",
}


@dataclasses.dataclass
class ExperimentConfig:
    name: str = "desk"
    seed: int = 0
    output_dir: str = "runs/desk"
    input_rows: int = models.DEFAULT_INPUT_ROWS
    threads: int | None = None
    families: str = "lcg:2,hex:2,dict:2,cvc:2"
    per_family: int = 2000
    benign: str = "bundled"
    benign_count: int = 6500
    substitute_epochs: int = training.DEFAULT_EPOCHS
    architectures: tuple = models.TARGETS
    epochs: int = training.DEFAULT_EPOCHS
    batch_size: int = training.DEFAULT_BATCH_SIZE
    learning_rate: float = training.DEFAULT_LR
    attack_modes: tuple = ("random", "maskdga")
    defenses: tuple = DEFENSES
    retrain_per_family: int = defense.DEFAULT_PER_FAMILY
    retrain_epochs: int = defense.DEFAULT_EXTRA_EPOCHS
    temperature: float = defense.DEFAULT_TEMPERATURE
    distill_learning_rate: float = defense.DEFAULT_DISTILL_LR

    def __post_init__(self):
        self.architectures = tuple(self.architectures)
        self.attack_modes = tuple(self.attack_modes)
        self.defenses = tuple(self.defenses)

    @classmethod
    def from_dict(cls, data: dict):
        """Build from the nested layout of a TOML file."""
        kwargs = {}
        for section, body in data.items():
            if section not in _SECTIONS or not isinstance(body, dict):
                raise ConfigError(f"unknown config section [{section}]")
            for key, value in body.items():
                field = _ALIASES.get((section, key), key)
                if field not in _SECTIONS[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                kwargs[field] = value
        return cls(**kwargs)

    def validate(self):
        for name in ("per_family", "benign_count", "substitute_epochs", "epochs", "batch_size",
                     "input_rows"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if not (self.learning_rate > 0 and self.distill_learning_rate > 0):
            raise ConfigError("learning rates must be positive")
        if self.retrain_per_family < 0 or self.retrain_epochs < 0:
            raise ConfigError("retrain settings must be non-negative")
        for mode in self.attack_modes:
            if mode not in attack.MODES:
                raise ConfigError(f"unknown attack mode {mode!r}")
        for d in self.defenses:
            if d not in DEFENSES:
                raise ConfigError(f"unknown defense {d!r}")
        if "no_defense" not in self.defenses:
            raise ConfigError("the defense list must include no_defense")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        for key in ("architectures", "attack_modes", "defenses"):
            d[key] = list(d[key])
        return d


def load_config(path) -> ExperimentConfig:
    from ._toml import load_toml

    return ExperimentConfig.from_dict(load_toml(path))


def derive_seed(seed: int, component: str) -> int:
    """Stable per-component seed (independent of Python's hash salt)."""
    ss = np.random.SeedSequence([seed, zlib.crc32(component.encode())])
    return int(ss.generate_state(1, np.uint32)[0])


def resolve_threads(requested=None) -> int:
    if requested is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                requested = int(env)
            except ValueError:
                raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    requested = requested or 1
    if requested < 1:
        raise ConfigError("threads must be >= 1")
    return requested


@contextlib.contextmanager
def stage(name):
    log.info("stage %s", name)
    try:
        yield
    except StageFailure:
        raise
    except AgdError as exc:
        raise StageFailure(name, exc) from exc
    except OSError as exc:
        raise StageFailure(name, IoFailure(str(exc))) from exc


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def curve_csv(curve) -> str:
    return "epoch,mean_loss\n" + "".join(f"{i},{v:.8f}\n" for i, v in enumerate(curve, 1))


class _Writer:
    """Collects every artifact written under the results directory."""

    def __init__(self, root: Path):
        self.root = root
        self.files = []

    def text(self, rel, content):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(content)
        self.files.append(rel)
        return path

    def model(self, rel, model):
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        serialize.save_model(model, path)
        self.files.append(rel)
        return path

    def manifest(self, config):
        artifacts = {rel: sha256_file(self.root / rel) for rel in sorted(self.files)}
        body = {"config": config.to_dict(), "kernel_backend": _kernels.BACKEND,
                "artifacts": artifacts}
        self.text("manifest.json", json.dumps(body, indent=2, sort_keys=True) + "\n")
        self.files.pop()  # the manifest does not list itself
        return self.root / "manifest.json"


@dataclasses.dataclass
class ExperimentResult:
    output_dir: Path
    tables: dict  # (model, defense, condition, collapse) -> MetricsTable
    per_family: list  # (model, defense, rows)
    attacks: dict  # mode -> AttackReport
    models: dict  # (model, defense) -> ModelGraph
    manifest: Path
    timings: dict

    def f1(self, model, defense="no_defense", condition="no_attack", collapse="dga_collapsed"):
        return self.tables[(model, defense, condition, collapse)].f1


def build_corpus(config: ExperimentConfig) -> corpus.LabeledCorpus:
    specs = corpus.parse_roster(config.families, seed=config.seed)
    if config.benign == "bundled":
        benign = corpus.bundled_benign(config.benign_count, seed=config.seed,
                                       max_length=config.input_rows)
    else:
        benign = corpus.load_benign(config.benign, limit=config.benign_count,
                                    max_length=config.input_rows).domains
    return corpus.assemble(benign, [(s, config.per_family) for s in specs], config.seed)


def _aligned(report, originals):
    """Attacked names in input order; names the attack rejected stay as they were."""
    return [r.adversarial if r.adversarial is not None else d
            for r, d in zip(report.results, originals)]


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    with stage("config"):
        config.validate()
        for arch in config.architectures:
            if arch not in models.TARGETS:
                models.build_target(arch, ("benign", "x"))  # raises UnknownArchitecture
        threads = resolve_threads(config.threads)
        out = _Writer(Path(config.output_dir))
        out.root.mkdir(parents=True, exist_ok=True)
    timings = {}
    clock = time.perf_counter

    def timed(key, fn, *args, **kwargs):
        t0 = clock()
        value = fn(*args, **kwargs)
        timings[key] = round(clock() - t0, 3)
        return value

    with stage("corpus"):
        data = timed("corpus", build_corpus, config)
        out.text("corpus.csv", data.to_csv())
        classes = data.classes
        sub_x, sub_y = data.select("substitute_train")
        tr_x, tr_y = data.select("target_train")
        te_x, te_y = data.select("test")

    train_kw = dict(batch_size=config.batch_size, learning_rate=config.learning_rate)
    with stage("substitute"):
        seed = derive_seed(config.seed, "substitute")
        sub = models.build_substitute(classes, config.input_rows, seed)
        sub, curve = timed("train:substitute_cnn", training.train, sub, sub_x, sub_y,
                           epochs=config.substitute_epochs, seed=seed, **train_kw)
        out.model(f"models/{models.SUBSTITUTE}.agdm", sub)
        out.text(f"curves/{models.SUBSTITUTE}.csv", curve_csv(curve))

    trained = {}
    with stage("targets"):
        for arch in config.architectures:
            seed = derive_seed(config.seed, f"target:{arch}")
            m = models.build_target(arch, classes, config.input_rows, seed)
            m, curve = timed(f"train:{arch}", training.train, m, tr_x, tr_y,
                             epochs=config.epochs, seed=seed, **train_kw)
            trained[(arch, "no_defense")] = m
            out.model(f"models/{arch}.agdm", m)
            out.text(f"curves/{arch}.csv", curve_csv(curve))

    conditions = {"no_attack": list(te_x)}
    reports = {}
    with stage("attack"):
        for mode in config.attack_modes:
            rep = timed(f"attack:{mode}", attack.attack_batch, sub, te_x, mode,
                        derive_seed(config.seed, f"attack:{mode}"))
            reports[mode] = rep
            conditions[mode] = _aligned(rep, te_x)
            out.text(f"attack_{mode}.csv", rep.to_csv())
            out.text(f"attack_{mode}_summary.json", rep.summary_json())

    if "retrain" in config.defenses:
        with stage("retrain"):
            for arch in config.architectures:
                hardened, curve = timed(
                    f"retrain:{arch}", defense.adversarial_retrain, trained[(arch, "no_defense")],
                    tr_x, tr_y, sub, per_family=config.retrain_per_family,
                    extra_epochs=config.retrain_epochs,
                    seed=derive_seed(config.seed, f"retrain:{arch}"), **train_kw)
                trained[(arch, "retrain")] = hardened
                out.model(f"models/{arch}__retrain.agdm", hardened)
                out.text(f"curves/{arch}__retrain.csv", curve_csv(curve))

    if "distill" in config.defenses:
        with stage("distill"):
            for arch in config.architectures:
                cfg = defense.DistillationConfig(config.temperature, arch, arch, config.epochs,
                                                 config.batch_size, config.distill_learning_rate)
                teacher, student, curves = timed(
                    f"distill:{arch}", defense.distill, cfg, tr_x, tr_y, classes,
                    derive_seed(config.seed, f"distill:{arch}"), config.input_rows)
                trained[(arch, "distill")] = student
                out.model(f"models/{arch}__distill_teacher.agdm", teacher)
                out.model(f"models/{arch}__distill_student.agdm", student)
                out.text(f"curves/{arch}__distill_teacher.csv", curve_csv(curves["teacher"]))
                out.text(f"curves/{arch}__distill_student.csv", curve_csv(curves["student"]))

    with stage("evaluate"):
        cells = [(key, cond, collapse) for key in trained for cond in conditions
                 for collapse in evaluation.COLLAPSE_MODES]
        t0 = clock()
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(
                lambda c: evaluation.evaluate(trained[c[0]], conditions[c[1]], te_y, c[2]), cells))
        tables = {(k[0], k[1], cond, col): t for (k, cond, col), t in zip(cells, results)}
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fam = list(pool.map(
                lambda k: (k[0], k[1], evaluation.per_family_report(trained[k], te_x, te_y, conditions)),
                list(trained)))
        timings["evaluate"] = round(clock() - t0, 3)

    with stage("report"):
        for cond in conditions:
            records = [(k[0], k[1], tables[(k[0], k[1], cond, col)])
                       for k in trained for col in evaluation.COLLAPSE_MODES]
            out.text(f"metrics_{cond}.csv", evaluation.metrics_csv(records))
        out.text("per_family.csv", evaluation.per_family_csv(fam))
        out.text("grid.csv", grid_csv(tables, trained, conditions))
        manifest = out.manifest(config)
        with open(out.root / "timings.json", "w", encoding="utf-8") as fh:
            json.dump(timings, fh, indent=2, sort_keys=True)
            fh.write("\n")

    return ExperimentResult(out.root, tables, fam, reports, trained, manifest, timings)


def grid_csv(tables, trained, conditions) -> str:
    """Headline table: collapsed macro scores per (model, defense, condition)."""
    lines = ["model,defense,condition,precision,recall,f1"]
    for key in trained:
        for cond in conditions:
            t = tables[(key[0], key[1], cond, "dga_collapsed")]
            lines.append(",".join([key[0], key[1], cond] + [evaluation.format_float(v) for v in t.macro]))
    return "\n".join(lines) + "\n"


def verify_manifest(output_dir) -> list:
    """Paths whose current hash differs from the manifest (empty when intact)."""
    root = Path(output_dir)
    with open(root / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    bad = []
    for rel, digest in manifest["artifacts"].items():
        p = root / rel
        if not p.is_file() or sha256_file(p) != digest:
            bad.append(rel)
    return bad

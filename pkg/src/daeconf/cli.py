"""Command-line experiment runner.

Usage::

    daeconf <task> [--config FILE] [--<field> VALUE ...]

``task`` is one of rings, fool, openset, oneclass, gradcheck, confmap,
train, eval. Every :class:`~daeconf.config.ExperimentConfig` field is also a
flag (``lambda_l2`` becomes ``--lambda-l2``); flags override the file.

Each run writes its tables (CSV), figures (SVG, PGM), checkpoints and a
``manifest.json`` into one output directory. Tables depend only on the
config and seed, never on ``--workers``; the manifest also records the
wall time and so differs between runs.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .classifier import predict, thresholded_accuracy_from
from .config import ConfigError, ExperimentConfig
from .datasets import load_digits
from .errors import DaeconfError, FormatError
from .fooling import FoolingConfig
from .gradcheck import run_all
from .io import (load_checkpoint, save_checkpoint, write_csv, write_pgm, write_svg_curves,
                 write_svg_heatmap)
from .metrics import openness
from .protocols import (GridSpec, OpenSetTask, RingSettings, TrainSettings, confidence_map,
                        fooling_experiment, one_class_campaign, open_set_run, ring_experiment)
from .tensor import Rng

ACCURACY_THRESHOLDS = (0.0, 0.5, 0.9, 0.99)


class Run:
    """Output directory plus the list of artifacts written so far."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.dir = cfg.output_path()
        self.dir.mkdir(parents=True, exist_ok=True)
        self.artifacts: list[str] = []
        self.summary: dict = {}

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.dir / name


def train_settings(cfg: ExperimentConfig) -> TrainSettings:
    return TrainSettings(hidden=cfg.hidden, architecture=cfg.architecture,
                         decoder_mode=cfg.decoder_mode, epochs=cfg.epochs,
                         batch_size=cfg.batch, eta=cfg.eta, lambda_rec=cfg.lambda_rec,
                         lambda_l2=cfg.lambda_l2, sigma=cfg.sigma, alpha=cfg.alpha,
                         beta=cfg.beta, use_gate=cfg.use_gate,
                         jacobian_method=cfg.jacobian_method, omega=cfg.omega,
                         max_train=cfg.max_train, equal_updates=cfg.equal_updates)


def ring_settings(cfg: ExperimentConfig) -> RingSettings:
    return RingSettings(hidden=cfg.hidden, alpha=cfg.alpha, beta=cfg.beta, sigma=cfg.sigma,
                        batch_size=cfg.batch, steps=cfg.steps, eta=cfg.eta,
                        lambda_rec=cfg.lambda_rec, decoder_mode=cfg.decoder_mode)


def _write_maps(run: Run, model) -> None:
    cmap = confidence_map(model, GridSpec())
    names = {"distance": "score without gate", "gate": "curvature gate",
             "score": "confidence score", "label": "predicted label",
             "scaled_max": "max scaled output"}
    for key, field in cmap.fields().items():
        cat = key == "label"
        write_svg_heatmap(field, run.path(f"map_{key}.svg"), cell=4, categorical=cat,
                          vmin=None if cat else 0.0, vmax=None if cat else 1.0,
                          title=names[key])
    rows = []
    for i, y in enumerate(cmap.ys):
        for j, x in enumerate(cmap.xs):
            rows.append([float(x), float(y), float(cmap.distance[i, j]), float(cmap.gate[i, j]),
                         float(cmap.score[i, j]), int(cmap.label[i, j])])
    write_csv(run.path("map.csv"), ["x", "y", "distance", "gate", "score", "label"], rows)


def task_rings(run: Run, rng: Rng) -> int:
    res = ring_experiment(ring_settings(run.cfg), rng)
    write_csv(run.path("rings_summary.csv"),
              ["mean_ring_score", "mean_background_score", "score_ratio",
               "heldout_label_accuracy", "final_loss"],
              [[float(res.ring_score.mean()), float(res.background_score.mean()),
                res.score_ratio, res.heldout_label_accuracy, float(res.losses[-1])]])
    write_csv(run.path("loss.csv"), ["step", "loss"],
              [[i + 1, float(v)] for i, v in enumerate(res.losses)])
    res.model.history["seed"] = run.cfg.seed
    save_checkpoint(res.model, run.path("model.ckpt"))
    _write_maps(run, res.model)
    run.summary = {"score_ratio": res.score_ratio,
                   "heldout_label_accuracy": res.heldout_label_accuracy}
    return 0


def task_confmap(run: Run, rng: Rng) -> int:
    if run.cfg.checkpoint:
        model = load_checkpoint(run.cfg.checkpoint)
    else:
        model = ring_experiment(ring_settings(run.cfg), rng).model
    _write_maps(run, model)
    return 0


def _fooling_config(cfg: ExperimentConfig) -> FoolingConfig:
    return FoolingConfig(trials_per_class=cfg.fool_trials, max_updates=cfg.fool_updates,
                         threshold=cfg.threshold, eta=cfg.fool_eta, target=cfg.fool_target)


def task_fool(run: Run, rng: Rng) -> int:
    cfg = run.cfg
    data = load_digits(cfg.data_dir)
    res = fooling_experiment(cfg.variant, data, train_settings(cfg), _fooling_config(cfg), rng,
                             ACCURACY_THRESHOLDS, cfg.workers)
    rep = res.report
    write_csv(run.path("accuracy.csv"), ["variant", "threshold", "accuracy"],
              [[cfg.variant, t, a] for t, a in res.accuracy.items()])
    rows = []
    for k in range(len(rep.successes)):
        block = slice(k * rep.trials_per_class, (k + 1) * rep.trials_per_class)
        ok = rep.succeeded[block]
        mean = float(rep.steps[block][ok].mean()) if ok.any() else None
        rows.append([cfg.variant, k, rep.trials_per_class, int(rep.successes[k]), mean])
    write_csv(run.path("fooling.csv"),
              ["variant", "class", "trials", "successes", "mean_steps"], rows)
    write_csv(run.path("fooling_summary.csv"), ["variant", "rate", "mean_steps"],
              [[cfg.variant, rep.rate, rep.mean_steps]])
    side = int(round(np.sqrt(data.test_x.shape[1])))
    for n in range(len(rep.successes)):
        first = n * rep.trials_per_class
        write_pgm(rep.samples[first].reshape(side, side), run.path(f"fooling_class{n}.pgm"))
    res.model.history["seed"] = cfg.seed
    save_checkpoint(res.model, run.path("model.ckpt"))
    run.summary = {"fooling_rate": rep.rate, "accuracy": res.accuracy}
    return 0


def task_openset(run: Run, rng: Rng) -> int:
    cfg = run.cfg
    data = load_digits(cfg.data_dir)
    settings = train_settings(cfg)
    rows, summary = [], []
    for k in cfg.known_counts:
        task = OpenSetTask(k, cfg.repetitions, cfg.threshold)
        res = open_set_run(cfg.variant, data, task, rng, settings, cfg.workers)
        for r in res:
            rows.append([r.variant, r.num_known, r.openness, r.repetition, r.known,
                         r.precision, r.recall, r.f])
        fs = np.array([r.f for r in res])
        summary.append([cfg.variant, k, openness(k, 10), float(fs.mean()), float(fs.std())])
    write_csv(run.path("openset.csv"), ["variant", "num_known", "openness", "repetition",
                                        "known", "precision", "recall", "f"], rows)
    write_csv(run.path("openset_summary.csv"),
              ["variant", "num_known", "openness", "mean_f", "std_f"], summary)
    s = sorted(summary, key=lambda r: r[2])
    write_svg_curves({cfg.variant: ([r[2] for r in s], [r[3] for r in s], [r[4] for r in s])},
                     run.path("openset.svg"), title="open set recognition",
                     xlabel="openness", ylabel="F-measure", ylim=(0.0, 1.0))
    run.summary = {"mean_f": {str(r[1]): r[3] for r in summary}}
    return 0


def task_oneclass(run: Run, rng: Rng) -> int:
    cfg = run.cfg
    data = load_digits(cfg.data_dir)
    results, avg = one_class_campaign(cfg.variant, data, rng, train_settings(cfg),
                                      cfg.classes, cfg.workers)
    write_csv(run.path("oneclass.csv"), ["variant", "class", "auc"],
              [[cfg.variant, r.target_class, r.curve.auc] for r in results])
    write_csv(run.path("oneclass_roc.csv"), ["fpr", "mean_tpr"],
              [[float(f), float(t)] for f, t in zip(avg.fpr, avg.tpr)])
    write_svg_curves({f"{cfg.variant} (AUC {avg.auc:.3f})": (avg.fpr, avg.tpr)},
                     run.path("oneclass_roc.svg"), title="1-class recognition",
                     xlabel="false positive rate", ylabel="true positive rate",
                     xlim=(0.0, 1.0), ylim=(0.0, 1.0))
    run.summary = {"mean_roc_auc": avg.auc}
    return 0


def task_gradcheck(run: Run, rng: Rng) -> int:
    rows = run_all(rng, run.cfg.gradcheck_instances)
    write_csv(run.path("gradcheck.csv"), ["target", "instances", "max_rel_error", "passed"],
              [[r.target, r.instances, r.max_rel_error, r.passed] for r in rows])
    print(f"{'target':16s} max_rel_error")
    for r in rows:
        print(f"{r.target:16s} {r.max_rel_error:.3e} {'ok' if r.passed else 'FAIL'}")
    run.summary = {"all_passed": all(r.passed for r in rows)}
    return 0 if run.summary["all_passed"] else 1


def task_train(run: Run, rng: Rng) -> int:
    cfg = run.cfg
    data = load_digits(cfg.data_dir)
    X, y = data.subset(range(10), cfg.max_train, rng.derive(0))
    model = train_settings(cfg).fit(cfg.variant, X, y, rng.derive(1), rng.derive(2))
    model.history["seed"] = cfg.seed
    write_csv(run.path("loss.csv"), ["step", "loss"],
              [[i + 1, float(v)] for i, v in enumerate(model.history["losses"])])
    save_checkpoint(model, run.path("model.ckpt"))
    _write_accuracy(run, model, data)
    return 0


def _write_accuracy(run: Run, model, data) -> None:
    pred = predict(model, data.test_x)
    acc = {t: thresholded_accuracy_from(pred, data.test_y, t) for t in ACCURACY_THRESHOLDS}
    write_csv(run.path("accuracy.csv"), ["variant", "threshold", "accuracy"],
              [[model.variant, t, a] for t, a in acc.items()])
    run.summary = {"accuracy": acc}


def task_eval(run: Run, rng: Rng) -> int:
    if not run.cfg.checkpoint:
        raise ConfigError("checkpoint", "eval needs a checkpoint path")
    model = load_checkpoint(run.cfg.checkpoint)
    _write_accuracy(run, model, load_digits(run.cfg.data_dir))
    return 0


TASKS = {"rings": task_rings, "fool": task_fool, "openset": task_openset,
         "oneclass": task_oneclass, "gradcheck": task_gradcheck, "confmap": task_confmap,
         "train": task_train, "eval": task_eval}


def run(cfg: ExperimentConfig) -> tuple[int, Path]:
    """Execute one configured experiment; returns the exit status and output directory."""
    cfg = cfg.resolved()
    start = time.perf_counter()
    r = Run(cfg)
    status = TASKS[cfg.task](r, Rng(cfg.seed))
    manifest = {
        "task": cfg.task,
        "variant": cfg.variant,
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "config": cfgmod.emit(cfg),
        "versions": {"daeconf": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "wall_time_s": round(time.perf_counter() - start, 3),
        "artifacts": sorted(r.artifacts),
        "summary": r.summary,
        "status": status,
    }
    (r.dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True,
                                                    default=str) + "\n")
    (r.dir / "config.txt").write_text(cfgmod.emit(cfg))
    return status, r.dir


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="daeconf", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="task", required=True, metavar="task")
    for task in cfgmod.TASKS:
        p = sub.add_parser(task, help=f"run the {task} protocol")
        p.add_argument("--config", help="key = value config file")
        for name in cfgmod.FIELD_NAMES:
            if name != "task":
                p.add_argument("--" + name.replace("_", "-"), dest=name, metavar="VALUE",
                               default=None)
    return parser


def config_from_args(argv: list[str] | None = None) -> ExperimentConfig:
    args = vars(build_parser().parse_args(argv))
    task = args.pop("task")
    path = args.pop("config")
    base = cfgmod.load(path) if path else ExperimentConfig()
    overrides = {k: v for k, v in args.items() if v is not None}
    return replace(cfgmod.with_overrides(base, overrides), task=task)


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = config_from_args(argv)
        status, out = run(cfg)
    except ConfigError as exc:
        print(f"daeconf: invalid config: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"daeconf: missing file: {exc}", file=sys.stderr)
        return 3
    except (FormatError, DaeconfError) as exc:
        print(f"daeconf: {exc}", file=sys.stderr)
        return 4
    print(f"outputs written to {out}")
    return status


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: split -> preprocess -> train -> evaluate -> report.

Every stage writes a ``run.json`` next to its outputs holding the config
digest; downstream stages refuse inputs produced under a different digest.
Errors are printed as ``error: <Kind>: <message>`` on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .catalog import Partition, SplitPlan, balance_classes, load_catalog, split_videos
from .classifier import build_model, load_checkpoint_file
from .config import RunConfig
from .errors import ConfigMismatch, DfdetectError, MissingFile
from .evaluator import EvalReport, evaluate, render_report
from .faceset import FaceSet
from .facepipe.dataset import INDEX_NAME, build_face_dataset, read_index
from .facepipe.detect import make_detector
from .trainer import read_history, train

log = logging.getLogger("dfdetect")

RUN_META = "run.json"
PLAN_NAME = "plan.json"
BEST_CKPT = "best.ckpt"
LAST_CKPT = "last.ckpt"
HISTORY_NAME = "history.csv"


def write_meta(folder: Path, cfg: RunConfig, command: str, **extra) -> None:
    folder.mkdir(parents=True, exist_ok=True)
    meta = {"command": command, "config_digest": cfg.digest(), "config": cfg.data,
            "version": __version__, **extra}
    (folder / RUN_META).write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n",
                                   encoding="utf-8")


def check_meta(folder: Path, cfg: RunConfig, what: str) -> dict:
    path = folder / RUN_META
    if not path.is_file():
        raise MissingFile(f"{what} metadata not found: {path} (run the upstream command first)")
    meta = json.loads(path.read_text(encoding="utf-8"))
    if meta.get("config_digest") != cfg.digest():
        raise ConfigMismatch(
            f"{what} in {folder} was produced with config digest {meta.get('config_digest')}, "
            f"current config digest is {cfg.digest()}"
        )
    return meta


def cmd_split(cfg: RunConfig, args) -> int:
    manifest = cfg.path("manifest")
    if manifest is None:
        raise MissingFile("no manifest configured (paths.manifest)")
    catalog = load_catalog(manifest)
    balanced = balance_classes(catalog, cfg.seed)
    split = cfg.data["split"]
    plan = split_videos(balanced, float(split["test_fraction"]), float(split["val_fraction"]),
                        cfg.seed)
    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    plan.save(run_dir / PLAN_NAME)
    write_meta(run_dir, cfg, "split", source_counts={k.slug: v for k, v in catalog.class_counts.items()})
    print(plan.counts_table())
    print(f"plan written to {run_dir / PLAN_NAME}")
    return 0


def cmd_preprocess(cfg: RunConfig, args) -> int:
    run_dir = cfg.run_dir
    check_meta(run_dir, cfg, "split plan")
    plan = SplitPlan.load(run_dir / PLAN_NAME)
    catalog = load_catalog(cfg.path("manifest"))
    detector = make_detector(cfg.data["detector"]["kind"], cfg.detector_path)
    root = cfg.dataset_root
    result = build_face_dataset(catalog, plan, cfg.pipeline_config(), root, detector,
                                workers=int(cfg.data.get("workers", 1)))
    write_meta(root, cfg, "preprocess", samples=len(result.rows), faceless=result.faceless,
               failures=result.failures)
    counts = {}
    for row in result.rows:
        key = (row.partition.value, row.label.slug)
        counts[key] = counts.get(key, 0) + 1
    for (part, label), n in sorted(counts.items()):
        print(f"{part:<6} {label:<5} {n:>7}")
    print(f"{len(result.rows)} face samples indexed in {result.index_path}")
    for vid in result.faceless:
        print(f"warning: faceless video {vid} skipped", file=sys.stderr)
    for failure in result.failures:
        print(f"warning: {failure['error']}: {failure['video_id']}: {failure['message']}",
              file=sys.stderr)
    return 0


def _face_sets(cfg: RunConfig, root: Path, *partitions: Partition):
    rows = read_index(root / INDEX_NAME)
    p = cfg.pipeline_config()
    return [FaceSet.from_index(root, part, rows, p.means, p.stds) for part in partitions]


def cmd_train(cfg: RunConfig, args) -> int:
    root = cfg.dataset_root
    check_meta(root, cfg, "face dataset")
    train_set, val_set = _face_sets(cfg, root, Partition.TRAIN, Partition.VAL)
    train_set.require_nonempty("train")
    val_set.require_nonempty("validation")
    tcfg = cfg.train_config()
    model = build_model(cfg.data["backbone_id"], bool(cfg.data["pretrained"]), seed=cfg.seed)
    out = cfg.run_dir / "train"
    out.mkdir(parents=True, exist_ok=True)
    best, history = train(model, train_set, val_set, tcfg, history_path=out / HISTORY_NAME,
                          config_digest=cfg.digest())
    best.save(out / BEST_CKPT)
    last = best.from_model(model, cfg.digest(), None, epoch=history[-1].epoch,
                           val_accuracy=history[-1].val_accuracy,
                           train_video_ids=best.metadata["train_video_ids"],
                           val_video_ids=best.metadata["val_video_ids"])
    last.save(out / LAST_CKPT)
    write_meta(out, cfg, "train", best_epoch=best.metadata["epoch"],
               best_val_accuracy=best.metadata["val_accuracy"], epochs=len(history),
               best_digest=best.digest, last_digest=last.digest)
    print(f"trained {len(history)} epochs; best epoch {best.metadata['epoch']} "
          f"val_accuracy={best.metadata['val_accuracy']:.4f}")
    print(f"checkpoints in {out}")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    root = cfg.dataset_root
    check_meta(root, cfg, "face dataset")
    train_dir = cfg.run_dir / "train"
    if args.checkpoint:
        ckpt_path, which = Path(args.checkpoint), "user"
    else:
        which = cfg.data["evaluate"]["checkpoint"]
        check_meta(train_dir, cfg, "training run")
        ckpt_path = train_dir / (BEST_CKPT if which == "best" else LAST_CKPT)
    ckpt = load_checkpoint_file(ckpt_path, cfg.data["backbone_id"])
    if ckpt.config_digest and ckpt.config_digest != cfg.digest():
        raise ConfigMismatch(f"checkpoint {ckpt_path} was trained under digest {ckpt.config_digest}")
    (test_set,) = _face_sets(cfg, root, Partition.TEST)
    seen = set(ckpt.metadata.get("train_video_ids", [])) | set(ckpt.metadata.get("val_video_ids", []))
    rows = read_index(root / INDEX_NAME)
    seen |= {r.video_id for r in rows if r.partition != Partition.TEST}
    report = evaluate(ckpt.restore(), test_set, float(cfg.data["evaluate"]["decision_threshold"]),
                      training_video_ids=seen, checkpoint_digest=ckpt.digest)
    out = cfg.run_dir / "report"
    history_path = train_dir / HISTORY_NAME
    history = read_history(history_path) if history_path.is_file() else []
    render_report(report, history, out)
    write_meta(out, cfg, "evaluate", checkpoint=str(ckpt_path), checkpoint_kind=which,
               checkpoint_epoch=ckpt.metadata.get("epoch"))
    _print_metrics(report)
    print(f"report written to {out}")
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    out = cfg.run_dir / "report"
    check_meta(out, cfg, "evaluation report")
    report = EvalReport.load(out)
    history_path = cfg.run_dir / "train" / HISTORY_NAME
    history = read_history(history_path) if history_path.is_file() else []
    for path in render_report(report, history, out):
        print(path)
    return 0


def _print_metrics(report: EvalReport) -> None:
    m = report.matrix
    print(f"tp={m.tp} tn={m.tn} fp={m.fp} fn={m.fn}")
    for name in ("accuracy", "recall", "precision", "f1"):
        value = getattr(report, name)
        print(f"{name:<10} {'undefined' if value is None else f'{value:.4f}'}")


COMMANDS = {
    "split": (cmd_split, "balance the manifest and write a video-level split plan"),
    "preprocess": (cmd_preprocess, "extract, gate, crop and resize faces into a dataset"),
    "train": (cmd_train, "fine-tune the classifier with per-epoch validation"),
    "evaluate": (cmd_evaluate, "blind-test evaluation plus report rendering"),
    "report": (cmd_report, "re-render figures and metrics from a finished evaluation"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML/JSON run config")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the run seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="run directory")
    common.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE",
                        help="override a config value, e.g. train.epochs=5 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="dfdetect", parents=[common],
                                     description="DeepFake face classifier pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "evaluate":
            p.add_argument("--checkpoint", help="evaluate this checkpoint file instead")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler, _ = COMMANDS[args.command]
    try:
        cfg = RunConfig.load(getattr(args, "config", None), getattr(args, "set", ()),
                             seed=getattr(args, "seed", None), out=getattr(args, "out", None))
        return handler(cfg, args)
    except DfdetectError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

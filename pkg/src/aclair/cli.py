"""Command-line entry point.

Subcommands: pretrain, finetune, eval, verify, report.
Exit codes: 0 success, 1 verification failure, 2 config error,
3 missing artifact.
"""

import argparse
import json
import sys
from pathlib import Path

from . import verify as verify_mod
from .attacks import PGDConfig
from .config import (ConfigError, build_dataset, build_finetune_config,
                     build_model, build_train_config, load_config)
from .finetune import (corruption_accuracy, finetune, robust_accuracy,
                       standard_accuracy)
from .corruptions import KINDS
from .models import load_checkpoint, build_encoder_from_checkpoint
from .report import metrics_to_csv, plot_losses, read_metrics, results_to_csv
from .training import pretrain

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_CONFIG = 2
EXIT_MISSING = 3


def _echo_manifest(out_dir, cfg, extra=None):
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg}
    if extra:
        manifest.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))


def cmd_pretrain(args):
    cfg = load_config(args.config)
    out = Path(args.out)
    final = out / "final.ckpt"
    if final.exists() and not args.force:
        print(f"checkpoint already exists at {final}; use --force to rerun")
        return EXIT_OK
    dataset = build_dataset(cfg)
    model, _ = build_model(cfg)
    tcfg = build_train_config(cfg, mode=args.mode, seed=args.seed)
    _echo_manifest(out, cfg, {"stage": "pretrain", "seed": tcfg.seed,
                              "mode": tcfg.mode})
    path = pretrain(dataset, model, tcfg, out)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_finetune(args):
    cfg = load_config(args.config)
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        print(f"checkpoint not found: {ckpt_path}", file=sys.stderr)
        return EXIT_MISSING
    out = Path(args.out)
    clf_path = out / "classifier.ckpt"
    if clf_path.exists() and not args.force:
        print(f"classifier already exists at {clf_path}; use --force to rerun")
        return EXIT_OK
    dataset = build_dataset(cfg)
    fcfg = build_finetune_config(cfg, seed=args.seed)
    payload = load_checkpoint(ckpt_path)
    _echo_manifest(out, cfg, {"stage": "finetune", "mode": fcfg.mode})
    clf = finetune(payload, dataset, fcfg)
    import torch
    torch.save({"classifier_state": clf.state_dict(),
                "encoder_spec": payload["spec"],
                "num_classes": clf.head.out_features,
                "branch": clf.branch.value,
                "mode": fcfg.mode}, clf_path)
    print(f"wrote {clf_path}")
    return EXIT_OK


def _load_classifier(path):
    import torch
    from .finetune import Classifier
    from .models import BranchTag, DualBranchEncoder, EncoderSpec
    payload = torch.load(path, map_location="cpu", weights_only=False)
    encoder = DualBranchEncoder(EncoderSpec(**payload["encoder_spec"]))
    clf = Classifier(encoder, payload["num_classes"],
                     BranchTag(payload["branch"]))
    clf.load_state_dict(payload["classifier_state"])
    clf.eval()
    return clf, payload.get("mode", "SLF")


def cmd_eval(args):
    cfg = load_config(args.config)
    clf_path = Path(args.classifier)
    if not clf_path.exists():
        print(f"classifier not found: {clf_path}", file=sys.stderr)
        return EXIT_MISSING
    out = Path(args.out)
    dataset = build_dataset(cfg)
    clf, mode = _load_classifier(clf_path)
    attack = PGDConfig(eps=cfg["attack"]["eps"], steps=20,
                       alpha=cfg["attack"]["alpha"], random_start=True)
    results = {
        "protocol": mode,
        "dataset": cfg["dataset"]["kind"],
        "standard_acc": standard_accuracy(clf, dataset),
        "robust_acc": robust_accuracy(clf, dataset, attack, seed=args.seed),
        "corruption": corruption_accuracy(clf, dataset, KINDS, seed=args.seed),
    }
    _echo_manifest(out, cfg, {"stage": "eval"})
    (out / "results.json").write_text(json.dumps(results, indent=2))
    results_to_csv(results, out / "results.csv")
    print(json.dumps({"standard_acc": results["standard_acc"],
                      "robust_acc": results["robust_acc"]}))
    return EXIT_OK


def cmd_verify(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    all_ok = True
    with open(out / "verify.jsonl", "w") as f:
        for s in range(args.seeds):
            records, ok = verify_mod.run_all(
                args.seed + 100 * s,
                break_decomposition=args.break_decomposition)
            all_ok = all_ok and ok
            for r in records:
                r["seed"] = args.seed + 100 * s
                f.write(json.dumps(r) + "\n")
                status = "PASS" if r["pass"] else "FAIL"
                print(f"[{status}] {r['check']}: max_error={r['max_error']:.3g}")
    return EXIT_OK if all_ok else EXIT_VERIFY_FAIL


def cmd_report(args):
    out = Path(args.out)
    metrics_path = out / "metrics.jsonl"
    if not metrics_path.exists():
        print(f"metrics not found: {metrics_path}", file=sys.stderr)
        return EXIT_MISSING
    records = read_metrics(metrics_path)
    if not records:
        print("metrics file is empty", file=sys.stderr)
        return EXIT_MISSING
    metrics_to_csv(records, out / "metrics.csv")
    plot_losses(records, out / "loss_curves.png")
    print(f"wrote {out / 'metrics.csv'} and {out / 'loss_curves.png'}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="aclair")
    sub = p.add_subparsers(dest="command", required=True)

    pre = sub.add_parser("pretrain", help="run self-supervised pre-training")
    pre.add_argument("--config", required=True)
    pre.add_argument("--out", required=True)
    pre.add_argument("--seed", type=int, default=None)
    pre.add_argument("--mode", choices=["acl", "dynacl"], default=None)
    pre.add_argument("--force", action="store_true")
    pre.set_defaults(func=cmd_pretrain)

    fin = sub.add_parser("finetune", help="finetune a classifier from a checkpoint")
    fin.add_argument("--config", required=True)
    fin.add_argument("--checkpoint", required=True)
    fin.add_argument("--out", required=True)
    fin.add_argument("--seed", type=int, default=None)
    fin.add_argument("--force", action="store_true")
    fin.set_defaults(func=cmd_finetune)

    ev = sub.add_parser("eval", help="robust and corruption evaluation")
    ev.add_argument("--config", required=True)
    ev.add_argument("--classifier", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--seed", type=int, default=0)
    ev.set_defaults(func=cmd_eval)

    ver = sub.add_parser("verify", help="run the identity verification suite")
    ver.add_argument("--out", default="verify_out")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--seeds", type=int, default=1)
    ver.add_argument("--break-decomposition", action="store_true",
                     help="negative-control fault injection")
    ver.set_defaults(func=cmd_verify)

    rep = sub.add_parser("report", help="render metrics CSV and plots")
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

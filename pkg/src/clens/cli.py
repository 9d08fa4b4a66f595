"""Thin command-line client for the clens service.

Every subcommand builds one request and posts it to the service API. By
default the app runs in-process (no socket); `--server URL` or the
CLENS_SERVER env var points the same commands at a remote daemon started
with `clens serve`.

Exit codes: 0 success, 2 validation failure, 3 I/O or format error,
4 configuration/usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import yaml

from . import __version__
from .errors import EXIT_CODES


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"clens: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CODES["config"])


def _window(text: str):
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b, got {text!r}")


def _thresholds(text: str):
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}")


def _csv_list(text: str):
    return [item for item in text.split(",") if item]


def _archs_list(text: str):
    # families split on "|", hidden widths inside a family on ","
    # e.g. "16,8|6" -> mlp-16x8 and mlp-6; "" -> logistic regression
    return text.split("|")


def build_parser() -> _Parser:
    parser = _Parser(prog="clens", description=__doc__)
    parser.add_argument("--version", action="version", version=f"clens {__version__}")
    parser.add_argument(
        "--server",
        default=os.environ.get("CLENS_SERVER") or None,
        help="base URL of a running clens service (default: run in-process)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate synthetic dataset bundles")
    p.add_argument("--preset", default="mixture")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="pipeline config YAML (synth section)")

    p = sub.add_parser("train", help="train a toy ensemble on generated bundles")
    p.add_argument("--data", required=True, help="directory written by gen")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--archs", type=_archs_list,
                   help="families split by '|', widths by ',': '16,8|6'; '' = logreg")
    p.add_argument("--arch-seeds", type=_csv_list)
    p.add_argument("--epoch-zero", action="store_true", help="log a pre-training snapshot")
    p.add_argument("--config", help="pipeline config YAML (trainer section)")

    p = sub.add_parser("score", help="entropy/confusion score tables")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=_window)
    p.add_argument("--tail-start", type=int, default=10)
    p.add_argument("--no-tail", action="store_true", help="skip the entropy_std column")
    p.add_argument("--epoch", type=int, action="append", default=[],
                   help="add an s_t column (repeatable)")
    p.add_argument("--scoring-runs", type=_csv_list)

    p = sub.add_parser("partition", help="bin confusion scores, export ratios/profiles")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--window", type=_window)
    p.add_argument("--scoring-runs", type=_csv_list)

    p = sub.add_parser("predict", help="predict OOD accuracies from ID bins")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--window", type=_window)
    p.add_argument("--epoch", type=int, help="partition by a single epoch's entropies")
    p.add_argument("--scoring-runs", type=_csv_list)
    p.add_argument("--format", choices=("csv", "structured"), default="csv")

    p = sub.add_parser("phases", help="detect training phases from metrics")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--smoothing", type=int, default=3)
    p.add_argument("--delta", type=float, default=0.005)

    p = sub.add_parser("fit", help="fit per-group accuracy and collinearity models")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--bins", type=int, default=40)
    p.add_argument("--window", type=_window)
    p.add_argument("--thresholds", type=_thresholds, help="correct-count split lo:hi")
    p.add_argument("--scoring-runs", type=_csv_list)

    p = sub.add_parser("extremes", help="top-k lowest/highest confusion samples")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--which", choices=("lowest", "highest"), default="lowest")
    p.add_argument("--mistakes-only", action="store_true")
    p.add_argument("--window", type=_window)
    p.add_argument("--scoring-runs", type=_csv_list)
    p.add_argument("--out")

    p = sub.add_parser("report", help="aggregate prior artifacts into one report")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "structured"), default="structured")

    p = sub.add_parser("serve", help="run the clens service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    return parser


def _load_config_section(path: str | None, section: str) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
    except OSError as exc:
        print(f"clens: cannot read config {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_CODES["config"])
    got = doc.get(section, {})
    if not isinstance(got, dict):
        print(f"clens: config section '{section}' must be a mapping", file=sys.stderr)
        raise SystemExit(EXIT_CODES["config"])
    return got


def _build_request(args) -> tuple[str, dict]:
    if args.command == "gen":
        synth = _load_config_section(args.config, "synth")
        body = {
            "out_dir": args.out,
            "preset": synth.get("preset", args.preset),
            "seed": args.seed,
            "sizes": synth.get("sizes"),
            "params": {
                k: v for k, v in synth.items() if k not in ("preset", "sizes")
            },
        }
        return "gen", body
    if args.command == "train":
        section = _load_config_section(args.config, "trainer")
        body = {
            "data_dir": args.data,
            "out_dir": args.out,
            "seed": args.seed if args.seed is not None else section.get("seed"),
            "epochs": args.epochs if args.epochs is not None else section.get("epochs"),
            "batch_size": args.batch if args.batch is not None else section.get("batch_size"),
            "learning_rate": args.lr if args.lr is not None else section.get("learning_rate"),
            "momentum": args.momentum if args.momentum is not None else section.get("momentum"),
            "archs": args.archs if args.archs is not None else section.get("archs"),
            "arch_seeds": (
                [int(s) for s in args.arch_seeds]
                if args.arch_seeds is not None
                else section.get("arch_seeds")
            ),
            "include_epoch_zero": args.epoch_zero,
        }
        return "train", body
    if args.command == "score":
        return "score", {
            "manifest_path": args.manifest,
            "out_dir": args.out,
            "window": args.window,
            "tail_start": None if args.no_tail else args.tail_start,
            "epochs": args.epoch,
            "scoring_ids": args.scoring_runs,
        }
    if args.command == "partition":
        return "partition", {
            "manifest_path": args.manifest,
            "out_dir": args.out,
            "bins": args.bins,
            "window": args.window,
            "scoring_ids": args.scoring_runs,
        }
    if args.command == "predict":
        return "predict", {
            "manifest_path": args.manifest,
            "out_dir": args.out,
            "bins": args.bins,
            "window": args.window,
            "epoch": args.epoch,
            "scoring_ids": args.scoring_runs,
            "format": args.format,
        }
    if args.command == "phases":
        return "phases", {
            "manifest_path": args.manifest,
            "out_dir": args.out,
            "smoothing": args.smoothing,
            "delta": args.delta,
        }
    if args.command == "fit":
        return "fit", {
            "manifest_path": args.manifest,
            "out_dir": args.out,
            "bins": args.bins,
            "window": args.window,
            "thresholds": args.thresholds,
            "scoring_ids": args.scoring_runs,
        }
    if args.command == "extremes":
        return "extremes", {
            "manifest_path": args.manifest,
            "dataset": args.dataset,
            "k": args.k,
            "which": args.which,
            "mistakes_only": args.mistakes_only,
            "window": args.window,
            "scoring_ids": args.scoring_runs,
            "out_dir": args.out,
        }
    if args.command == "report":
        return "report", {"out_dir": args.out, "format": args.format}
    raise AssertionError(f"unhandled command {args.command}")


def _client(server: str | None):
    if server:
        import httpx

        return httpx.Client(base_url=server, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from starlette.testclient import TestClient

    from .service.app import create_app

    return TestClient(create_app(), raise_server_exceptions=False)


def _print_summary(command: str, body: dict) -> None:
    if command == "gen":
        for ds in body["datasets"]:
            print(f"wrote {ds['role']:<5} {ds['name']:<16} n={ds['n_samples']} -> {ds['bundle_dir']}")
    elif command == "train":
        for run in body["runs"]:
            acc = run.get("final_id_accuracy")
            acc_s = "" if acc is None else f" id_acc={acc:.4f}"
            print(f"trained {run['model_id']:<16} params={run['param_count']}{acc_s}")
        print(f"manifest: {body['manifest_path']}")
    elif command == "score":
        for s in body["summaries"]:
            std = s.get("mean_entropy_std")
            std_s = "" if std is None else f" mean_std={std:.4f}"
            print(f"{s['dataset']:<16} n={s['n_samples']} mean_confusion={s['mean_confusion']:.4f}{std_s}")
    elif command == "partition":
        for name, ratios in body["ratios"].items():
            top = max(range(len(ratios)), key=lambda k: ratios[k])
            print(f"{name:<16} bins={body['bins']} peak_bin={top} peak_ratio={ratios[top]:.3f}")
    elif command == "predict":
        for name, mean in body["mean_confusion"].items():
            print(f"mean_confusion[{name}] = {mean:.4f}")
        for row in body["rows"]:
            actual = row.get("actual")
            actual_s = "" if actual is None else f" actual={actual:.4f} residual={row['residual']:+.4f}"
            print(f"{row['model_id']:<16} {row['ood']:<14} predicted={row['predicted']:.4f}{actual_s}")
    elif command == "phases":
        for row in body["rows"]:
            print(f"{row['model_id']:<16} t1={row.get('t1')} t2={row.get('t2')}")
    elif command == "fit":
        for row in body["group_fits"]:
            print(f"{row['model_id']:<16} alpha={row['fitted_alpha']:.4f} rss={row['fit_rss']:.3e}")
        if body.get("collinearity"):
            c = body["collinearity"]
            print(
                "shared: minacc_easy={} s_easy={} minacc_med={} s_med={}".format(
                    c["minacc_easy"], c["s_easy"], c["minacc_med"], c["s_med"]
                )
            )
        elif body.get("collinearity_skipped"):
            print(f"collinearity skipped: {body['collinearity_skipped']}")
    elif command == "extremes":
        for row in body["rows"]:
            extras = []
            if row.get("label") is not None:
                extras.append(f"label={row['label']}")
            if row.get("ensemble_pred") is not None:
                extras.append(f"pred={row['ensemble_pred']}")
            if row.get("tags"):
                extras.append(f"tags={row['tags']}")
            print(f"#{row['rank']:<3} sample={row['sample_index']:<6} confusion={row['confusion']:.4f} " + " ".join(extras))
    elif command == "report":
        print(f"report: {body['report_path']} sections={','.join(body['sections'])}")
    for artifact in body.get("artifacts", []):
        print(f"artifact: {artifact}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "serve":
        import uvicorn

        from .service.app import create_app

        uvicorn.run(create_app(), host=args.host, port=args.port)
        return 0

    command, body = _build_request(args)
    with _client(args.server) as client:
        try:
            response = client.post(f"/v1/{command}", json=body)
        except Exception as exc:  # connection-level failure
            print(f"clens: cannot reach service: {exc}", file=sys.stderr)
            return EXIT_CODES["io"]
        if response.status_code == 200:
            _print_summary(command, response.json())
            return 0
        try:
            detail = response.json().get("detail", {})
        except json.JSONDecodeError:
            detail = {}
        if isinstance(detail, dict) and "category" in detail:
            print(f"clens: {detail['code']}: {detail['message']}", file=sys.stderr)
            return EXIT_CODES.get(detail["category"], EXIT_CODES["validation"])
        print(f"clens: service error {response.status_code}: {response.text}", file=sys.stderr)
        return EXIT_CODES["config"]


if __name__ == "__main__":
    sys.exit(main())

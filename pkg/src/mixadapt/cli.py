"""Command-line client for the service.

Every subcommand builds a request, sends it to the HTTP service, and writes
the results into a run directory. By default the service runs embedded in
this process; pass ``--server URL`` to talk to a remote instance started
with ``mixadapt serve``. The run-directory root comes from --out or the
MIXADAPT_RUN_ROOT environment variable (default ./runs).
"""

from __future__ import annotations

import argparse
import base64
import json
import os
import sys
from pathlib import Path

from .config import (
    ExperimentConfig,
    apply_overrides,
    config_to_dict,
    parse_config,
    preset_config,
)
from .data import load_labeled_array, dataset_to_csv
from .errors import MixAdaptError


def _client(server: str | None):
    if server:
        import httpx
        return httpx.Client(base_url=server, timeout=None)
    import warnings
    with warnings.catch_warnings():
        # starlette's embedded test transport warns (as a UserWarning
        # subclass) about its httpx pin; irrelevant to this client.
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient
    from .service.app import create_app
    return TestClient(create_app())


def _post(client, path: str, payload: dict) -> dict:
    response = client.post(path, json=payload)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except Exception:
            detail = response.text
        raise MixAdaptError(f"service returned {response.status_code} for {path}: {detail}")
    return response.json()


def _load_config(args) -> ExperimentConfig:
    preset = getattr(args, "preset", None)
    cfg = preset_config(preset) if preset else ExperimentConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise MixAdaptError(f"config file not found: {path}")
        cfg = parse_config(path.read_text(), base=cfg)
    if getattr(args, "set", None):
        cfg = apply_overrides(cfg, args.set)
    if getattr(args, "seed", None) is not None:
        cfg = apply_overrides(cfg, [f"seed={args.seed}"])
    return cfg


def _run_dir(args, command: str) -> Path:
    if getattr(args, "out", None):
        path = Path(args.out)
    else:
        root = Path(os.environ.get("MIXADAPT_RUN_ROOT", "runs"))
        path = root / command
    path.mkdir(parents=True, exist_ok=True)
    return path


def _dataset_payload(path: str, domain: str, class_count: int | None) -> dict:
    ds = load_labeled_array(path, domain=domain, class_count=class_count)
    return {"csv": dataset_to_csv(ds), "domain": domain, "class_count": ds.class_count}


def _write(path: Path, text: str) -> None:
    path.write_bytes(text.encode())
    print(f"wrote {path}")


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    client = _client(args.server)
    out = _run_dir(args, "gen-data")
    body = _post(client, "/datasets/generate",
                 {"config": {"preset": args.preset, **config_to_dict(cfg)}})
    _write(out / "source.csv", body["source_csv"])
    _write(out / "target.csv", body["target_csv"])
    manifest = dict(body["manifest"])
    manifest["files"] = {"source": "source.csv", "target": "target.csv"}
    _write(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_train_source(args) -> int:
    cfg = _load_config(args)
    client = _client(args.server)
    out = _run_dir(args, "train-source")
    payload = {
        "config": config_to_dict(cfg),
        "source": _dataset_payload(args.source, "source", cfg.class_count),
    }
    body = _post(client, "/train/source", payload)
    _write(out / "report.json",
           json.dumps(body["report"], sort_keys=True, indent=2) + "\n")
    (out / "source.ckpt").write_bytes(base64.b64decode(body["checkpoint_b64"]))
    print(f"wrote {out / 'source.ckpt'}")
    final = body["report"].get("final_accuracy")
    print(f"source training done: final accuracy {final}")
    return 0


def cmd_adapt(args) -> int:
    cfg = _load_config(args)
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise MixAdaptError(f"source checkpoint not found: {ckpt_path}")
    client = _client(args.server)
    out = _run_dir(args, "adapt")
    payload = {
        "config": config_to_dict(cfg),
        "checkpoint_b64": base64.b64encode(ckpt_path.read_bytes()).decode(),
        "source": _dataset_payload(args.source, "source", cfg.class_count),
        "target": _dataset_payload(args.target, "target", cfg.class_count),
        "shots": args.shots,
        "run_seed": args.run_seed,
    }
    body = _post(client, "/adapt", payload)
    _write(out / "report.json",
           json.dumps(body["report"], sort_keys=True, indent=2) + "\n")
    (out / "adapted.ckpt").write_bytes(base64.b64decode(body["checkpoint_b64"]))
    print(f"wrote {out / 'adapted.ckpt'}")
    print(f"adaptation done: baseline {body['baseline_accuracy']}, "
          f"final {body['final_accuracy']}")
    return 0


def cmd_shots_curve(args) -> int:
    cfg = _load_config(args)
    try:
        grid = [int(s) for s in args.shots.split(",") if s.strip()]
    except ValueError:
        raise MixAdaptError(f"--shots must be a comma list of integers, got {args.shots!r}")
    client = _client(args.server)
    out = _run_dir(args, "shots-curve")
    payload = {
        "config": config_to_dict(cfg),
        "source": _dataset_payload(args.source, "source", cfg.class_count),
        "target": _dataset_payload(args.target, "target", cfg.class_count),
        "shots_grid": grid,
        "n_seeds": args.seeds,
    }
    body = _post(client, "/shots-curve", payload)
    _write(out / "curve.csv", body["csv"])
    summary = {"baseline_accuracy": body["baseline_accuracy"], "rows": body["rows"],
               "source_report": body["source_report"]}
    _write(out / "report.json", json.dumps(summary, sort_keys=True, indent=2) + "\n")
    for row in body["rows"]:
        print(f"shots={row['shots']}: mean={row['mean_accuracy']:.4f} "
              f"std={row['std_accuracy']:.4f} best={row['best_accuracy']:.4f}")
    return 0


def cmd_export_embeddings(args) -> int:
    _load_config(args)  # the embedding dump needs no settings; still validate them
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise MixAdaptError(f"checkpoint not found: {ckpt_path}")
    client = _client(args.server)
    payload = {
        "checkpoint_b64": base64.b64encode(ckpt_path.read_bytes()).decode(),
        "dataset": _dataset_payload(args.data, args.domain, None),
        "encoder": args.encoder,
    }
    body = _post(client, "/embeddings/export", payload)
    out_path = Path(args.out) if args.out else _run_dir(args, "embeddings") / "embeddings.csv"
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _write(out_path, body["csv"])
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    uvicorn.run("mixadapt.service.app:app", host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixadapt",
        description="Domain adaptation into a shared Gaussian-mixture embedding.")
    parser.add_argument("--server", help="base URL of a running service; "
                                         "default runs the service in-process")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="flat key = value config file")
            p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                           help="override a single config key")
        p.add_argument("--out", help="output directory (default $MIXADAPT_RUN_ROOT/<cmd>)")

    p = sub.add_parser("gen-data", help="generate a synthetic domain pair")
    p.add_argument("--preset", default="rotated-blobs")
    p.add_argument("--seed", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train-source", help="fit the source model")
    p.add_argument("--source", required=True, help="labeled source dataset file")
    common(p)
    p.set_defaults(func=cmd_train_source)

    p = sub.add_parser("adapt", help="adapt the target model from a source checkpoint")
    p.add_argument("--checkpoint", required=True, help="source checkpoint file")
    p.add_argument("--source", required=True, help="labeled source dataset file")
    p.add_argument("--target", required=True, help="labeled target dataset file")
    p.add_argument("--shots", type=int, default=None, help="labels per class")
    p.add_argument("--run-seed", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_adapt)

    p = sub.add_parser("shots-curve", help="accuracy vs labels-per-class")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--shots", default="0,1,5,10", help="comma list, e.g. 0,1,5")
    p.add_argument("--seeds", type=int, default=10, help="repeats per grid point")
    common(p)
    p.set_defaults(func=cmd_shots_curve)

    p = sub.add_parser("export-embeddings", help="dump posterior-mean coordinates")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--domain", default="target", choices=["source", "target"])
    p.add_argument("--encoder", default="auto", choices=["auto", "source", "target"])
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single config key")
    p.add_argument("--out", help="output CSV path")
    p.set_defaults(func=cmd_export_embeddings)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MixAdaptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: train, corrupt, fuse, export, synth.

Exit codes: 0 success, 2 usage/config errors, 3 data/artifact errors,
4 domain infeasibility. All randomness flows from the run seed, so a rerun
with the same config produces byte-identical metrics output.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import opinions
from .data import (
    DataError,
    DomainError,
    MultiViewDataset,
    generate_missing_mask,
    inject_conflict,
    load_dataset,
    save_dataset,
    split,
    synthesize_dataset,
)
from .networks import save_checkpoint
from .pipeline import TrainConfig, evaluate, train_umae_f, train_umae_j, train_umae_v

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DOMAIN = 4

PHASES = ("umae_f", "umae_v", "umae_j")


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        if p.suffix == ".toml":
            with open(p, "rb") as fh:
                return tomllib.load(fh)
        return json.loads(p.read_text())
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from exc


def _build_dataset(cfg: dict, seed: int) -> MultiViewDataset:
    ds_cfg = cfg.get("dataset")
    if not ds_cfg:
        raise ConfigError("config must contain a [dataset] section with a path or synthetic spec")
    if "path" in ds_cfg:
        return load_dataset(ds_cfg["path"])
    if "synthetic" in ds_cfg:
        s = ds_cfg["synthetic"]
        return synthesize_dataset(
            n=int(s.get("n", 2000)),
            v=int(s.get("views", 6)),
            k=int(s.get("classes", 10)),
            d=int(s.get("dim", 16)),
            separation=float(s.get("separation", 3.0)),
            seed=int(s.get("seed", seed)),
        )
    raise ConfigError("dataset section needs either 'path' or a 'synthetic' table")


def _apply_corruption(ds: MultiViewDataset, cfg: dict, seed: int) -> MultiViewDataset:
    cor = cfg.get("corruption", {})
    eta = float(cor.get("eta", 0.0))
    fraction = float(cor.get("conflict_fraction", 0.0))
    cor_seed = int(cor.get("seed", seed))
    if fraction > 0.0:
        ds, _ = inject_conflict(ds, fraction, cor_seed)
    if eta > 0.0:
        mask = generate_missing_mask(ds.n_samples, ds.n_views, eta, cor_seed)
        ds = MultiViewDataset(ds.views, ds.labels, mask, ds.n_classes, ds.name)
    return ds


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    seed = int(cfg.get("seed", 0))
    train_cfg = TrainConfig(**{**cfg.get("train", {}), "seed": seed})
    ds = _build_dataset(cfg, seed)
    ds = _apply_corruption(ds, cfg, seed)
    ds_train, ds_test = split(ds, float(cfg.get("test_fraction", 0.2)), seed)

    out_dir = Path(cfg.get("output_dir", "runs/default"))
    out_dir.mkdir(parents=True, exist_ok=True)

    model = None
    for phase in PHASES:
        if phase == "umae_f":
            model, report = train_umae_f(ds_train, train_cfg)
        elif phase == "umae_v":
            model, report = train_umae_v(ds_train, model, train_cfg)
        else:
            model, report = train_umae_j(ds_train, model, train_cfg)
        imputer = "noise" if phase == "umae_f" else "vae"
        metrics, arrays = evaluate(ds_test, model, train_cfg, return_arrays=True,
                                   imputer=imputer)
        report.test_accuracy = metrics["accuracy"]
        report.mean_uncertainty = metrics["mean_uncertainty"]
        report.conflict_matrix = metrics["mean_conflict_matrix"]
        with open(out_dir / f"phase_{phase}.jsonl", "w") as fh:
            for rec in report.epochs:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        save_checkpoint(out_dir / f"checkpoint_{phase}.npz", model)
        np.savez(
            out_dir / f"eval_{phase}.npz",
            uncertainty=arrays["uncertainty"],
            fused_evidence=arrays["fused_evidence"],
            predicted=arrays["predicted"],
            conflict_matrix=np.asarray(metrics["mean_conflict_matrix"]),
        )

    final_metrics = evaluate(ds_test, model, train_cfg)
    (out_dir / "metrics.json").write_text(json.dumps(final_metrics, sort_keys=True, indent=2))
    print(f"run complete: accuracy={final_metrics['accuracy']:.4f} -> {out_dir}")
    return EXIT_OK


def cmd_corrupt(args) -> int:
    ds = load_dataset(args.dataset)
    out = Path(args.out)
    log: list[dict] = []
    if args.conflict_fraction > 0.0:
        ds, log = inject_conflict(ds, args.conflict_fraction, args.seed)
    if args.eta > 0.0:
        mask = generate_missing_mask(ds.n_samples, ds.n_views, args.eta, args.seed)
        ds = MultiViewDataset(ds.views, ds.labels, mask, ds.n_classes, ds.name)
    save_dataset(ds, out)
    with open(out / "conflict_log.jsonl", "w") as fh:
        for rec in log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    print(f"wrote corrupted dataset to {out} ({len(log)} conflict rows, eta={args.eta})")
    return EXIT_OK


def cmd_fuse(args) -> int:
    path = Path(args.opinions)
    if not path.exists():
        raise ConfigError(f"opinions file not found: {path}")
    try:
        records = json.loads(path.read_text())
        if isinstance(records, dict):
            records = [records]
        ws = [opinions.Opinion.from_json(rec) for rec in records]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"malformed opinions file {path}: {exc}") from exc
    if not ws:
        raise ConfigError("opinions file contains no opinions")
    ks = {w.num_classes for w in ws}
    if len(ks) > 1:
        raise DomainError(f"opinions disagree on the number of classes: {sorted(ks)}")
    fused = opinions.fuse_views(ws, mode=args.mode)
    out = {
        "fused": fused.to_json(),
        "projected_probability": opinions.project_probability(fused).tolist(),
    }
    if len(ws) >= 2:
        out["conflict_matrix"] = opinions.conflict_matrix(ws).tolist()
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_export(args) -> int:
    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise DataError(f"run directory not found: {run_dir}")
    wrote = 0
    for phase in PHASES:
        eval_path = run_dir / f"eval_{phase}.npz"
        if not eval_path.exists():
            raise DataError(f"missing run artifact: {eval_path}")
        with np.load(eval_path) as data:
            if args.what == "uncertainty":
                np.savetxt(run_dir / f"uncertainty_{phase}.csv", data["uncertainty"],
                           delimiter=",", fmt="%.17g")
            elif args.what == "conflict":
                np.savetxt(run_dir / f"conflict_{phase}.csv", data["conflict_matrix"],
                           delimiter=",", fmt="%.17g")
            else:
                np.savetxt(run_dir / f"evidence_{phase}.csv", data["fused_evidence"],
                           delimiter=",", fmt="%.17g")
        wrote += 1
    print(f"exported {args.what} CSVs for {wrote} phases to {run_dir}")
    return EXIT_OK


def cmd_synth(args) -> int:
    ds = synthesize_dataset(args.n, args.views, args.classes, args.dim,
                            args.separation, args.seed)
    save_dataset(ds, args.out)
    print(f"wrote synthetic dataset ({args.n} samples, {args.views} views, "
          f"{args.classes} classes) to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="apln",
        description="Conflict-aware evidential fusion for incomplete multi-view classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the three training phases from a config file")
    p.add_argument("config", help="TOML or JSON run configuration")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("corrupt", help="apply missing-mask and conflict corruption to a dataset")
    p.add_argument("dataset", help="input dataset directory")
    p.add_argument("--eta", type=float, default=0.0, help="target missing rate (default 0)")
    p.add_argument("--conflict-fraction", type=float, default=0.0,
                   help="fraction of rows to corrupt with a wrong-class donor view (default 0)")
    p.add_argument("--seed", type=int, default=0, help="corruption seed (default 0)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("fuse", help="fuse opinions from a JSON file and print the result")
    p.add_argument("opinions", help="JSON file with a list of opinion objects")
    p.add_argument("--mode", choices=["balanced", "sequential"], default="balanced",
                   help="fusion mode (default balanced)")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("export", help="export run arrays as CSV for external plotting")
    p.add_argument("run_dir", help="completed run directory")
    p.add_argument("--what", choices=["uncertainty", "conflict", "evidence"],
                   default="uncertainty", help="which arrays to export (default uncertainty)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("synth", help="generate a synthetic multi-view dataset")
    p.add_argument("--n", type=int, default=2000, help="number of samples (default 2000)")
    p.add_argument("--views", type=int, default=6, help="number of views (default 6)")
    p.add_argument("--classes", type=int, default=10, help="number of classes (default 10)")
    p.add_argument("--dim", type=int, default=16, help="per-view feature dimension (default 16)")
    p.add_argument("--separation", type=float, default=3.0,
                   help="class-mean norm; larger is easier (default 3.0)")
    p.add_argument("--seed", type=int, default=0, help="generator seed (default 0)")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TypeError as exc:
        print(f"error: invalid config value: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

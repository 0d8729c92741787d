"""Command-line surface: synth, classify, stats, graph, split, sample-pairs,
loss-check.

Every command reads an optional flat ``key = value`` config file (strict
schema, unknown keys rejected), lets CLI flags override file values, writes
its artifacts with a version + config-hash header, and prints exactly one
machine-readable JSON summary line on success.  Outputs carry no
timestamps, so identical inputs give byte-identical files.

Exit codes: 0 success, 1 input error, 2 infeasibility, 3 internal error.
Log verbosity is controlled only by the GEOCLR_LOG environment variable
(debug / info / warning, default warning).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

from . import __version__
from .contrastive import (
    gclr_grad,
    gclr_loss,
    read_embedding_file,
)
from .correspondence import (
    BevGridSpec,
    pair_distances,
    read_pair_file,
    sample_pairs,
    write_pair_file,
)
from .errors import (
    CorruptFile,
    EmptyFile,
    GeoclrError,
    InfeasibleError,
    InputError,
    InternalError,
)
from .geometry import FootprintConfig
from .ingest import Dataset, parse_pose_file, write_pose_csv
from .pose_graph import build_pose_graph, save_graph
from .split_gen import generate_splits, save_manifest, verify_manifest
from .synth import SceneSpec, generate_scene
from .traversal_classify import build_log_graph, classify, intersection_histogram

log = logging.getLogger("geoclr")


@dataclass(frozen=True)
class RunConfig:
    """Effective configuration of one CLI invocation."""

    input: str = ""
    output: str = ""
    lat_extent: float = 15.0
    lon_extent: float = 30.0
    grid_rows: int = 100
    grid_cols: int = 50
    grid_lon_min: float = -30.0
    grid_lon_max: float = 30.0
    grid_lat_min: float = -15.0
    grid_lat_max: float = 15.0
    iou_min: float = 0.3
    iou_max: float = 0.9
    cross_only: bool = True
    percents: tuple[float, ...] = (0.025, 0.05, 0.10, 0.20)
    val_frac: float = 0.10
    n_anchors: int = 32
    n_negatives: int = 64
    tau: float = 0.07
    lambda_sup: float = 1.0
    lambda_gclr: float = 1.0
    seed: int = 0

    def footprint_config(self) -> FootprintConfig:
        return FootprintConfig(self.lat_extent, self.lon_extent)

    def grid_spec(self) -> BevGridSpec:
        return BevGridSpec(
            self.grid_rows,
            self.grid_cols,
            (self.grid_lon_min, self.grid_lon_max),
            (self.grid_lat_min, self.grid_lat_max),
        )

    def dump(self, include_paths: bool = True) -> str:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            if not include_paths and f.name in ("input", "output"):
                continue
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        # Paths stay out of the hash so identical parameters give identical
        # artifact headers regardless of where files live.
        return hashlib.sha256(self.dump(include_paths=False).encode("utf-8")).hexdigest()[:12]

    def header_lines(self) -> tuple[str, ...]:
        return (f"geoclr v{__version__} config={self.hash()}",)


_CONFIG_PARSERS = {
    "input": str,
    "output": str,
    "lat_extent": float,
    "lon_extent": float,
    "grid_rows": int,
    "grid_cols": int,
    "grid_lon_min": float,
    "grid_lon_max": float,
    "grid_lat_min": float,
    "grid_lat_max": float,
    "iou_min": float,
    "iou_max": float,
    "cross_only": lambda s: s.strip().lower() in ("1", "true", "yes"),
    "percents": lambda s: tuple(float(x) for x in s.split(",") if x.strip()),
    "val_frac": float,
    "n_anchors": int,
    "n_negatives": int,
    "tau": float,
    "lambda_sup": float,
    "lambda_gclr": float,
    "seed": int,
}


def load_config(path) -> RunConfig:
    """Parse a flat key = value config file with strict schema validation."""
    cfg = RunConfig()
    updates = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputError(f"{path}:{line_no}: expected 'key = value'")
        key = key.strip()
        if key not in _CONFIG_PARSERS:
            raise InputError(f"{path}:{line_no}: unknown config key {key!r}")
        try:
            updates[key] = _CONFIG_PARSERS[key](value.strip())
        except ValueError as e:
            raise InputError(f"{path}:{line_no}: bad value for {key!r}: {e}")
    return replace(cfg, **updates)


def _merge_config(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            overrides[f.name] = tuple(flag) if f.name == "percents" else flag
    return replace(cfg, **overrides)


def _summary(obj: dict) -> None:
    print(json.dumps(obj, sort_keys=True))


def _load_dataset(cfg: RunConfig) -> Dataset:
    if not cfg.input:
        raise InputError("missing input pose file (--input or config)")
    d = parse_pose_file(cfg.input)
    log.info("loaded %d logs, %d poses from %s", len(d.traversals), d.total_poses, cfg.input)
    return d


def _write_text(path, lines, cfg: RunConfig) -> None:
    header = [f"# {h}" for h in cfg.header_lines()]
    Path(path).write_text("\n".join(header + lines) + "\n", encoding="utf-8")


def _parse_key_arg(token: str) -> tuple[str, int]:
    log_id, sep, frame = token.rpartition(":")
    if not sep or not log_id:
        raise InputError(f"pose key must look like log_id:frame_id, got {token!r}")
    try:
        return (log_id, int(frame))
    except ValueError:
        raise InputError(f"bad frame id in pose key {token!r}")


# --- commands ---------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _merge_config(args)
    plan = []
    if args.plan:
        for entry in args.plan.split(","):
            parts = entry.strip().split(":")
            if len(parts) != 3:
                raise InputError(f"plan entry must be a:b:regime, got {entry!r}")
            plan.append((int(parts[0]), int(parts[1]), parts[2]))
    spec = SceneSpec(
        n_logs=args.n_logs,
        shapes=args.shape,
        overlap_plan=tuple(plan),
        n_poses=args.n_poses,
        spacing=args.spacing,
        noise=args.noise,
        seed=cfg.seed,
    )
    scene = generate_scene(spec, cfg.footprint_config())
    if not cfg.output:
        raise InputError("missing --output for the generated pose CSV")
    write_pose_csv(scene.dataset, cfg.output, cfg.header_lines())
    truth_path = args.truth_out or (cfg.output + ".truth")
    lines = ["# geoclr-truth v1"]
    lines += [f"GT_EDGE {a} {b}" for a, b in scene.log_graph.edges]
    _write_text(truth_path, lines, cfg)
    _summary(
        {
            "command": "synth",
            "n_logs": spec.n_logs,
            "n_poses": scene.dataset.total_poses,
            "n_truth_edges": len(scene.log_graph.edges),
            "output": str(cfg.output),
            "truth": str(truth_path),
        }
    )
    return 0


def _classify_outputs(cfg: RunConfig):
    d = _load_dataset(cfg)
    graph = build_log_graph(d, cfg.footprint_config())
    classes = classify(graph)
    hist = intersection_histogram(classes)
    return d, classes, hist


def cmd_classify(args) -> int:
    cfg = _merge_config(args)
    try:
        d, classes, hist = _classify_outputs(cfg)
    except EmptyFile:
        classes, hist = [], {}
    if cfg.output:
        lines = ["log_id,class,intersecting_logs"]
        lines += [f"{c.log_id},{c.label},{c.intersecting_logs}" for c in classes]
        _write_text(cfg.output, lines, cfg)
    if args.hist_out:
        lines = ["intersecting_logs,n_logs"]
        lines += [f"{k},{v}" for k, v in hist.items()]
        _write_text(args.hist_out, lines, cfg)
    _summary(
        {
            "command": "classify",
            "n_logs": len(classes),
            "n_multi": sum(1 for c in classes if c.label == "multi"),
            "n_single": sum(1 for c in classes if c.label == "single"),
            "histogram": {str(k): v for k, v in hist.items()},
        }
    )
    return 0


def cmd_stats(args) -> int:
    cfg = _merge_config(args)
    try:
        d, classes, hist = _classify_outputs(cfg)
        n_poses = d.total_poses
    except EmptyFile:
        classes, hist, n_poses = [], {}, 0
    if args.hist_out:
        lines = ["intersecting_logs,n_logs"]
        lines += [f"{k},{v}" for k, v in hist.items()]
        _write_text(args.hist_out, lines, cfg)
    _summary(
        {
            "command": "stats",
            "n_logs": len(classes),
            "n_poses": n_poses,
            "n_multi": sum(1 for c in classes if c.label == "multi"),
            "n_single": sum(1 for c in classes if c.label == "single"),
            "histogram": {str(k): v for k, v in hist.items()},
        }
    )
    return 0


def cmd_graph(args) -> int:
    cfg = _merge_config(args)
    d = _load_dataset(cfg)
    g = build_pose_graph(
        d, cfg.footprint_config(), cfg.iou_min, cfg.iou_max, cfg.cross_only
    )
    if not cfg.output:
        raise InputError("missing --output for the graph file")
    save_graph(g, cfg.output)
    _summary(
        {
            "command": "graph",
            "n_vertices": len(g.vertices),
            "n_edges": len(g.edges),
            "iou_min": cfg.iou_min,
            "iou_max": cfg.iou_max,
            "output": str(cfg.output),
        }
    )
    return 0


def cmd_split(args) -> int:
    cfg = _merge_config(args)
    d = _load_dataset(cfg)
    classes = classify(build_log_graph(d, cfg.footprint_config()))
    manifest = generate_splits(d, classes, list(cfg.percents), cfg.val_frac, cfg.seed)
    report = verify_manifest(manifest, d, classes)
    failures = [r.name for r in report if not r.passed]
    if failures:
        raise InternalError(f"manifest verification failed: {failures}")
    if not cfg.output:
        raise InputError("missing --output for the split manifest")
    save_manifest(manifest, cfg.output, cfg.header_lines())
    _summary(
        {
            "command": "split",
            "seed": cfg.seed,
            "pose_counts": manifest.pose_counts,
            "total_poses": manifest.total_poses,
            "checks_passed": len(report),
            "output": str(cfg.output),
        }
    )
    return 0


def cmd_sample_pairs(args) -> int:
    cfg = _merge_config(args)
    d = _load_dataset(cfg)
    ref = d.pose(_parse_key_arg(args.ref)) if args.ref else None
    adj = d.pose(_parse_key_arg(args.adj)) if args.adj else None
    if ref is None or adj is None:
        raise InputError("sample-pairs needs --ref and --adj pose keys")
    batch = sample_pairs(
        ref,
        adj,
        cfg.grid_spec(),
        cfg.footprint_config(),
        cfg.n_anchors,
        cfg.n_negatives,
        cfg.seed,
        max_match_dist=args.max_match_dist,
        exclusion_radius=args.exclusion_radius,
    )
    if not cfg.output:
        raise InputError("missing --output for the pair file")
    write_pair_file(batch, ref, adj, cfg.grid_spec(), cfg.output, cfg.header_lines())
    dists = pair_distances(batch, ref, adj, cfg.grid_spec())
    _summary(
        {
            "command": "sample-pairs",
            "n_anchors": len(batch.anchors),
            "n_negatives": len(batch.negatives),
            "max_pair_dist": max(dists) if dists else 0.0,
            "seed": cfg.seed,
            "output": str(cfg.output),
        }
    )
    return 0


def cmd_loss_check(args) -> int:
    cfg = _merge_config(args)
    batch = read_pair_file(args.pairs)
    emb = read_embedding_file(args.embeddings)
    n = len(batch.anchors)
    k = len(batch.negatives)
    if emb.shape[0] != 2 * n + k:
        raise CorruptFile(
            f"embedding file has {emb.shape[0]} rows, pair file implies {2 * n + k} "
            f"(anchors, positives, negatives)"
        )
    za, zp, zn = emb[:n], emb[n : 2 * n], emb[2 * n :]
    loss, per_anchor = gclr_loss(za, zp, zn, cfg.tau)
    out = {
        "command": "loss-check",
        "tau": cfg.tau,
        "loss": loss,
        "per_anchor": [float(x) for x in per_anchor],
    }
    if args.grad_check:
        grads = gclr_grad(za, zp, zn, cfg.tau)
        max_rel = _fd_check(za, zp, zn, cfg.tau, grads)
        out["grad_check"] = {"max_rel_err": max_rel, "pass": bool(max_rel < 1e-5)}
    _summary(out)
    return 0


def _fd_check(za, zp, zn, tau, grads, h: float = 1e-5) -> float:
    worst = 0.0
    for which, grad in (("a", grads.d_anchor), ("p", grads.d_pos), ("n", grads.d_neg)):
        work = {"a": za.copy(), "p": zp.copy(), "n": zn.copy()}
        flat = work[which].ravel()
        gflat = grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp, _ = gclr_loss(work["a"], work["p"], work["n"], tau)
            flat[i] = orig - h
            lm, _ = gclr_loss(work["a"], work["p"], work["n"], tau)
            flat[i] = orig
            fd = (lp - lm) / (2.0 * h)
            worst = max(worst, abs(gflat[i] - fd) / max(1.0, abs(gflat[i]), abs(fd)))
    return worst


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geoclr", description=__doc__)
    parser.add_argument("--version", action="version", version=f"geoclr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--input", help="pose file (CSV or JSONL)")
        p.add_argument("--output", help="primary output file")
        p.add_argument("--seed", type=int)
        p.add_argument("--lat-extent", dest="lat_extent", type=float)
        p.add_argument("--lon-extent", dest="lon_extent", type=float)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    common(p)
    p.add_argument("--n-logs", type=int, required=True)
    p.add_argument("--plan", default="", help="comma list of a:b:regime entries")
    p.add_argument("--shape", default="straight")
    p.add_argument("--n-poses", type=int, default=40)
    p.add_argument("--spacing", type=float, default=2.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--truth-out", help="ground-truth sidecar path")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("classify", help="single/multi-traversal classification")
    common(p)
    p.add_argument("--hist-out", help="histogram CSV path")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("stats", help="dataset overlap statistics")
    common(p)
    p.add_argument("--hist-out", help="histogram CSV path")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("graph", help="build the spatial pose graph")
    common(p)
    p.add_argument("--iou-min", dest="iou_min", type=float)
    p.add_argument("--iou-max", dest="iou_max", type=float)
    p.add_argument(
        "--same-log",
        dest="cross_only",
        action="store_false",
        default=None,
        help="also keep edges within one log",
    )
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("split", help="generate SSL/val/supervised splits")
    common(p)
    p.add_argument(
        "--percents",
        type=lambda s: tuple(float(x) for x in s.split(",")),
        help="comma list of supervised fractions",
    )
    p.add_argument("--val-frac", dest="val_frac", type=float)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("sample-pairs", help="sample anchor/positive/negative cells")
    common(p)
    p.add_argument("--ref", help="reference pose key log_id:frame_id")
    p.add_argument("--adj", help="adjacent pose key log_id:frame_id")
    p.add_argument("--n-anchors", dest="n_anchors", type=int)
    p.add_argument("--n-negatives", dest="n_negatives", type=int)
    p.add_argument("--max-match-dist", dest="max_match_dist", type=float)
    p.add_argument("--exclusion-radius", dest="exclusion_radius", type=float)
    p.add_argument("--grid-rows", dest="grid_rows", type=int)
    p.add_argument("--grid-cols", dest="grid_cols", type=int)
    p.set_defaults(func=cmd_sample_pairs)

    p = sub.add_parser("loss-check", help="evaluate the contrastive loss on files")
    common(p)
    p.add_argument("--pairs", required=True, help="pair file from sample-pairs")
    p.add_argument("--embeddings", required=True, help="binary f64 embedding file")
    p.add_argument("--tau", type=float)
    p.add_argument("--grad-check", action="store_true")
    p.set_defaults(func=cmd_loss_check)

    return parser


def main(argv=None) -> int:
    level = os.environ.get("GEOCLR_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (InputError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except GeoclrError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

"""Dataset split generation at whole-log granularity.

The self-supervised pool is exactly the multi-traversal logs.  The
validation split takes randomly ordered single-traversal logs until it
holds at least ``val_frac`` of all poses; the remaining single logs are
shuffled once and supervised subsets are prefixes of that shuffle, so a
lower-percentage subset is always a prefix (hence subset) of every higher
one.  "Comprising p%" means the shortest whole-log prefix whose pose count
reaches p * total_poses; exact percentages are unattainable with whole
logs.

Randomness comes from numpy's PCG64 with Fisher-Yates shuffling, which is
reproducible across platforms; the generator name is recorded in the
manifest together with a content hash of the input dataset.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptFile, InputError, InsufficientData, VersionMismatch
from .ingest import Dataset, dump_pose_csv
from .traversal_classify import MULTI, SINGLE, TraversalClass

GENERATOR_NAME = "pcg64-fisher-yates"

_HEADER = "# geoclr-splits v1"


def percent_label(p: float) -> str:
    return f"sup_{p * 100:g}%"


def dataset_content_hash(d: Dataset) -> str:
    return hashlib.sha256(dump_pose_csv(d).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SplitManifest:
    """Named log-granular partitions of a dataset.

    val_logs and each sup subset keep selection order: the tightness
    guarantee (dropping the last log falls below the target) is only
    checkable against the ordered form.
    """

    seed: int
    generator: str
    ssl_logs: tuple[str, ...]
    val_logs: tuple[str, ...]
    sup_subsets: dict[float, tuple[str, ...]]
    pose_counts: dict[str, int]
    total_poses: int
    val_frac: float
    dataset_hash: str

    def split_names(self) -> list[str]:
        return ["ssl", "val"] + [percent_label(p) for p in sorted(self.sup_subsets)]


def _log_pose_counts(d: Dataset) -> dict[str, int]:
    return {t.log_id: len(t.poses) for t in d.traversals}


def _take_until(pool: list[str], counts: dict[str, int], target: float, what: str):
    """Shortest prefix of ``pool`` whose cumulative pose count reaches target."""
    taken: list[str] = []
    cum = 0
    for log_id in pool:
        if cum >= target:
            break
        taken.append(log_id)
        cum += counts[log_id]
    if cum < target:
        raise InsufficientData(
            f"{what}: pool holds {cum} poses, need {target:.1f}"
        )
    return taken, cum


def generate_splits(
    d: Dataset,
    classes: list[TraversalClass],
    percents: list[float],
    val_frac: float = 0.10,
    seed: int = 0,
) -> SplitManifest:
    """Generate the SSL / validation / nested supervised splits.

    Deterministic in (dataset, seed); raises InsufficientData when the
    single-traversal pool cannot reach val_frac or max(percents).
    """
    if not percents or sorted(percents) != list(percents):
        raise InputError("percents must be non-empty and sorted ascending")
    for p in percents:
        if not 0.0 < p < 1.0:
            raise InputError(f"percent {p} outside (0, 1)")
    if len(set(percents)) != len(percents):
        raise InputError("duplicate percents")
    if not 0.0 < val_frac < 1.0:
        raise InputError(f"val_frac {val_frac} outside (0, 1)")

    counts = _log_pose_counts(d)
    class_logs = {c.log_id for c in classes}
    if class_logs != set(counts):
        raise InputError("classification does not cover exactly the dataset's logs")

    total = d.total_poses
    ssl = tuple(sorted(c.log_id for c in classes if c.label == MULTI))
    singles = sorted(c.log_id for c in classes if c.label == SINGLE)

    rng = np.random.default_rng(np.random.PCG64(seed))
    order = list(singles)
    rng.shuffle(order)
    val, val_count = _take_until(order, counts, val_frac * total, "validation split")

    val_set = set(val)
    remaining = [log_id for log_id in order if log_id not in val_set]
    rng.shuffle(remaining)

    sup_subsets: dict[float, tuple[str, ...]] = {}
    pose_counts = {
        "ssl": sum(counts[l] for l in ssl),
        "val": val_count,
    }
    for p in percents:
        taken, cum = _take_until(remaining, counts, p * total, percent_label(p))
        sup_subsets[p] = tuple(taken)
        pose_counts[percent_label(p)] = cum

    return SplitManifest(
        seed=seed,
        generator=GENERATOR_NAME,
        ssl_logs=ssl,
        val_logs=tuple(val),
        sup_subsets=sup_subsets,
        pose_counts=pose_counts,
        total_poses=total,
        val_frac=val_frac,
        dataset_hash=dataset_content_hash(d),
    )


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def verify_manifest(
    m: SplitManifest, d: Dataset, classes: list[TraversalClass]
) -> list[CheckResult]:
    """Leakage and consistency audit; failures are report entries, not errors."""
    counts = _log_pose_counts(d)
    report: list[CheckResult] = []

    def check(name: str, passed: bool, detail: str):
        report.append(CheckResult(name, passed, detail))

    all_named = set(m.ssl_logs) | set(m.val_logs)
    for logs in m.sup_subsets.values():
        all_named |= set(logs)
    unknown = all_named - set(counts)
    check("logs_known", not unknown, f"unknown logs: {sorted(unknown)}" if unknown else "all logs exist")

    groups = {"ssl": set(m.ssl_logs), "val": set(m.val_logs)}
    sup_all = set()
    for p, logs in m.sup_subsets.items():
        sup_all |= set(logs)
    groups["sup"] = sup_all
    overlaps = []
    names = list(groups)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            inter = groups[a] & groups[b]
            if inter:
                overlaps.append(f"{a}/{b}: {sorted(inter)}")
    check("disjoint", not overlaps, "; ".join(overlaps) if overlaps else "ssl/val/sup pairwise disjoint")

    ps = sorted(m.sup_subsets)
    nest_ok = all(
        m.sup_subsets[ps[i]] == m.sup_subsets[ps[i + 1]][: len(m.sup_subsets[ps[i]])]
        for i in range(len(ps) - 1)
    )
    check("nesting", nest_ok, "each subset is a prefix of the next" if nest_ok else "prefix property violated")

    multi = {c.log_id for c in classes if c.label == MULTI}
    check(
        "ssl_is_multi",
        set(m.ssl_logs) == multi,
        "ssl equals the multi-traversal set" if set(m.ssl_logs) == multi else "ssl differs from multi set",
    )

    total = d.total_poses
    check(
        "total_poses",
        m.total_poses == total,
        f"manifest {m.total_poses} vs dataset {total}",
    )

    def split_count(logs) -> int:
        return sum(counts.get(l, 0) for l in logs)

    targets = {"val": (m.val_logs, m.val_frac * total)}
    for p in ps:
        targets[percent_label(p)] = (m.sup_subsets[p], p * total)
    for name, (logs, target) in targets.items():
        got = split_count(logs)
        check(f"{name}_threshold", got >= target, f"{got} poses >= target {target:.1f}")
        if logs:
            without_last = got - counts.get(logs[-1], 0)
            check(
                f"{name}_tight",
                without_last < target,
                f"dropping last log leaves {without_last} < {target:.1f}",
            )

    recomputed = {"ssl": split_count(m.ssl_logs), "val": split_count(m.val_logs)}
    for p in ps:
        recomputed[percent_label(p)] = split_count(m.sup_subsets[p])
    counts_ok = recomputed == m.pose_counts
    check("pose_counts", counts_ok, "recorded counts match" if counts_ok else f"recorded {m.pose_counts}, recomputed {recomputed}")

    hash_ok = m.dataset_hash == dataset_content_hash(d)
    check("dataset_hash", hash_ok, "content hash matches" if hash_ok else "dataset changed since manifest generation")
    return report


def save_manifest(m: SplitManifest, path, header_lines: tuple[str, ...] = ()) -> None:
    lines = [_HEADER]
    lines += [f"# {h}" for h in header_lines]
    lines.append(f"SEED {m.seed}")
    lines.append(f"GENERATOR {m.generator}")
    lines.append(f"DATASET_SHA256 {m.dataset_hash}")
    lines.append(f"TOTAL_POSES {m.total_poses}")
    lines.append(f"VAL_FRAC {m.val_frac!r}")
    for name in m.split_names():
        lines.append(f"COUNT {name} {m.pose_counts[name]}")
    for log_id in m.ssl_logs:
        lines.append(f"SSL {log_id}")
    for log_id in m.val_logs:
        lines.append(f"VAL {log_id}")
    for p in sorted(m.sup_subsets):
        for log_id in m.sup_subsets[p]:
            lines.append(f"SUP {p!r} {log_id}")
    lines.append("END")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path) -> SplitManifest:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# geoclr-splits"):
        raise CorruptFile(f"{path}: missing manifest header")
    if lines[0] != _HEADER:
        raise VersionMismatch(f"{path}: unsupported version {lines[0]!r}")
    if not lines or lines[-1] != "END":
        raise CorruptFile(f"{path}: truncated manifest")
    fields: dict[str, str] = {}
    pose_counts: dict[str, int] = {}
    ssl: list[str] = []
    val: list[str] = []
    sup: dict[float, list[str]] = {}
    try:
        for line in lines[1:-1]:
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag in ("SEED", "GENERATOR", "DATASET_SHA256", "TOTAL_POSES", "VAL_FRAC"):
                fields[tag] = parts[1]
            elif tag == "COUNT":
                pose_counts[parts[1]] = int(parts[2])
            elif tag == "SSL":
                ssl.append(parts[1])
            elif tag == "VAL":
                val.append(parts[1])
            elif tag == "SUP":
                sup.setdefault(float(parts[1]), []).append(parts[2])
            else:
                raise CorruptFile(f"{path}: unknown line tag {tag!r}")
        return SplitManifest(
            seed=int(fields["SEED"]),
            generator=fields["GENERATOR"],
            ssl_logs=tuple(ssl),
            val_logs=tuple(val),
            sup_subsets={p: tuple(logs) for p, logs in sup.items()},
            pose_counts=pose_counts,
            total_poses=int(fields["TOTAL_POSES"]),
            val_frac=float(fields["VAL_FRAC"]),
            dataset_hash=fields["DATASET_SHA256"],
        )
    except CorruptFile:
        raise
    except (KeyError, IndexError, ValueError) as e:
        raise CorruptFile(f"{path}: {e}") from e

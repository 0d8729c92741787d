"""Projection head, temperature-scaled contrastive loss, and gradients.

The loss for one anchor embedding z_i with positive z_i+ and negatives
{z_k-} is

    -log( exp(sim(z_i, z_i+)/tau)
          / (exp(sim(z_i, z_i+)/tau) + sum_k exp(sim(z_i, z_k-)/tau)) )

with sim the cosine similarity.  The batch loss is the sum over anchors.
All exponentials go through log-sum-exp, so scaled similarities up to
+-700 stay finite.  Negatives are shared across the anchors of one batch
by default; passing a (n_anchors, K, dim) array gives per-anchor negative
sets instead.

Embedding matrices are plain float64 numpy arrays of shape (rows, dim).
Analytic gradients cover both the embedding-level loss and the full
composition through the projection head, including the row-normalization
used by the cosine.

All kernels are pure functions; batch rows can be processed in parallel
by callers.  Reductions go through numpy's pairwise summation, so batch
totals are bit-stable for a given input ordering.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptFile, Divergence, InputError, NonPositiveTau, ShapeMismatch

_EMB_MAGIC = b"GEOCLREMB1\n"


class DegenerateEmbeddingWarning(UserWarning):
    """A zero-norm embedding was met; its cosine similarity is defined as 0."""


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.07
    lambda_sup: float = 1.0
    lambda_gclr: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise NonPositiveTau(f"tau must be positive, got {self.tau}")
        if self.lambda_sup < 0 or self.lambda_gclr < 0:
            raise InputError("loss weights must be nonnegative")


def _as_embedding(x, name: str, ndim: int = 2) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != ndim or arr.shape[-1] < 1:
        raise ShapeMismatch(f"{name}: expected {ndim}-d embedding array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name}: non-finite values")
    return arr


def cosine_sim(u, v) -> float:
    """Cosine similarity of two vectors, clipped to [-1, 1].

    A zero vector has no direction; the similarity is defined as 0 and a
    DegenerateEmbeddingWarning is emitted.
    """
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise ShapeMismatch(f"vector shapes differ: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        warnings.warn("zero-norm embedding in cosine_sim", DegenerateEmbeddingWarning)
        return 0.0
    return float(min(1.0, max(-1.0, float(u @ v) / (nu * nv))))


@dataclass(frozen=True)
class ProjectionHead:
    """Two-layer MLP with ReLU: z = relu(f W1 + b1) W2 + b2."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise ShapeMismatch("weights must be 2-d")
        if self.w1.shape[1] != self.b1.shape[0] or self.w2.shape[1] != self.b2.shape[0]:
            raise ShapeMismatch("bias shapes inconsistent with weights")
        if self.w1.shape[1] != self.w2.shape[0]:
            raise ShapeMismatch("hidden dimensions of the two layers differ")
        for name in ("w1", "b1", "w2", "b2"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise InputError(f"head parameter {name} is not finite")

    @property
    def dim_in(self) -> int:
        return self.w1.shape[0]

    @property
    def dim_out(self) -> int:
        return self.w2.shape[1]

    @classmethod
    def init(
        cls,
        dim_in: int,
        dim_hidden: int | None = None,
        dim_out: int | None = None,
        seed: int = 0,
    ) -> "ProjectionHead":
        """Seeded uniform init in +-1/sqrt(fan_in); defaults follow the
        convention hidden = dim_in, out = dim_in // 2."""
        dim_hidden = dim_in if dim_hidden is None else dim_hidden
        dim_out = max(1, dim_in // 2) if dim_out is None else dim_out
        rng = np.random.default_rng(np.random.PCG64(seed))
        s1 = 1.0 / math.sqrt(dim_in)
        s2 = 1.0 / math.sqrt(dim_hidden)
        return cls(
            w1=rng.uniform(-s1, s1, size=(dim_in, dim_hidden)),
            b1=rng.uniform(-s1, s1, size=dim_hidden),
            w2=rng.uniform(-s2, s2, size=(dim_hidden, dim_out)),
            b2=rng.uniform(-s2, s2, size=dim_out),
        )


def project(head: ProjectionHead, f) -> np.ndarray:
    """Apply the projection head row-wise to an (n, dim_in) matrix."""
    f = _as_embedding(f, "features")
    if f.shape[1] != head.dim_in:
        raise ShapeMismatch(f"features dim {f.shape[1]} != head dim_in {head.dim_in}")
    return np.maximum(f @ head.w1 + head.b1, 0.0) @ head.w2 + head.b2


def _normalize_rows(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalize; zero rows stay zero (their sims become 0)."""
    norms = np.linalg.norm(z, axis=-1)
    safe = np.where(norms == 0.0, 1.0, norms)
    return z / safe[..., None], norms


def _check_loss_inputs(anchor_z, pos_z, neg_z, tau):
    a = _as_embedding(anchor_z, "anchor_z")
    p = _as_embedding(pos_z, "pos_z")
    n = np.asarray(neg_z, dtype=float)
    if n.ndim == 2:
        n = _as_embedding(neg_z, "neg_z")
        per_anchor_negs = False
    elif n.ndim == 3:
        n = _as_embedding(neg_z, "neg_z", ndim=3)
        per_anchor_negs = True
    else:
        raise ShapeMismatch(f"neg_z: expected 2-d or 3-d array, got shape {n.shape}")
    if a.shape != p.shape:
        raise ShapeMismatch(f"anchor/positive shapes differ: {a.shape} vs {p.shape}")
    if n.shape[-1] != a.shape[1]:
        raise ShapeMismatch(f"negative dim {n.shape[-1]} != anchor dim {a.shape[1]}")
    if per_anchor_negs and n.shape[0] != a.shape[0]:
        raise ShapeMismatch("per-anchor negatives must have one set per anchor")
    if n.shape[-2] < 1:
        raise ShapeMismatch("need at least one negative")
    if not tau > 0:
        raise NonPositiveTau(f"tau must be positive, got {tau}")
    return a, p, n, per_anchor_negs


def _sims(a_hat, p_hat, n_hat, per_anchor_negs):
    s_pos = np.sum(a_hat * p_hat, axis=1)
    if per_anchor_negs:
        s_neg = np.einsum("md,mkd->mk", a_hat, n_hat)
    else:
        s_neg = a_hat @ n_hat.T
    return s_pos, s_neg


def _per_anchor_loss(s_pos, s_neg, tau):
    logits = np.concatenate([s_pos[:, None], s_neg], axis=1) / tau
    mx = logits.max(axis=1, keepdims=True)
    lse = mx[:, 0] + np.log(np.exp(logits - mx).sum(axis=1))
    return lse - logits[:, 0], logits


def gclr_loss(anchor_z, pos_z, neg_z, tau: float = 0.07) -> tuple[float, np.ndarray]:
    """Contrastive loss summed over anchors; also returns per-anchor terms."""
    a, p, n, per_anchor_negs = _check_loss_inputs(anchor_z, pos_z, neg_z, tau)
    a_hat, _ = _normalize_rows(a)
    p_hat, _ = _normalize_rows(p)
    n_hat, _ = _normalize_rows(n)
    s_pos, s_neg = _sims(a_hat, p_hat, n_hat, per_anchor_negs)
    per_anchor, _ = _per_anchor_loss(s_pos, s_neg, tau)
    return float(per_anchor.sum()), per_anchor


def _softmax_sim_grads(s_pos, s_neg, tau):
    """d(per-anchor loss)/d(similarity); rows of (g_pos, g_neg) sum to 0."""
    _, logits = _per_anchor_loss(s_pos, s_neg, tau)
    mx = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - mx)
    sigma = e / e.sum(axis=1, keepdims=True)
    return (sigma[:, 0] - 1.0) / tau, sigma[:, 1:] / tau


def _through_norm(d_hat: np.ndarray, hat: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """Backprop through row normalization: project out the radial component
    and scale by 1/norm; gradients of zero-norm rows are defined as 0."""
    radial = np.sum(d_hat * hat, axis=-1, keepdims=True)
    out = (d_hat - radial * hat) / np.where(norms == 0.0, 1.0, norms)[..., None]
    return np.where((norms == 0.0)[..., None], 0.0, out)


@dataclass(frozen=True)
class GclrGradients:
    loss: float
    per_anchor: np.ndarray
    d_anchor: np.ndarray
    d_pos: np.ndarray
    d_neg: np.ndarray


def gclr_grad(anchor_z, pos_z, neg_z, tau: float = 0.07) -> GclrGradients:
    """Analytic gradients of the summed loss w.r.t. all three embedding
    matrices, including the normalization inside the cosine."""
    a, p, n, per_anchor_negs = _check_loss_inputs(anchor_z, pos_z, neg_z, tau)
    a_hat, a_norms = _normalize_rows(a)
    p_hat, p_norms = _normalize_rows(p)
    n_hat, n_norms = _normalize_rows(n)
    s_pos, s_neg = _sims(a_hat, p_hat, n_hat, per_anchor_negs)
    per_anchor, _ = _per_anchor_loss(s_pos, s_neg, tau)
    g_pos, g_neg = _softmax_sim_grads(s_pos, s_neg, tau)

    if per_anchor_negs:
        da_hat = g_pos[:, None] * p_hat + np.einsum("mk,mkd->md", g_neg, n_hat)
        dn_hat = g_neg[..., None] * a_hat[:, None, :]
    else:
        da_hat = g_pos[:, None] * p_hat + g_neg @ n_hat
        dn_hat = g_neg.T @ a_hat
    dp_hat = g_pos[:, None] * a_hat

    return GclrGradients(
        loss=float(per_anchor.sum()),
        per_anchor=per_anchor,
        d_anchor=_through_norm(da_hat, a_hat, a_norms),
        d_pos=_through_norm(dp_hat, p_hat, p_norms),
        d_neg=_through_norm(dn_hat, n_hat, n_norms),
    )


@dataclass(frozen=True)
class HeadGradients:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


@dataclass(frozen=True)
class ComposedGradients:
    loss: float
    per_anchor: np.ndarray
    d_anchor_f: np.ndarray
    d_pos_f: np.ndarray
    d_neg_f: np.ndarray
    head: HeadGradients


def _head_forward(head: ProjectionHead, f: np.ndarray):
    pre = f @ head.w1 + head.b1
    hidden = np.maximum(pre, 0.0)
    return hidden @ head.w2 + head.b2, pre, hidden


def _head_backward(head: ProjectionHead, f, pre, hidden, dz):
    dw2 = hidden.T @ dz
    db2 = dz.sum(axis=0)
    d_hidden = dz @ head.w2.T
    d_pre = d_hidden * (pre > 0.0)
    dw1 = f.T @ d_pre
    db1 = d_pre.sum(axis=0)
    return d_pre @ head.w1.T, dw1, db1, dw2, db2


def gclr_grad_with_head(head: ProjectionHead, anchor_f, pos_f, neg_f, tau: float = 0.07) -> ComposedGradients:
    """Gradients of the full project -> normalize -> contrast pipeline
    w.r.t. the raw feature matrices and the shared head parameters."""
    anchor_f = _as_embedding(anchor_f, "anchor_f")
    pos_f = _as_embedding(pos_f, "pos_f")
    neg_f = np.asarray(neg_f, dtype=float)
    neg_shape = neg_f.shape
    neg_flat = neg_f.reshape(-1, neg_shape[-1])

    za, pre_a, hid_a = _head_forward(head, anchor_f)
    zp, pre_p, hid_p = _head_forward(head, pos_f)
    zn_flat, pre_n, hid_n = _head_forward(head, neg_flat)
    zn = zn_flat.reshape(*neg_shape[:-1], head.dim_out)

    grads = gclr_grad(za, zp, zn, tau)
    dzn_flat = grads.d_neg.reshape(-1, head.dim_out)

    dfa, dw1a, db1a, dw2a, db2a = _head_backward(head, anchor_f, pre_a, hid_a, grads.d_anchor)
    dfp, dw1p, db1p, dw2p, db2p = _head_backward(head, pos_f, pre_p, hid_p, grads.d_pos)
    dfn_flat, dw1n, db1n, dw2n, db2n = _head_backward(head, neg_flat, pre_n, hid_n, dzn_flat)

    return ComposedGradients(
        loss=grads.loss,
        per_anchor=grads.per_anchor,
        d_anchor_f=dfa,
        d_pos_f=dfp,
        d_neg_f=dfn_flat.reshape(neg_shape),
        head=HeadGradients(
            w1=dw1a + dw1p + dw1n,
            b1=db1a + db1p + db1n,
            w2=dw2a + dw2p + dw2n,
            b2=db2a + db2p + db2n,
        ),
    )


def combine_losses(l_sup: float, l_gclr: float, cfg: LossConfig = LossConfig()) -> float:
    """Weighted sum of the supervised and contrastive terms."""
    if not (math.isfinite(l_sup) and math.isfinite(l_gclr)):
        raise InputError("loss terms must be finite")
    return cfg.lambda_sup * l_sup + cfg.lambda_gclr * l_gclr


def write_embedding_file(path, matrix) -> None:
    """Binary embedding file: magic, ascii "rows dim" header, then
    row-major little-endian float64 values."""
    m = _as_embedding(matrix, "embeddings")
    with open(path, "wb") as fh:
        fh.write(_EMB_MAGIC)
        fh.write(f"{m.shape[0]} {m.shape[1]}\n".encode("ascii"))
        fh.write(m.astype("<f8").tobytes())


def read_embedding_file(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(_EMB_MAGIC):
        raise CorruptFile(f"{path}: not an embedding file")
    nl = data.index(b"\n", len(_EMB_MAGIC))
    try:
        rows, dim = (int(x) for x in data[len(_EMB_MAGIC) : nl].split())
    except ValueError as e:
        raise CorruptFile(f"{path}: bad shape header") from e
    body = data[nl + 1 :]
    if len(body) != rows * dim * 8:
        raise CorruptFile(f"{path}: expected {rows * dim * 8} payload bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<f8").reshape(rows, dim).astype(float)


@dataclass(frozen=True)
class AlignmentMetrics:
    pos_cos_mean: float
    neg_cos_mean: float
    loss_curve: list[float] = field(compare=False)


def _batch_inputs(scene, batch, poses, grid_spec, noise_std, rng):
    """Per-cell input vectors: ground features at the cell's global center
    plus per-cell observation noise (the natural-augmentation stand-in)."""
    from .correspondence import cell_center_global

    def block(cells):
        pts = np.array(
            [cell_center_global(poses[c.pose], grid_spec, c.row, c.col) for c in cells]
        )
        feats = scene.feature_fn(pts)
        return feats + rng.normal(0.0, noise_std, size=feats.shape)

    return block(batch.anchors), block(batch.positives), block(batch.negatives)


def _cos_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    an, _ = _normalize_rows(a)
    bn, _ = _normalize_rows(b)
    return np.sum(an * bn, axis=1)


def toy_alignment_experiment(
    scene,
    grid_spec=None,
    cfg=None,
    steps: int = 500,
    seed: int = 0,
    lr: float = 1e-2,
    tau: float = 0.1,
    n_anchors: int = 32,
    n_negatives: int = 64,
    noise_std: float = 0.05,
    enc_dim: int = 16,
    out_dim: int = 8,
) -> AlignmentMetrics:
    """Desk-scale check that the contrastive objective aligns co-located
    cells: train a linear encoder + projection head by plain gradient
    descent on one sampled batch and report final cosine statistics.

    The scene must provide overlapping drives (a reference-adjacent pose
    pair); the pair whose footprint IoU is closest to 0.5 is used.
    """
    from .correspondence import BevGridSpec, sample_pairs
    from .geometry import FootprintConfig
    from .pose_graph import build_pose_graph

    grid_spec = grid_spec or BevGridSpec()
    cfg = cfg or FootprintConfig()

    graph = build_pose_graph(scene.dataset, cfg, 0.05, 0.95, cross_only=True)
    if not graph.edges:
        raise InputError("scene has no overlapping cross-log pose pair")
    ref_key, adj_key, _ = min(graph.edges, key=lambda e: (abs(e[2] - 0.5), e[0], e[1]))
    poses = {p.key: p for _, p in scene.dataset.iter_poses()}
    batch = sample_pairs(
        poses[ref_key], poses[adj_key], grid_spec, cfg, n_anchors, n_negatives, seed
    )

    rng = np.random.default_rng(np.random.PCG64(seed + 1))
    u_anchor, u_pos, u_neg = _batch_inputs(scene, batch, poses, grid_spec, noise_std, rng)
    feat_dim = u_anchor.shape[1]

    enc_scale = 1.0 / math.sqrt(feat_dim)
    w_enc = np.random.default_rng(np.random.PCG64(seed + 2)).uniform(
        -enc_scale, enc_scale, size=(feat_dim, enc_dim)
    )
    head = ProjectionHead.init(enc_dim, enc_dim, out_dim, seed=seed + 3)

    def forward(h, w):
        return (
            project(h, u_anchor @ w),
            project(h, u_pos @ w),
            project(h, u_neg @ w),
        )

    loss_curve: list[float] = []
    for _ in range(steps):
        grads = gclr_grad_with_head(head, u_anchor @ w_enc, u_pos @ w_enc, u_neg @ w_enc, tau)
        if not math.isfinite(grads.loss):
            raise Divergence(f"loss became non-finite after {len(loss_curve)} steps")
        loss_curve.append(grads.loss)
        d_w_enc = u_anchor.T @ grads.d_anchor_f + u_pos.T @ grads.d_pos_f + u_neg.T @ grads.d_neg_f
        w_enc = w_enc - lr * d_w_enc
        head = ProjectionHead(
            w1=head.w1 - lr * grads.head.w1,
            b1=head.b1 - lr * grads.head.b1,
            w2=head.w2 - lr * grads.head.w2,
            b2=head.b2 - lr * grads.head.b2,
        )

    za, zp, zn = forward(head, w_enc)
    final_loss, _ = gclr_loss(za, zp, zn, tau)
    if not math.isfinite(final_loss):
        raise Divergence("final loss is non-finite")
    loss_curve.append(final_loss)

    pos_cos = _cos_rows(za, zp)
    an, _ = _normalize_rows(za)
    nn, _ = _normalize_rows(zn)
    return AlignmentMetrics(
        pos_cos_mean=float(pos_cos.mean()),
        neg_cos_mean=float((an @ nn.T).mean()),
        loss_curve=loss_curve,
    )

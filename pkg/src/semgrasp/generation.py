"""Dual generation framework: two chained conditional diffusion models.

Stage one (the semantic module) denoises a per-point contact map conditioned
on the object cloud and a semantic contact map; stage two (the contact
module) denoises the 61-value grasp vector conditioned on the object cloud
and a finished contact map.  The stages train independently — the grasp
denoiser sees the ground-truth contact map as a teacher condition — and are
chained strictly sequentially at sampling time: the grasp stage conditions
only on a fully denoised map, never on intermediate noisy ones.

Every per-point computation runs in a canonical point order (lexicographic
by coordinates), which makes generation bitwise reproducible under
consistent permutations of the input cloud and SCM.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import container
from .diffusion import NoiseSchedule, ancestral_sample
from .nets import MLP, Adam, FrozenEncoder, TIME_EMBED_WIDTH, time_embedding
from .objectives import (LossWeights, contact_consistency_grad, contact_consistency_loss,
                         pairs_from_scm, recon_loss, tgc_grad_params)

COND_WIDTH = 6            # 5 scm columns + 1 scalar-map channel
D_POINT = 32
D_GLOBAL = 48
GRASP_CLAMP = (-5.0, 5.0)  # in normalized grasp coordinates
CMAP_CLAMP = (-1.0, 1.0)   # contact maps live in [0,1], diffused as 2c-1
MIN_NORM_SCALE = 0.02

CONDITIONS = ("none", "binary", "gaussian", "scm")
FRAMES = ("single", "dual")

CHECKPOINT_FORMAT = "semgrasp-checkpoint"
CHECKPOINT_VERSION = 1


class GenerationError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


class TrainingAbort(RuntimeError):
    """Raised when a training step produces a non-finite loss."""

    def __init__(self, step: int, batch_ids, detail: str):
        self.step = step
        self.batch_ids = list(batch_ids)
        super().__init__(f"non-finite loss at step {step} (batch {self.batch_ids}): {detail}")


@dataclass(frozen=True)
class DenoiserConfig:
    condition: str = "scm"
    frame: str = "dual"
    hidden: int = 128
    t_total: int = 100
    beta_start: float = 1e-3
    beta_end: float = 0.2
    seed: int = 0
    target_dim: int = 61
    n_fingers: int = 5
    loss_c: bool = True
    loss_v: bool = True
    loss_tgc: bool = True

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ValueError(f"condition must be one of {CONDITIONS}")
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}")
        if min(self.hidden, self.t_total, self.target_dim, self.n_fingers) <= 0:
            raise ValueError("widths, step count and dimensions must be positive")
        if not 0 < self.beta_start < self.beta_end < 1:
            raise ValueError("beta range must satisfy 0 < start < end < 1")
        if self.target_dim % 61 != 0:
            raise ValueError("target_dim must be a multiple of 61")

    def to_meta(self) -> dict:
        return {
            "condition": self.condition, "frame": self.frame,
            "hidden": self.hidden, "t_total": self.t_total,
            "beta_start": self.beta_start, "beta_end": self.beta_end,
            "seed": self.seed, "target_dim": self.target_dim,
            "n_fingers": self.n_fingers, "loss_c": self.loss_c,
            "loss_v": self.loss_v, "loss_tgc": self.loss_tgc,
        }

    @classmethod
    def from_meta(cls, meta: dict) -> "DenoiserConfig":
        return cls(**{k: meta[k] for k in cls.__dataclass_fields__ if k in meta})


@dataclass(frozen=True)
class GraspSample:
    contact_map: np.ndarray
    hand_params: np.ndarray
    verts: np.ndarray
    joints: np.ndarray
    seed: int


def canonical_order(points: np.ndarray) -> np.ndarray:
    """Permutation sorting points lexicographically by (x, y, z)."""
    return np.lexsort((points[:, 2], points[:, 1], points[:, 0]))


def build_condition(kind: str, n_points: int, n_fingers: int = 5,
                    scm: np.ndarray | None = None,
                    scalar_map: np.ndarray | None = None) -> np.ndarray:
    """Per-point condition block, fixed width regardless of ablation kind.

    Columns 0..n_fingers-1 carry the SCM rows (kind 'scm'); the last column
    carries a scalar map (kind 'binary': the contact indicator 1-B; kind
    'gaussian': the smoothed indicator).  Kind 'none' is all zero.
    """
    width = n_fingers + 1
    cond = np.zeros((n_points, width))
    if kind == "none":
        return cond
    if kind == "scm":
        if scm is None:
            raise GenerationError("condition kind 'scm' requires an SCM")
        cond[:, :n_fingers] = scm
        return cond
    if kind in ("binary", "gaussian"):
        if scalar_map is None:
            raise GenerationError(f"condition kind {kind!r} requires a scalar map")
        cond[:, n_fingers] = scalar_map
        return cond
    raise GenerationError(f"unknown condition kind {kind!r}")


def pooled_embedding(ppf: np.ndarray, cond: np.ndarray, cmap: np.ndarray) -> np.ndarray:
    """Permutation-invariant summary of per-point rows for the grasp stage.

    Rows must already be in canonical order: max pooling is order-exact and
    the mean accumulates in row order, so canonical ordering makes the result
    bitwise stable under input permutations.
    """
    h = np.concatenate([ppf, cond, cmap[:, None]], axis=1)
    return np.concatenate([h.max(axis=0), h.sum(axis=0) / h.shape[0]])


class GenerationModel:
    """Both denoisers plus the frozen encoder and shared schedule."""

    def __init__(self, config: DenoiserConfig, hand_sha: str,
                 encoder: FrozenEncoder | None = None):
        self.config = config
        self.hand_sha = hand_sha
        self.schedule = NoiseSchedule.linear(config.t_total, config.beta_start,
                                             config.beta_end)
        self.encoder = encoder or FrozenEncoder(seed=config.seed, d_point=D_POINT,
                                                d_global=D_GLOBAL)
        ss = np.random.SeedSequence(entropy=config.seed, spawn_key=(202,))
        rng_sem, rng_grasp = (np.random.default_rng(s) for s in ss.spawn(2))
        cw = config.n_fingers + 1
        sem_in = 1 + D_POINT + cw + D_GLOBAL + TIME_EMBED_WIDTH
        pooled_w = 2 * (D_POINT + cw + 1)
        grasp_in = config.target_dim + D_GLOBAL + pooled_w + TIME_EMBED_WIDTH
        self.semantic_net = MLP([sem_in, config.hidden, config.hidden, 1], rng_sem)
        self.grasp_net = MLP([grasp_in, config.hidden, config.hidden,
                              config.target_dim], rng_grasp)
        self.grasp_mean = np.zeros(config.target_dim)
        self.grasp_scale = np.ones(config.target_dim)
        self.semantic_trained = False
        self.contact_trained = False

    # -- conditioning ---------------------------------------------------

    def encode(self, points_canonical: np.ndarray):
        return self.encoder.encode(points_canonical)

    def _semantic_inputs(self, x_n, ppf, cond, g, n):
        n_pts = ppf.shape[0]
        temb = time_embedding(n, self.config.t_total)
        return np.concatenate([
            x_n[:, None], ppf, cond,
            np.broadcast_to(g, (n_pts, g.shape[0])),
            np.broadcast_to(temb, (n_pts, temb.shape[0])),
        ], axis=1)

    def _grasp_inputs(self, z_n, g, pooled, n):
        temb = time_embedding(n, self.config.t_total)
        return np.concatenate([z_n, g, pooled, temb])[None, :]

    # -- normalization ----------------------------------------------------

    def set_normalization(self, grasps: np.ndarray) -> None:
        """Fix the grasp-vector normalization from training data."""
        grasps = np.asarray(grasps, dtype=np.float64)
        self.grasp_mean = grasps.mean(axis=0)
        self.grasp_scale = np.maximum(grasps.std(axis=0), MIN_NORM_SCALE)

    def normalize(self, m: np.ndarray) -> np.ndarray:
        return (m - self.grasp_mean) / self.grasp_scale

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        return z * self.grasp_scale + self.grasp_mean


# ---------------------------------------------------------------------------
# record preparation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PreparedRecord:
    """One training record with everything precomputed in canonical order."""
    points: np.ndarray        # (N, 3) canonical
    ppf: np.ndarray           # (N, d_point)
    g: np.ndarray             # (d_global,)
    cond: np.ndarray          # (N, cond_width)
    cmap: np.ndarray          # (N,) ground-truth contact map
    binary: np.ndarray        # (N,)
    pairs: np.ndarray         # (K, 2) canonical point indices
    m_gt: np.ndarray          # (target_dim,)
    v_gt: np.ndarray          # (778, 3)
    x0_map: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "x0_map", 2.0 * self.cmap - 1.0)


def prepare_record(model: GenerationModel, asset, rec: dict) -> PreparedRecord:
    points = np.asarray(rec["points"], dtype=np.float64)
    order = canonical_order(points)
    pts_c = np.ascontiguousarray(points[order])
    scm_c = np.asarray(rec["scm"])[order]
    cmap_c = np.asarray(rec["cmap"], dtype=np.float64)[order]
    binary_c = np.asarray(rec["binary"])[order]
    scalar = None
    if model.config.condition == "binary":
        scalar = 1.0 - binary_c
    elif model.config.condition == "gaussian":
        scalar = np.asarray(rec["gaussian"], dtype=np.float64)[order]
    cond = build_condition(model.config.condition, pts_c.shape[0],
                           model.config.n_fingers, scm=scm_c, scalar_map=scalar)
    g, ppf = model.encode(pts_c)
    params = np.asarray(rec["params"], dtype=np.float64)
    v_gt, _ = asset.fk(params[:61])
    return PreparedRecord(points=pts_c, ppf=ppf, g=g, cond=cond, cmap=cmap_c,
                          binary=binary_c, pairs=pairs_from_scm(scm_c),
                          m_gt=params, v_gt=v_gt)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def train_semantic_step(model: GenerationModel, records: list[PreparedRecord],
                        batch_ids, opt: Adam, rng: np.random.Generator,
                        step: int, weights: LossWeights = LossWeights()) -> dict:
    """One optimizer step of the semantic (contact map) denoiser."""
    cfg = model.config
    net = model.semantic_net
    grads = [np.zeros_like(p) for p in net.params]
    l_r_total = 0.0
    l_c_total = 0.0
    scale = 1.0 / len(batch_ids)
    for rid in batch_ids:
        rec = records[rid]
        n = int(rng.integers(1, cfg.t_total + 1))
        noise = rng.standard_normal(rec.x0_map.shape[0])
        x_n = model.schedule.q_sample(rec.x0_map, n, noise)
        inputs = model._semantic_inputs(x_n, rec.ppf, rec.cond, rec.g, n)
        pred, cache = net.forward(inputs)
        pred = pred[:, 0]
        l_r = recon_loss(pred, rec.x0_map)
        d_pred = 2.0 * (pred - rec.x0_map) * weights.alpha
        l_c = 0.0
        if cfg.loss_c:
            c_hat = (pred + 1.0) / 2.0
            l_c = contact_consistency_loss(c_hat, rec.binary)
            d_pred = d_pred + weights.beta * 0.5 * contact_consistency_grad(c_hat, rec.binary)
        g_list, _ = net.backward(cache, (d_pred * scale)[:, None])
        for acc, g_arr in zip(grads, g_list):
            acc += g_arr
        l_r_total += l_r
        l_c_total += l_c
    loss = weights.alpha * l_r_total * scale + weights.beta * l_c_total * scale
    if not np.isfinite(loss):
        raise TrainingAbort(step, batch_ids, f"semantic loss {loss}")
    opt.step(net.params, grads)
    return {"step": step, "L_R": l_r_total * scale, "L_C": l_c_total * scale,
            "total": loss}


def train_contact_step(model: GenerationModel, records: list[PreparedRecord],
                       batch_ids, opt: Adam, rng: np.random.Generator,
                       asset, step: int,
                       weights: LossWeights = LossWeights()) -> dict:
    """One optimizer step of the contact (grasp vector) denoiser.

    The condition is the ground-truth contact map (teacher condition), which
    keeps the two stages' training independent.
    """
    cfg = model.config
    net = model.grasp_net
    grads = [np.zeros_like(p) for p in net.params]
    sums = {"L_R": 0.0, "L_V": 0.0, "L_TGC": 0.0}
    scale = 1.0 / len(batch_ids)
    for rid in batch_ids:
        rec = records[rid]
        z0 = model.normalize(rec.m_gt)
        n = int(rng.integers(1, cfg.t_total + 1))
        noise = rng.standard_normal(cfg.target_dim)
        z_n = model.schedule.q_sample(z0, n, noise)
        if cfg.frame == "dual":
            pooled = pooled_embedding(rec.ppf, np.zeros_like(rec.cond), rec.cmap)
        else:
            pooled = pooled_embedding(rec.ppf, rec.cond, np.zeros_like(rec.cmap))
        inputs = model._grasp_inputs(z_n, rec.g, pooled, n)
        pred, cache = net.forward(inputs)
        pred = pred[0]
        l_r = recon_loss(pred, z0)
        d_pred = 2.0 * (pred - z0) * weights.alpha
        l_v = 0.0
        l_tgc = 0.0
        if cfg.loss_v or cfg.loss_tgc:
            m_hat = model.denormalize(pred)
            d_m = np.zeros(cfg.target_dim)
            n_hands = cfg.target_dim // 61
            for h_i in range(n_hands):
                seg = slice(61 * h_i, 61 * h_i + 61)
                p_hat = m_hat[seg]
                if cfg.loss_v:
                    v_hat, _ = asset.fk(p_hat)
                    diff = v_hat - rec.v_gt
                    l_v += recon_loss(v_hat, rec.v_gt)
                    d_m[seg] += weights.beta * asset.fk_vjp(
                        p_hat, 2.0 * diff, np.zeros((asset.n_joints, 3)))
                if cfg.loss_tgc and rec.pairs.shape[0]:
                    # scm columns are grouped five per hand
                    mask = rec.pairs[:, 1] // 5 == h_i
                    if mask.any():
                        pairs_h = np.stack([rec.pairs[mask, 0], rec.pairs[mask, 1] % 5],
                                           axis=1)
                        val, g_tgc = tgc_grad_params(asset, p_hat, pairs_h, rec.points)
                        l_tgc += val
                        d_m[seg] += weights.theta * g_tgc
            d_pred = d_pred + d_m * model.grasp_scale
        g_list, _ = net.backward(cache, (d_pred * scale)[None, :])
        for acc, g_arr in zip(grads, g_list):
            acc += g_arr
        sums["L_R"] += l_r
        sums["L_V"] += l_v
        sums["L_TGC"] += l_tgc
    loss = (weights.alpha * sums["L_R"] + weights.beta * sums["L_V"]
            + weights.theta * sums["L_TGC"]) * scale
    if not np.isfinite(loss):
        raise TrainingAbort(step, batch_ids, f"contact loss {loss}")
    opt.step(net.params, grads)
    out = {k: v * scale for k, v in sums.items()}
    out.update(step=step, total=loss)
    return out


def train_model(model: GenerationModel, asset, records: list[dict], *,
                semantic_steps: int, contact_steps: int, batch: int = 32,
                lr: float = 1e-3, seed: int = 0, weights: LossWeights = LossWeights(),
                log_fn=None) -> GenerationModel:
    """Train both modules on prepared records; independent stages."""
    prepared = [prepare_record(model, asset, r) for r in records]
    grasps = np.stack([p.m_gt for p in prepared])
    model.set_normalization(grasps)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(303,))
    rng_sem, rng_con = (np.random.default_rng(s) for s in ss.spawn(2))

    if model.config.frame == "dual":
        opt = Adam(lr=lr)
        for step in range(semantic_steps):
            ids = rng_sem.integers(0, len(prepared), size=min(batch, len(prepared)))
            rec_losses = train_semantic_step(model, prepared, ids, opt, rng_sem,
                                             step, weights)
            if log_fn:
                log_fn("semantic", rec_losses)
        model.semantic_trained = True

    opt = Adam(lr=lr)
    for step in range(contact_steps):
        ids = rng_con.integers(0, len(prepared), size=min(batch, len(prepared)))
        rec_losses = train_contact_step(model, prepared, ids, opt, rng_con,
                                        asset, step, weights)
        if log_fn:
            log_fn("contact", rec_losses)
    model.contact_trained = True
    return model


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed_or_rng),
                                                        spawn_key=(404,)))


def _condition_for(model: GenerationModel, order: np.ndarray, n_points: int,
                   scm: np.ndarray | None, scalar_map: np.ndarray | None) -> np.ndarray:
    """Canonical-order condition block matching the model's training setup."""
    kind = model.config.condition
    scm_c = None if scm is None else np.asarray(scm)[order]
    scalar_c = None if scalar_map is None else np.asarray(scalar_map, dtype=np.float64)[order]
    if kind == "scm" and scm_c is None:
        raise GenerationError("this model conditions on an SCM; none was given")
    if kind in ("binary", "gaussian") and scalar_c is None:
        raise GenerationError(f"this model conditions on a {kind} map; none was given")
    return build_condition(kind, n_points, model.config.n_fingers,
                           scm=scm_c, scalar_map=scalar_c)


def sample_contact_map(model: GenerationModel, points: np.ndarray,
                       scm: np.ndarray | None, seed_or_rng,
                       scalar_map: np.ndarray | None = None) -> np.ndarray:
    """Full ancestral denoising of a contact map; returns values in [0, 1]
    aligned with the input point order."""
    if not model.semantic_trained:
        raise GenerationError("semantic module is untrained; train or load a checkpoint")
    rng = _as_rng(seed_or_rng)
    points = np.asarray(points, dtype=np.float64)
    order = canonical_order(points)
    pts_c = np.ascontiguousarray(points[order])
    cond = _condition_for(model, order, pts_c.shape[0], scm, scalar_map)
    g, ppf = model.encode(pts_c)

    def denoise(x, n):
        pred, _ = model.semantic_net.forward(model._semantic_inputs(x, ppf, cond, g, n))
        return pred[:, 0]

    x0 = ancestral_sample(model.schedule, (pts_c.shape[0],), denoise, rng, CMAP_CLAMP)
    cmap_c = (x0 + 1.0) / 2.0
    out = np.empty_like(cmap_c)
    out[order] = cmap_c
    return out


def sample_grasp(model: GenerationModel, points: np.ndarray,
                 contact_map: np.ndarray | None, seed_or_rng,
                 scm: np.ndarray | None = None,
                 scalar_map: np.ndarray | None = None) -> np.ndarray:
    """Full ancestral denoising of the grasp vector, conditioned on a
    finished contact map (dual frame) or directly on the semantic condition
    (single frame)."""
    if not model.contact_trained:
        raise GenerationError("contact module is untrained; train or load a checkpoint")
    rng = _as_rng(seed_or_rng)
    cfg = model.config
    points = np.asarray(points, dtype=np.float64)
    order = canonical_order(points)
    pts_c = np.ascontiguousarray(points[order])
    g, ppf = model.encode(pts_c)
    if cfg.frame == "dual":
        if contact_map is None:
            raise GenerationError("dual frame requires a finished contact map")
        zeros_cond = np.zeros((pts_c.shape[0], cfg.n_fingers + 1))
        pooled = pooled_embedding(ppf, zeros_cond,
                                  np.asarray(contact_map, dtype=np.float64)[order])
    else:
        cond = _condition_for(model, order, pts_c.shape[0], scm, scalar_map)
        pooled = pooled_embedding(ppf, cond, np.zeros(pts_c.shape[0]))

    def denoise(z, n):
        pred, _ = model.grasp_net.forward(model._grasp_inputs(z, g, pooled, n))
        return pred[0]

    z0 = ancestral_sample(model.schedule, (cfg.target_dim,), denoise, rng, GRASP_CLAMP)
    return model.denormalize(z0)


def generate(model: GenerationModel, asset, points: np.ndarray,
             scm: np.ndarray | None, seed: int,
             scalar_map: np.ndarray | None = None) -> GraspSample:
    """SCM + object -> contact map -> grasp -> posed hand, end to end.

    In the dual frame the grasp stage sees only the finished stage-one map.
    In the single frame the grasp stage is conditioned directly and the
    returned contact map is computed from the posed hand."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(505,))
    rng_map, rng_grasp = (np.random.default_rng(s) for s in ss.spawn(2))
    if model.config.frame == "dual":
        cmap = sample_contact_map(model, points, scm, rng_map, scalar_map=scalar_map)
        params = sample_grasp(model, points, cmap, rng_grasp)
    else:
        params = sample_grasp(model, points, None, rng_grasp, scm=scm,
                              scalar_map=scalar_map)
        from .contact import ObjectCloud, compute_contact_map
        verts_tmp, _ = asset.fk(params[:61])
        cmap = compute_contact_map(ObjectCloud(points=np.asarray(points, dtype=np.float64)),
                                   verts_tmp)
    verts, joints = asset.fk(params[:61])
    return GraspSample(contact_map=cmap, hand_params=params, verts=verts,
                       joints=joints, seed=int(seed))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: GenerationModel, path) -> str:
    arrays = {"grasp_mean": model.grasp_mean, "grasp_scale": model.grasp_scale,
              "betas": model.schedule.betas,
              "flags": np.array([int(model.semantic_trained),
                                 int(model.contact_trained)], dtype=np.int64)}
    for i, p in enumerate(model.semantic_net.params):
        arrays[f"sem{i}"] = p
    for i, p in enumerate(model.grasp_net.params):
        arrays[f"gra{i}"] = p
    for i, w in enumerate(model.encoder.weights):
        arrays[f"enc{i}"] = w
    meta = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
            "config": model.config.to_meta(), "hand_sha": model.hand_sha}
    return container.save(path, arrays, meta)


def load_checkpoint(path, asset) -> GenerationModel:
    arrays, meta, _ = container.load(path)
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a checkpoint")
    if meta.get("hand_sha") != asset.sha256:
        raise CheckpointError(
            "checkpoint was trained against a different hand asset "
            f"({meta.get('hand_sha', '?')[:12]} != {asset.sha256[:12]})")
    config = DenoiserConfig.from_meta(meta["config"])
    enc_weights = [arrays[f"enc{i}"] for i in range(6)]
    model = GenerationModel(config, hand_sha=asset.sha256,
                            encoder=FrozenEncoder(seed=config.seed, d_point=D_POINT,
                                                  d_global=D_GLOBAL, weights=enc_weights))
    model.semantic_net.set_params([arrays[f"sem{i}"]
                                   for i in range(len(model.semantic_net.params))])
    model.grasp_net.set_params([arrays[f"gra{i}"]
                                for i in range(len(model.grasp_net.params))])
    model.grasp_mean = arrays["grasp_mean"]
    model.grasp_scale = arrays["grasp_scale"]
    model.semantic_trained = bool(arrays["flags"][0])
    model.contact_trained = bool(arrays["flags"][1])
    return model

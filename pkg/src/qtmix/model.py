"""Full classifier: embeddings, quantum token mixer, readout head.

A document flows window by window: token ids gather embedding rows, a
linear projection turns each row into per-token template angles, the
mixer produces a 3q-dim expectation readout, and a small MLP maps that
to class logits. Window logits are combined by plain averaging or by a
learned attention pool, and the loss adds the norm-targeting and
coefficient regularizers on top of cross-entropy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tensor, parameter
from .circuits import AnsatzAngles
from .config import LossConfig, ModelConfig
from .data import Document
from .errors import InputError
from .mixer import MixerParams, mix_window


@dataclass
class Params:
    """All trainable tensors. ``named`` gives the canonical name -> tensor
    map used by the optimizer, checkpoints, and the gradient checker."""

    embed_table: Tensor         # (vocab, embed_dim)
    embed_proj: Tensor          # (4*embed_layers*q, embed_dim)
    mixer: MixerParams
    head_w1: Tensor             # (hidden, 3q)
    head_b1: Tensor             # (hidden,)
    head_w2: Tensor             # (classes, hidden)
    head_b2: Tensor             # (classes,)
    attn_vec: Tensor | None = None   # (3q,) for attention pooling

    def named(self) -> dict[str, Tensor]:
        out = {
            "embed_table": self.embed_table,
            "embed_proj": self.embed_proj,
            "lcu_coeffs": self.mixer.lcu_coeffs,
            "poly_coeffs": self.mixer.poly_coeffs,
            "ff_angles": self.mixer.ff_angles.theta,
            "head_w1": self.head_w1,
            "head_b1": self.head_b1,
            "head_w2": self.head_w2,
            "head_b2": self.head_b2,
        }
        if self.attn_vec is not None:
            out["attn_vec"] = self.attn_vec
        return out

    def zero_grads(self) -> None:
        for t in self.named().values():
            t.zero_grad()


def _xavier(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def init_params(cfg: ModelConfig, vocab_size: int, n_classes: int,
                seed: int) -> Params:
    """Draw fresh parameters. The draw order below is part of the
    reproducibility contract: table, projection, mixing coefficients,
    polynomial coefficients, template angles, head weights. Biases and
    the attention vector start at zero (zero attention scores make the
    pool an exact uniform average, so both aggregations start equal)."""
    if n_classes < 2:
        raise InputError(f"need at least 2 classes, got {n_classes}")
    if vocab_size < 2:
        raise InputError(f"vocab must include PAD and UNK, got size {vocab_size}")
    rng = np.random.default_rng(seed)
    q = cfg.qubits
    angle_dim = kernels.angle_count(q, cfg.embed_layers)
    n_feat = 3 * q

    table = _xavier(rng, vocab_size, cfg.embed_dim)
    proj = _xavier(rng, angle_dim, cfg.embed_dim)

    n = cfg.window
    r = rng.uniform(0.0, cfg.init_coeff_noise / n, size=n)
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    lcu = 1.0 / n + r * np.exp(1j * phi)

    d = cfg.degree
    rc = rng.uniform(0.0, cfg.init_coeff_noise, size=d + 1)
    phc = rng.uniform(0.0, 2.0 * np.pi, size=d + 1)
    poly = rc * np.exp(1j * phc)
    poly[1] += 1.0                     # start near the plain linear mix P(M) = M

    ff_count = kernels.angle_count(q, cfg.ff_layers)
    ff = rng.uniform(-cfg.init_angle_scale, cfg.init_angle_scale, size=ff_count)

    w1 = _xavier(rng, cfg.hidden, n_feat)
    w2 = _xavier(rng, n_classes, cfg.hidden)

    mixer = MixerParams(
        lcu_coeffs=parameter(lcu),
        poly_coeffs=parameter(poly),
        ff_angles=AnsatzAngles(parameter(ff), q=q, layers=cfg.ff_layers),
    )
    attn = None
    if cfg.aggregation == "attention_pool":
        attn = parameter(np.zeros(n_feat))
    return Params(
        embed_table=parameter(table),
        embed_proj=parameter(proj),
        mixer=mixer,
        head_w1=parameter(w1),
        head_b1=parameter(np.zeros(cfg.hidden)),
        head_w2=parameter(w2),
        head_b2=parameter(np.zeros(n_classes)),
        attn_vec=attn,
    )


@dataclass
class ForwardResult:
    logits: Tensor                  # (classes,) document logits
    mean_pre_norm: Tensor           # 0-d, mean squared norm across windows
    pre_norms: list                 # per-window 0-d tensors
    lcu_weights: list               # per-window (n,) coefficient tensors
    window_logits: list             # per-window (classes,) tensors


def _forward_window(ids: np.ndarray, mask: np.ndarray, params: Params,
                    cfg: ModelConfig, rng, training: bool, window_id):
    emb = ad.take_rows(params.embed_table, ids)
    theta = ad.matmul(emb, ad.transpose(params.embed_proj))
    out = mix_window(theta, params.mixer, mask, q=cfg.qubits,
                     embed_layers=cfg.embed_layers, window_id=window_id,
                     normalize_lcu=cfg.normalize_lcu)
    feats = out.features
    if cfg.measurement_mask is not None:
        feats = ad.mul_const(feats, np.asarray(cfg.measurement_mask, dtype=np.float64))
    h = ad.add(ad.matvec(params.head_w1, feats), params.head_b1)
    h = ad.relu(h) if cfg.activation == "relu" else ad.tanh(h)
    if training and cfg.dropout > 0.0:
        keep = (rng.random(cfg.hidden) >= cfg.dropout) / (1.0 - cfg.dropout)
        h = ad.mul_const(h, keep)
    logits = ad.add(ad.matvec(params.head_w2, h), params.head_b2)
    return logits, feats, out


def forward_document(doc: Document, params: Params, cfg: ModelConfig, *,
                     training: bool = False, rng=None) -> ForwardResult:
    """Run the whole pipeline on one document.

    ``rng`` supplies dropout draws and must be given when training with
    dropout enabled; one length-``hidden`` uniform vector is consumed per
    window, in window order.
    """
    if not doc.windows:
        raise InputError("document has no windows (empty after tokenization)")
    if training and cfg.dropout > 0.0 and rng is None:
        raise InputError("training forward with dropout needs an rng")

    window_logits, pre_norms, weights, feat_list = [], [], [], []
    for w_id, (ids, mask) in enumerate(doc.windows):
        logits, feats, out = _forward_window(
            ids, mask, params, cfg, rng, training, w_id)
        window_logits.append(logits)
        pre_norms.append(out.pre_norm)
        weights.append(out.lcu_weights)
        feat_list.append(feats)

    n_w = len(window_logits)
    if n_w == 1:
        agg = window_logits[0]
        mean_pre = pre_norms[0]
    else:
        if cfg.aggregation == "attention_pool":
            scores = [ad.sumall(ad.mul(params.attn_vec, f)) for f in feat_list]
            attn = ad.softmax(ad.stack_scalars(scores))
            agg = ad.weighted_sum(attn, window_logits)
        else:
            total = window_logits[0]
            for lg in window_logits[1:]:
                total = ad.add(total, lg)
            agg = ad.mul_const(total, 1.0 / n_w)
        mean_pre = ad.mul_const(ad.sumall(ad.stack_scalars(pre_norms)), 1.0 / n_w)

    return ForwardResult(logits=agg, mean_pre_norm=mean_pre,
                         pre_norms=pre_norms, lcu_weights=weights,
                         window_logits=window_logits)


def loss_terms(result: ForwardResult, label: int, loss_cfg: LossConfig,
               mixer: MixerParams) -> tuple[Tensor, dict]:
    """Total per-document loss and a float breakdown for logging.

    cross-entropy
    + lambda_ps * (mean pre-normalization squared norm - tau)^2
    + lambda_l1 * mean over windows of (sum |mixing coeffs| - 1)^2
    + lambda_smooth * sum |c_{k+1} - c_k|^2
    + lambda_l2  * sum |c_k|^2
    """
    ce = ad.cross_entropy(result.logits, label)
    total = ce
    parts = {"ce": ce.real_item(), "psr": 0.0, "l1c": 0.0,
             "smooth": 0.0, "l2": 0.0,
             "mean_pre_norm": result.mean_pre_norm.real_item()}

    if loss_cfg.lambda_ps > 0.0:
        dev = ad.add_const(result.mean_pre_norm, -loss_cfg.tau)
        pen = ad.mul_const(ad.mul(dev, dev), loss_cfg.lambda_ps)
        parts["psr"] = pen.real_item()
        total = ad.add(total, pen)

    if loss_cfg.lambda_l1 > 0.0:
        per = []
        for w in result.lcu_weights:
            dev = ad.add_const(ad.sumall(ad.absval(w)), -1.0)
            per.append(ad.mul(dev, dev))
        mean_dev = ad.mul_const(ad.sumall(ad.stack_scalars(per)), 1.0 / len(per))
        pen = ad.mul_const(mean_dev, loss_cfg.lambda_l1)
        parts["l1c"] = pen.real_item()
        total = ad.add(total, pen)

    c = mixer.poly_coeffs
    if loss_cfg.lambda_smooth > 0.0:
        k = c.shape[0]
        diffs = ad.sub(ad.slice_vec(c, 1, k), ad.slice_vec(c, 0, k - 1))
        pen = ad.mul_const(ad.square_norm(diffs), loss_cfg.lambda_smooth)
        parts["smooth"] = pen.real_item()
        total = ad.add(total, pen)

    if loss_cfg.lambda_l2 > 0.0:
        pen = ad.mul_const(ad.square_norm(c), loss_cfg.lambda_l2)
        parts["l2"] = pen.real_item()
        total = ad.add(total, pen)

    parts["total"] = total.real_item()
    return total, parts


def document_loss(doc: Document, params: Params, model_cfg: ModelConfig,
                  loss_cfg: LossConfig, *, training: bool = False,
                  rng=None) -> tuple[Tensor, dict]:
    result = forward_document(doc, params, model_cfg, training=training, rng=rng)
    return loss_terms(result, doc.label, loss_cfg, params.mixer)


@dataclass
class ParamCount:
    """Size of the mixer's own parameter block under the two conventions
    for counting complex numbers (pairs of reals vs. single entries)."""

    window: int
    degree: int
    ff_angle_count: int

    @property
    def complex_entries(self) -> int:
        return self.window + (self.degree + 1) + self.ff_angle_count

    @property
    def real_view(self) -> int:
        return 2 * self.window + 2 * (self.degree + 1) + self.ff_angle_count

    @property
    def delta(self) -> int:
        return self.real_view - self.complex_entries


def count_attention_params(cfg: ModelConfig) -> ParamCount:
    """Size of the attention-replacement block (mixing coefficients,
    polynomial coefficients, feed-forward angles) under both counting
    conventions."""
    return ParamCount(window=cfg.window, degree=cfg.degree,
                      ff_angle_count=kernels.angle_count(cfg.qubits, cfg.ff_layers))

"""The tiny on-device multi-task ranking model.

Architecture: shared embeddings and learned soft discretization of scalars,
two target-attention multi-head blocks (one over the real-time watch history,
one over the already-ordered candidate prefix), a multi-gate mixture-of-experts
trunk, and one sigmoid tower per task (has_next, effective_view, like).

Everything runs on the minimal reverse-mode engine in `autograd`; gradients
are checked against central finite differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .autograd import Tensor
from .domain import NetCondition
from .features import (
    CAND_SCALARS,
    CTX_SCALARS,
    FB_CROSS_VOCAB,
    FeatureConfig,
    BundleBatch,
    FeatureBundle,
    HIST_SCALARS,
    stack_bundles,
)

TASKS = ("has_next", "effective_view", "like")
LOSS_EPS = 1e-7


class SchemaMismatchError(RuntimeError):
    """Feature bundle and model weights were built for different schemas."""


@dataclass(frozen=True)
class ModelConfig:
    heads: int = 2
    head_dim: int = 8
    experts: int = 4
    expert_hidden: int = 16
    expert_out: int = 16
    tower_dims: tuple[int, ...] = (32, 16, 1)
    loss_weights: tuple[float, float, float] = (1.0, 1.0, 1.0)
    dtype: str = "float32"

    def __post_init__(self):
        if self.tower_dims[-1] != 1:
            raise ValueError("towers must end in a single logit")
        if min(self.heads, self.head_dim, self.experts, self.expert_hidden, self.expert_out) < 1:
            raise ValueError("all dimensions must be positive")


def production_config() -> tuple[ModelConfig, FeatureConfig]:
    """Production-shaped sizing; only used for the parameter/size budget check."""
    model = ModelConfig(
        heads=8, head_dim=16, experts=12, expert_hidden=64, expert_out=64,
        tower_dims=(128, 64, 32, 1),
    )
    features = FeatureConfig(n_categories=9935, duration_buckets=64)
    return model, features


@dataclass(frozen=True)
class PredictionTriple:
    p_has_next: float
    p_effective_view: float
    p_like: float

    def __post_init__(self):
        for name in ("p_has_next", "p_effective_view", "p_like"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be strictly inside (0,1), got {v}")

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p_has_next, self.p_effective_view, self.p_like)


class Adam:
    """Standard Adam over a named parameter dict."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, Tensor]) -> None:
        self.t += 1
        for name, p in params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient in {name}")
            m = self.m.setdefault(name, np.zeros_like(p.data))
            v = self.v.setdefault(name, np.zeros_like(p.data))
            m[:] = self.beta1 * m + (1 - self.beta1) * g
            v[:] = self.beta2 * v + (1 - self.beta2) * g * g
            mhat = m / (1 - self.beta1 ** self.t)
            vhat = v / (1 - self.beta2 ** self.t)
            p.data = (p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.data.dtype)


class RankingModel:
    """Multi-task ranker with a light estimator-style surface.

    `fit` trains on (bundles, labels), `predict_proba` returns per-task
    probabilities, `get_params`/`set_params` expose the configuration.
    """

    def __init__(self, model_config: ModelConfig | None = None,
                 feature_config: FeatureConfig | None = None, seed: int = 0):
        self.model_config = model_config or ModelConfig()
        self.feature_config = feature_config or FeatureConfig()
        self.seed = seed
        self.schema = self.feature_config.schema_version
        self.params: dict[str, Tensor] = {}
        self._init_params(np.random.default_rng(seed))

    # -- estimator plumbing -------------------------------------------------

    def get_params(self, deep: bool = True) -> dict:
        return {
            "model_config": self.model_config,
            "feature_config": self.feature_config,
            "seed": self.seed,
        }

    def set_params(self, **kwargs) -> "RankingModel":
        for k, v in kwargs.items():
            if k not in ("model_config", "feature_config", "seed"):
                raise ValueError(f"unknown parameter {k}")
            setattr(self, k, v)
        self.schema = self.feature_config.schema_version
        self._init_params(np.random.default_rng(self.seed))
        return self

    # -- parameter construction --------------------------------------------

    def _dtype(self):
        return np.dtype(self.model_config.dtype)

    def _init_params(self, rng: np.random.Generator) -> None:
        fc, mc = self.feature_config, self.model_config
        dt = self._dtype()
        p: dict[str, np.ndarray] = {}

        def emb(name, vocab, dim):
            p[name] = rng.uniform(-0.05, 0.05, size=(vocab, dim))

        def dense(name, fan_in, fan_out, bias=True):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            p[name + "_w"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            if bias:
                p[name + "_b"] = np.zeros(fan_out)

        def autodis(name, n_scalars):
            H, d = fc.autodis_buckets, fc.autodis_dim
            p[name + "_meta"] = rng.uniform(-0.05, 0.05, size=(n_scalars, H, d))
            p[name + "_w"] = rng.normal(0.0, 1.0, size=(n_scalars, H))
            p[name + "_b"] = rng.normal(0.0, 1.0, size=(n_scalars, H))

        emb("emb_cat", fc.category_vocab, fc.category_dim)
        emb("emb_dur", fc.duration_buckets, fc.duration_dim)
        emb("emb_fb", FB_CROSS_VOCAB, fc.feedback_dim)
        emb("emb_net", len(NetCondition), fc.net_dim)
        autodis("ad_hist", len(HIST_SCALARS))
        autodis("ad_cand", len(CAND_SCALARS))
        autodis("ad_ctx", len(CTX_SCALARS))

        rec_dim = fc.category_dim + fc.duration_dim + fc.feedback_dim + len(HIST_SCALARS) * fc.autodis_dim
        cand_dim = fc.category_dim + fc.duration_dim + len(CAND_SCALARS) * fc.autodis_dim
        ctx_dim = fc.net_dim + len(CTX_SCALARS) * fc.autodis_dim
        hd = mc.heads * mc.head_dim
        dense("mha_hist_q", cand_dim, hd, bias=False)
        dense("mha_hist_k", rec_dim, hd, bias=False)
        dense("mha_hist_v", rec_dim, hd, bias=False)
        dense("mha_hist_o", hd, hd, bias=False)
        dense("mha_ord_q", cand_dim, hd, bias=False)
        dense("mha_ord_k", cand_dim, hd, bias=False)
        dense("mha_ord_v", cand_dim, hd, bias=False)
        dense("mha_ord_o", hd, hd, bias=False)

        trunk_in = 2 * hd + cand_dim + ctx_dim
        for e in range(mc.experts):
            dense(f"exp{e}_l1", trunk_in, mc.expert_hidden)
            dense(f"exp{e}_l2", mc.expert_hidden, mc.expert_out)
        for t in range(len(TASKS)):
            dense(f"gate{t}", trunk_in, mc.experts)
            dims = (mc.expert_out,) + mc.tower_dims
            for li, (a, b) in enumerate(zip(dims, dims[1:])):
                dense(f"tower{t}_l{li}", a, b)

        self.params = {k: Tensor(v.astype(dt), requires_grad=True) for k, v in p.items()}
        self._trunk_in = trunk_in

    def parameter_count(self) -> int:
        return sum(t.data.size for t in self.params.values())

    # -- forward -------------------------------------------------------------

    def _autodis(self, name: str, x: np.ndarray) -> Tensor:
        """Vectorized soft discretization: x (..., ns) -> (..., ns*d)."""
        fc = self.feature_config
        w, b, meta = self.params[name + "_w"], self.params[name + "_b"], self.params[name + "_meta"]
        xt = Tensor(x.astype(self._dtype()))
        logits = (xt.reshape(*x.shape, 1) * w + b) * (1.0 / fc.autodis_tau)
        weights = logits.softmax(axis=-1)  # (..., ns, H)
        out = weights.reshape(*x.shape, 1, fc.autodis_buckets) @ meta  # (..., ns, 1, d)
        return out.reshape(*x.shape[:-1], x.shape[-1] * fc.autodis_dim)

    def _encode_records(self, cat, dur, fb, scalars) -> Tensor:
        parts = [
            self.params["emb_cat"].take_rows(cat),
            self.params["emb_dur"].take_rows(dur),
            self.params["emb_fb"].take_rows(fb),
            self._autodis("ad_hist", scalars),
        ]
        return Tensor.concat(parts, axis=-1)

    def _encode_candidates(self, cat, dur, scalars) -> Tensor:
        parts = [
            self.params["emb_cat"].take_rows(cat),
            self.params["emb_dur"].take_rows(dur),
            self._autodis("ad_cand", scalars),
        ]
        return Tensor.concat(parts, axis=-1)

    def _mha(self, prefix: str, query_vec: Tensor, keys: Tensor, mask: np.ndarray) -> Tensor:
        mc = self.model_config
        B = query_vec.shape[0]
        L = keys.shape[1]
        h, dh = mc.heads, mc.head_dim
        q = (query_vec @ self.params[f"{prefix}_q_w"]).reshape(B, 1, h, dh).swapaxes(1, 2)
        k = (keys @ self.params[f"{prefix}_k_w"]).reshape(B, L, h, dh).swapaxes(1, 2)
        v = (keys @ self.params[f"{prefix}_v_w"]).reshape(B, L, h, dh).swapaxes(1, 2)
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))  # (B,h,1,L)
        weights = scores.masked_softmax(mask.reshape(B, 1, 1, L), axis=-1)
        out = (weights @ v).swapaxes(1, 2).reshape(B, h * dh)
        return out @ self.params[f"{prefix}_o_w"]

    def forward(self, batch: BundleBatch) -> Tensor:
        """Probabilities (B, 3) for (has_next, effective_view, like)."""
        if batch.schema != self.schema:
            raise SchemaMismatchError(
                f"bundle schema {batch.schema!r} != model schema {self.schema!r}"
            )
        mc = self.model_config
        hist = self._encode_records(batch.hist_cat, batch.hist_dur, batch.hist_fb,
                                    batch.hist_scalars)
        ordered = self._encode_candidates(batch.ord_cat, batch.ord_dur, batch.ord_scalars)
        target = self._encode_candidates(batch.tgt_cat, batch.tgt_dur, batch.tgt_scalars)
        ctx = Tensor.concat(
            [self.params["emb_net"].take_rows(batch.net), self._autodis("ad_ctx", batch.ctx_scalars)],
            axis=-1,
        )
        a_hist = self._mha("mha_hist", target, hist, batch.hist_mask)
        a_ord = self._mha("mha_ord", target, ordered, batch.ord_mask)
        x = Tensor.concat([a_hist, a_ord, target, ctx], axis=-1)

        expert_outs = []
        for e in range(mc.experts):
            h = (x @ self.params[f"exp{e}_l1_w"] + self.params[f"exp{e}_l1_b"]).relu()
            o = (h @ self.params[f"exp{e}_l2_w"] + self.params[f"exp{e}_l2_b"]).relu()
            expert_outs.append(o.reshape(o.shape[0], 1, mc.expert_out))
        experts = Tensor.concat(expert_outs, axis=1)  # (B, E, out)

        task_probs = []
        for t in range(len(TASKS)):
            gate = (x @ self.params[f"gate{t}_w"] + self.params[f"gate{t}_b"]).softmax(axis=-1)
            mixed = (gate.reshape(gate.shape[0], 1, mc.experts) @ experts).reshape(
                gate.shape[0], mc.expert_out
            )
            h = mixed
            n_layers = len(mc.tower_dims)
            for li in range(n_layers):
                h = h @ self.params[f"tower{t}_l{li}_w"] + self.params[f"tower{t}_l{li}_b"]
                if li < n_layers - 1:
                    h = h.relu()
            task_probs.append(h.sigmoid())
        return Tensor.concat(task_probs, axis=-1)

    def gate_distributions(self, batch: BundleBatch) -> np.ndarray:
        """Per-task expert mixing weights (T, B, E); diagnostic surface."""
        mc = self.model_config
        hist = self._encode_records(batch.hist_cat, batch.hist_dur, batch.hist_fb,
                                    batch.hist_scalars)
        ordered = self._encode_candidates(batch.ord_cat, batch.ord_dur, batch.ord_scalars)
        target = self._encode_candidates(batch.tgt_cat, batch.tgt_dur, batch.tgt_scalars)
        ctx = Tensor.concat(
            [self.params["emb_net"].take_rows(batch.net), self._autodis("ad_ctx", batch.ctx_scalars)],
            axis=-1,
        )
        a_hist = self._mha("mha_hist", target, hist, batch.hist_mask)
        a_ord = self._mha("mha_ord", target, ordered, batch.ord_mask)
        x = Tensor.concat([a_hist, a_ord, target, ctx], axis=-1)
        gates = [
            (x @ self.params[f"gate{t}_w"] + self.params[f"gate{t}_b"]).softmax(axis=-1).data
            for t in range(len(TASKS))
        ]
        return np.stack(gates)

    def predict_proba(self, batch: BundleBatch) -> np.ndarray:
        return self.forward(batch).data

    def predict(self, bundle: FeatureBundle) -> PredictionTriple:
        probs = self.predict_proba(stack_bundles([bundle]))[0]
        probs = np.clip(probs, LOSS_EPS, 1 - LOSS_EPS)
        return PredictionTriple(*(float(x) for x in probs))

    # -- training ------------------------------------------------------------

    def loss(self, probs: Tensor, labels: np.ndarray,
             weights: tuple[float, float, float] | None = None) -> Tensor:
        """Weighted multi-task binary cross entropy, averaged over instances."""
        w = np.asarray(weights if weights is not None else self.model_config.loss_weights,
                       dtype=probs.data.dtype)
        y = np.asarray(labels, dtype=probs.data.dtype)
        p = probs.clip(LOSS_EPS, 1 - LOSS_EPS)
        bce = -(Tensor(y) * p.log() + Tensor(1.0 - y) * (1.0 - p).log())
        return (bce * w).sum(axis=-1).mean()

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def train_step(self, batch: BundleBatch, labels: np.ndarray, optimizer: Adam) -> float:
        self.zero_grad()
        loss = self.loss(self.forward(batch), labels)
        loss.backward()
        optimizer.step(self.params)
        for name, t in self.params.items():
            if not np.all(np.isfinite(t.data)):
                raise FloatingPointError(f"non-finite parameter {name} after update")
        return float(loss.data)

    def fit(self, bundles: list[FeatureBundle], labels: np.ndarray, *,
            epochs: int = 1, batch_size: int = 256, lr: float = 1e-3,
            seed: int = 0, optimizer: Adam | None = None,
            callback=None) -> list[float]:
        """Mini-batch training; returns per-batch losses."""
        labels = np.asarray(labels, dtype=np.float64)
        if labels.ndim != 2 or labels.shape != (len(bundles), 3):
            raise ValueError("labels must be (n, 3) binary array")
        opt = optimizer or Adam(lr=lr)
        rng = np.random.default_rng(seed)
        losses = []
        step = 0
        for _ in range(epochs):
            order = rng.permutation(len(bundles))
            for start in range(0, len(bundles), batch_size):
                idx = order[start:start + batch_size]
                batch = stack_bundles([bundles[i] for i in idx])
                losses.append(self.train_step(batch, labels[idx], opt))
                step += 1
                if callback is not None:
                    callback(step, losses[-1])
        return losses

    # -- raw tensor access for serialization --------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self.params.items()}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self.params):
            missing = set(self.params) ^ set(arrays)
            raise ValueError(f"parameter set mismatch: {sorted(missing)[:5]}")
        for k, v in arrays.items():
            if v.shape != self.params[k].data.shape:
                raise ValueError(f"shape mismatch for {k}")
            self.params[k] = Tensor(v.copy(), requires_grad=True)

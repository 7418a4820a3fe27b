"""Byte-level probability model trained online while (de)compressing.

Architecture: per-byte embeddings of the last `context_len` bytes are
concatenated into a feature row, refined by a local multi-branch block,
passed through the latent transform (down-project, per-lane latent matrix,
up-project), refined again by a global multi-branch block, and mapped to a
256-way softmax. One model instance is owned by one thread; `predict` is
pure and only `train_step` mutates parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels, nn
from .nn import Parameter

VOCAB = 256


@dataclass
class ModelConfig:
    context_len: int = 16
    embed_dim: int = 16
    hidden_local: int = 2048
    hidden_global: int = 4096
    lte_ratio: int = 4
    branches: int = 2
    lanes: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    @property
    def feature_dim(self) -> int:
        return self.context_len * self.embed_dim

    @property
    def latent_dim(self) -> int:
        return self.feature_dim // self.lte_ratio

    def validate(self) -> None:
        if self.context_len < 1:
            raise ValueError("context_len must be >= 1")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be >= 1")
        if self.branches < 1:
            raise ValueError("branches must be >= 1")
        if self.lanes < 1:
            raise ValueError("lanes must be >= 1")
        if self.hidden_local < 1 or self.hidden_global < 1:
            raise ValueError("hidden dims must be >= 1")
        if self.lte_ratio < 1 or self.feature_dim % self.lte_ratio != 0:
            raise ValueError("lte_ratio must divide context_len * embed_dim")
        if self.feature_dim // self.lte_ratio < 1:
            raise ValueError("latent dim must be >= 1")

    def with_overrides(self, **kwargs) -> "ModelConfig":
        return replace(self, **kwargs)


class MbrbBlock:
    """Residual refinement block with multiplicative branch fusion.

    x -> LN -> k parallel linears -> elementwise product -> GeLU ->
    output linear -> + x.
    """

    def __init__(self, name: str, rng: np.random.Generator, feature_dim: int,
                 hidden: int, branches: int):
        self.feature_dim = feature_dim
        self.hidden = hidden
        self.branches = branches
        self.ln_gain = nn.ones_param(f"{name}.ln_gain", (1, feature_dim))
        self.ln_bias = nn.zeros_param(f"{name}.ln_bias", (1, feature_dim))
        self.branch_w = [
            nn.uniform_param(f"{name}.branch{i}_w", rng, (feature_dim, hidden), feature_dim)
            for i in range(branches)
        ]
        self.branch_b = [nn.zeros_param(f"{name}.branch{i}_b", (1, hidden)) for i in range(branches)]
        self.out_w = nn.uniform_param(f"{name}.out_w", rng, (hidden, feature_dim), hidden)
        self.out_b = nn.zeros_param(f"{name}.out_b", (1, feature_dim))

    def parameters(self) -> list[Parameter]:
        params = [self.ln_gain, self.ln_bias]
        for w, b in zip(self.branch_w, self.branch_b):
            params += [w, b]
        params += [self.out_w, self.out_b]
        return params

    def forward(self, x: np.ndarray):
        x0, ln_cache = nn.layer_norm_forward(x, self.ln_gain, self.ln_bias)
        hs = [nn.linear_forward(x0, w, b) for w, b in zip(self.branch_w, self.branch_b)]
        fused = hs[0]
        for h in hs[1:]:
            fused = fused * h
        ff, gelu_cache = nn.gelu_forward(fused)
        out = nn.linear_forward(ff, self.out_w, self.out_b) + x
        return out, (x0, ln_cache, hs, gelu_cache, ff)

    def backward(self, cache, upstream: np.ndarray) -> np.ndarray:
        x0, ln_cache, hs, gelu_cache, ff = cache
        g_ff = nn.linear_backward(ff, self.out_w, self.out_b, upstream)
        g_fused = nn.gelu_backward(gelu_cache, g_ff)
        # grad of the k-way product: prefix/suffix partial products avoid
        # dividing by branch outputs that may contain zeros.
        k = len(hs)
        g_x0 = None
        for i in range(k):
            g_hi = g_fused
            for j in range(k):
                if j != i:
                    g_hi = g_hi * hs[j]
            g = nn.linear_backward(x0, self.branch_w[i], self.branch_b[i], g_hi)
            g_x0 = g if g_x0 is None else g_x0 + g
        g_x = nn.layer_norm_backward(ln_cache, self.ln_gain, self.ln_bias, g_x0)
        return g_x + upstream

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())


class LteBlock:
    """Latent transform: down-project, per-lane latent matrix, up-project.

    The latent matrices are lane-indexed (one square matrix per lane row),
    which ties the parameter count to the lane count; the lane count is
    therefore frozen into the compressed-file header.
    """

    def __init__(self, name: str, rng: np.random.Generator, feature_dim: int,
                 latent_dim: int, lanes: int):
        self.feature_dim = feature_dim
        self.latent_dim = latent_dim
        self.lanes = lanes
        self.down_w = nn.uniform_param(f"{name}.down_w", rng, (feature_dim, latent_dim), feature_dim)
        self.down_b = nn.zeros_param(f"{name}.down_b", (1, latent_dim))
        self.lane_mats = nn.uniform_param(f"{name}.lane_mats", rng,
                                          (lanes, latent_dim, latent_dim), latent_dim)
        self.up_w = nn.uniform_param(f"{name}.up_w", rng, (latent_dim, feature_dim), latent_dim)
        self.up_b = nn.zeros_param(f"{name}.up_b", (1, feature_dim))

    def parameters(self) -> list[Parameter]:
        return [self.down_w, self.down_b, self.lane_mats, self.up_w, self.up_b]

    def forward(self, x: np.ndarray):
        if x.shape[0] != self.lanes:
            raise ValueError(f"lte expects {self.lanes} rows, got {x.shape[0]}")
        down = nn.linear_forward(x, self.down_w, self.down_b)
        mixed = nn.per_row_matmul_forward(down, self.lane_mats)
        out = nn.linear_forward(mixed, self.up_w, self.up_b)
        return out, (x, down, mixed)

    def backward(self, cache, upstream: np.ndarray) -> np.ndarray:
        x, down, mixed = cache
        g_mixed = nn.linear_backward(mixed, self.up_w, self.up_b, upstream)
        g_down = nn.per_row_matmul_backward(down, self.lane_mats, g_mixed)
        return nn.linear_backward(x, self.down_w, self.down_b, g_down)

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())


@dataclass
class StepCache:
    """Forward intermediates handed from predict to train_step."""
    version: int
    contexts: np.ndarray
    x: np.ndarray
    local_cache: tuple
    x_local: np.ndarray
    lte_cache: tuple
    x_lte: np.ndarray
    global_cache: tuple
    x_global: np.ndarray
    logits: np.ndarray
    probs: np.ndarray = field(repr=False, default=None)


class EdpcModel:
    """The full predictor; construction order of parameters fixes the seed stream."""

    def __init__(self, cfg: ModelConfig):
        cfg.validate()
        self.cfg = cfg
        f = cfg.feature_dim
        rng = nn.make_rng(cfg.seed)
        self.embedding = nn.uniform_param("embedding", rng, (VOCAB, cfg.embed_dim), cfg.embed_dim)
        self.local = MbrbBlock("local", rng, f, cfg.hidden_local, cfg.branches)
        self.lte = LteBlock("lte", rng, f, cfg.latent_dim, cfg.lanes)
        self.global_ = MbrbBlock("global", rng, f, cfg.hidden_global, cfg.branches)
        self.head_w = nn.uniform_param("head_w", rng, (f, VOCAB), f)
        self.head_b = nn.zeros_param("head_b", (1, VOCAB))
        self._version = 0
        self._flatten_parameters()

    def _flatten_parameters(self) -> None:
        # Rebind every parameter's buffers as views into four flat arrays so
        # the Adam update runs as a handful of whole-model vector ops instead
        # of dozens of small ones. Values are bitwise the same either way.
        params = self.parameters()
        total = sum(p.size for p in params)
        self._flat_value = np.empty(total)
        self._flat_grad = np.zeros(total)
        self._flat_m = np.zeros(total)
        self._flat_v = np.zeros(total)
        offset = 0
        for p in params:
            end = offset + p.size
            self._flat_value[offset:end] = p.value.reshape(-1)
            p.value = self._flat_value[offset:end].reshape(p.shape)
            p.grad = self._flat_grad[offset:end].reshape(p.shape)
            p.m = self._flat_m[offset:end].reshape(p.shape)
            p.v = self._flat_v[offset:end].reshape(p.shape)
            offset = end
        self._params = params
        self._adam_t = 0

    def _adam_all(self) -> None:
        """One fused Adam step over the flat buffers.

        Semantics match applying nn.adam_step to every parameter (the test
        suite checks the equivalence); the single fused pass is just faster.
        """
        cfg = self.cfg
        self._adam_t += 1
        _kernels.adam_update(self._flat_value, self._flat_grad,
                             self._flat_m, self._flat_v, self._adam_t,
                             cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
        for p in self._params:
            p.step_count = self._adam_t

    def parameters(self) -> list[Parameter]:
        return ([self.embedding] + self.local.parameters() + self.lte.parameters()
                + self.global_.parameters() + [self.head_w, self.head_b])

    def predict(self, contexts: np.ndarray):
        """Probability rows for the next byte of each lane.

        contexts: (lanes, context_len) byte values. Returns (probs, cache);
        the cache feeds the immediately following train_step.
        """
        cfg = self.cfg
        contexts = np.ascontiguousarray(contexts)
        if contexts.shape != (cfg.lanes, cfg.context_len):
            raise ValueError(
                f"contexts shape {contexts.shape} != ({cfg.lanes}, {cfg.context_len})")
        idx = contexts.astype(np.intp, copy=False)
        if idx.min() < 0 or idx.max() >= VOCAB:
            raise ValueError("context byte out of range")
        x = self.embedding.value[idx].reshape(cfg.lanes, cfg.feature_dim)
        x_local, local_cache = self.local.forward(x)
        x_lte, lte_cache = self.lte.forward(x_local)
        x_global, global_cache = self.global_.forward(x_lte)
        logits = nn.linear_forward(x_global, self.head_w, self.head_b)
        probs = nn.softmax(logits)
        cache = StepCache(self._version, idx, x, local_cache, x_local,
                          lte_cache, x_lte, global_cache, x_global, logits, probs)
        return probs, cache

    def train_step(self, cache: StepCache, targets: np.ndarray) -> float:
        """Cross-entropy loss, full backward pass, one Adam step. Returns loss in nats."""
        if cache.version != self._version:
            raise ValueError("stale cache: model was updated since this predict")
        cfg = self.cfg
        targets = np.asarray(targets)
        loss, _, g_logits = nn.softmax_cross_entropy(cache.logits, targets)
        g = nn.linear_backward(cache.x_global, self.head_w, self.head_b, g_logits)
        g = self.global_.backward(cache.global_cache, g)
        g = self.lte.backward(cache.lte_cache, g)
        g = self.local.backward(cache.local_cache, g)
        g_embed = g.reshape(cfg.lanes, cfg.context_len, cfg.embed_dim)
        np.add.at(self.embedding.grad, cache.contexts.reshape(-1),
                  g_embed.reshape(-1, cfg.embed_dim))
        self._adam_all()
        self._version += 1
        return loss

    def param_count(self) -> dict[str, int]:
        counts = {
            "embedding": self.embedding.size,
            "local": self.local.param_count(),
            "lte": self.lte.param_count(),
            "global": self.global_.param_count(),
            "head": self.head_w.size + self.head_b.size,
        }
        counts["total"] = sum(counts.values())
        return counts

    def state_checksum(self) -> str:
        """Hex digest over all parameter bytes; used to verify encoder/decoder lockstep."""
        import hashlib
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(p.value.tobytes())
        return h.hexdigest()


def lte_param_count(feature_dim: int, lte_ratio: int, lanes: int) -> int:
    """Closed form: down + per-lane matrices + up, including biases."""
    latent = feature_dim // lte_ratio
    return (feature_dim * latent + latent
            + lanes * latent * latent
            + latent * feature_dim + feature_dim)


def dense_mixer_param_count(feature_dim: int) -> int:
    """The full feature_dim x feature_dim linear the latent transform replaces."""
    return feature_dim * feature_dim + feature_dim


def model_param_count(cfg: ModelConfig) -> int:
    """Closed-form total for the full model (matches EdpcModel.param_count)."""
    f = cfg.feature_dim
    mbrb = lambda h: 2 * f + cfg.branches * (f * h + h) + h * f + f
    return (VOCAB * cfg.embed_dim
            + mbrb(cfg.hidden_local)
            + lte_param_count(f, cfg.lte_ratio, cfg.lanes)
            + mbrb(cfg.hidden_global)
            + f * VOCAB + VOCAB)


def model_param_count_dense_mixer(cfg: ModelConfig) -> int:
    """Total parameters if the latent transform were a plain dense mixer."""
    f = cfg.feature_dim
    return (model_param_count(cfg)
            - lte_param_count(f, cfg.lte_ratio, cfg.lanes)
            + dense_mixer_param_count(f))

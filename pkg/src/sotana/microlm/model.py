"""Micro decoder-only transformer with LoRA injection into every linear weight.

Desk-scale defaults: byte-level vocab of 256, d_model 64, 2 layers, 2 heads,
sequence length 128. All linear projections (attention q/k/v/o, both
feed-forward matrices, and the output head) are bias-free so they can be
wrapped by LoraLinear; embeddings and layer norms stay frozen after injection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from .lora import LoraError, LoraLinear


@dataclass
class ModelConfig:
    vocab_size: int = 256
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 2
    ff_mult: int = 4
    max_seq_len: int = 128
    dtype: str = "float64"

    def torch_dtype(self) -> torch.dtype:
        return {"float32": torch.float32, "float64": torch.float64}[self.dtype]


class CausalSelfAttention(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        assert cfg.d_model % cfg.n_heads == 0
        d = cfg.d_model
        self.n_heads = cfg.n_heads
        self.head_dim = d // cfg.n_heads
        dt = cfg.torch_dtype()
        self.q_proj = nn.Linear(d, d, bias=False, dtype=dt)
        self.k_proj = nn.Linear(d, d, bias=False, dtype=dt)
        self.v_proj = nn.Linear(d, d, bias=False, dtype=dt)
        self.o_proj = nn.Linear(d, d, bias=False, dtype=dt)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        def split(z):
            return z.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        q, k, v = split(self.q_proj(x)), split(self.k_proj(x)), split(self.v_proj(x))
        att = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        mask = torch.triu(torch.ones(t, t, dtype=torch.bool, device=x.device), 1)
        att = att.masked_fill(mask, float("-inf"))
        att = F.softmax(att, dim=-1)
        y = (att @ v).transpose(1, 2).contiguous().view(b, t, d)
        return self.o_proj(y)


class DecoderBlock(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d, dt = cfg.d_model, cfg.torch_dtype()
        self.ln1 = nn.LayerNorm(d, dtype=dt)
        self.attn = CausalSelfAttention(cfg)
        self.ln2 = nn.LayerNorm(d, dtype=dt)
        self.ff1 = nn.Linear(d, cfg.ff_mult * d, bias=False, dtype=dt)
        self.ff2 = nn.Linear(cfg.ff_mult * d, d, bias=False, dtype=dt)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x))
        x = x + self.ff2(F.gelu(self.ff1(self.ln2(x))))
        return x


class MicroTransformer(nn.Module):
    """Plain (pre-injection) decoder-only model."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        dt = cfg.torch_dtype()
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.d_model).to(dt)
        self.pos_emb = nn.Parameter(
            torch.zeros(1, cfg.max_seq_len, cfg.d_model, dtype=dt)
        )
        self.blocks = nn.ModuleList(DecoderBlock(cfg) for _ in range(cfg.n_layers))
        self.ln_f = nn.LayerNorm(cfg.d_model, dtype=dt)
        self.head = nn.Linear(cfg.d_model, cfg.vocab_size, bias=False, dtype=dt)
        self.lora_injected = False

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        b, t = tokens.shape
        if t > self.cfg.max_seq_len:
            raise ValueError(f"sequence length {t} exceeds max {self.cfg.max_seq_len}")
        x = self.tok_emb(tokens) + self.pos_emb[:, :t, :]
        for block in self.blocks:
            x = block(x)
        return self.head(self.ln_f(x))


def _named_linears(model: nn.Module):
    for name, module in model.named_modules():
        for child_name, child in module.named_children():
            if isinstance(child, nn.Linear):
                full = f"{name}.{child_name}" if name else child_name
                yield full, module, child_name, child


def inject_lora(
    model: MicroTransformer,
    r: int,
    alpha: float,
    dropout_p: float = 0.0,
    int8_frozen: bool = False,
    generator: torch.Generator | None = None,
) -> MicroTransformer:
    """Wrap every nn.Linear in LoraLinear and freeze everything else, in place."""
    if getattr(model, "lora_injected", False):
        raise LoraError("model already has LoRA adapters")
    linears = list(_named_linears(model))
    for full, _, _, lin in linears:
        n, k = lin.weight.shape
        if r > min(n, k):
            raise LoraError(f"rank {r} too large for layer {full} ({n}x{k})")
    for full, parent, child_name, lin in linears:
        wrapped = LoraLinear(
            lin.weight,
            r=r,
            alpha=alpha,
            dropout_p=dropout_p,
            int8_frozen=int8_frozen,
            generator=generator,
        )
        setattr(parent, child_name, wrapped)
    for name, p in model.named_parameters():
        leaf = name.rsplit(".", 1)[-1]
        p.requires_grad = leaf in ("A", "B")
    model.lora_injected = True
    return model


def merge_adapters(model: MicroTransformer) -> MicroTransformer:
    """Fold each adapter into its frozen weight, restoring plain nn.Linear."""
    lora_layers = [
        (parent, child_name, child)
        for _, parent, child_name, child in _named_lora(model)
    ]
    if not lora_layers:
        raise LoraError("model has no adapters to merge")
    for parent, child_name, layer in lora_layers:
        merged = layer.merged_weight()
        lin = nn.Linear(
            layer.in_features, layer.out_features, bias=False, dtype=merged.dtype
        )
        with torch.no_grad():
            lin.weight.copy_(merged)
        lin.weight.requires_grad = False
        setattr(parent, child_name, lin)
    model.lora_injected = False
    return model


def _named_lora(model: nn.Module):
    for name, module in model.named_modules():
        for child_name, child in module.named_children():
            if isinstance(child, LoraLinear):
                full = f"{name}.{child_name}" if name else child_name
                yield full, module, child_name, child


def lora_layers(model: nn.Module) -> list[tuple[str, LoraLinear]]:
    return [(full, child) for full, _, _, child in _named_lora(model)]


def count_params(model: MicroTransformer) -> tuple[int, int]:
    """(frozen, trainable) parameter counts; trainable is sum of (n+k)*r."""
    trainable = 0
    frozen = 0
    for _, layer in lora_layers(model):
        trainable += layer.trainable_param_count()
        frozen += layer.out_features * layer.in_features
    for name, p in model.named_parameters():
        leaf = name.rsplit(".", 1)[-1]
        if leaf in ("A", "B"):
            continue
        frozen += p.numel()
    # plain (uninjected or merged) linears are counted via named_parameters;
    # int8-frozen weights live in buffers and were counted above
    if not any(True for _ in _named_lora(model)):
        frozen = sum(p.numel() for p in model.parameters())
        trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    return frozen, trainable

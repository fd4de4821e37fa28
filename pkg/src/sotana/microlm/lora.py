"""Low-rank adapter linear layer and int8 frozen-weight quantization.

The adapted forward pass is

    y = W x + (alpha / r) * B (A x)

with W frozen (optionally stored as per-row absmax int8), A of shape (r, k)
Gaussian-initialized, and B of shape (n, r) zero-initialized so the adapter
contributes exactly zero before training. Trainable parameters per layer:
(n + k) * r.
"""

from __future__ import annotations

import torch
import torch.nn as nn

LORA_A_INIT_STD = 0.02


class LoraError(Exception):
    pass


def quantize_int8(w: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-row absmax quantization: returns (int8 values, per-row scales)."""
    if w.dim() != 2:
        raise LoraError("quantize_int8 expects a 2-D weight")
    if not torch.isfinite(w).all():
        raise LoraError("weight contains non-finite values")
    scale = w.abs().amax(dim=1) / 127.0
    safe = torch.where(scale == 0, torch.ones_like(scale), scale)
    q = torch.round(w / safe[:, None]).clamp(-127, 127).to(torch.int8)
    return q, scale


def dequantize_int8(q: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return q.to(scale.dtype) * scale[:, None]


class LoraLinear(nn.Module):
    """Frozen linear weight with trainable low-rank factors.

    Bias-free; dropout applies to the adapter input path only.
    """

    def __init__(
        self,
        weight: torch.Tensor,
        r: int,
        alpha: float,
        dropout_p: float = 0.0,
        int8_frozen: bool = False,
        generator: torch.Generator | None = None,
    ):
        super().__init__()
        n, k = weight.shape
        if not (1 <= r <= min(n, k)):
            raise LoraError(f"rank {r} out of range for a {n}x{k} weight")
        if not (0.0 <= dropout_p < 1.0):
            raise LoraError("dropout_p must be in [0, 1)")
        self.out_features = n
        self.in_features = k
        self.r = r
        self.alpha = float(alpha)
        self.dropout_p = float(dropout_p)
        self.int8_frozen = int8_frozen

        w = weight.detach().clone()
        if int8_frozen:
            q, scale = quantize_int8(w)
            self.register_buffer("weight_q", q)
            self.register_buffer("weight_scale", scale)
        else:
            self.register_buffer("weight", w)

        a = torch.empty(r, k, dtype=w.dtype)
        a.normal_(mean=0.0, std=LORA_A_INIT_STD, generator=generator)
        self.A = nn.Parameter(a)
        self.B = nn.Parameter(torch.zeros(n, r, dtype=w.dtype))
        self._dropout_generator = generator

    def frozen_weight(self) -> torch.Tensor:
        if self.int8_frozen:
            return dequantize_int8(self.weight_q, self.weight_scale)
        return self.weight

    def trainable_param_count(self) -> int:
        return (self.out_features + self.in_features) * self.r

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        base = x @ self.frozen_weight().t()
        xd = x
        if self.training and self.dropout_p > 0.0:
            keep = 1.0 - self.dropout_p
            mask = (
                torch.rand(
                    x.shape, generator=self._dropout_generator, dtype=x.dtype
                )
                < keep
            ).to(x.dtype) / keep
            xd = x * mask
        delta = (xd @ self.A.t()) @ self.B.t()
        return base + (self.alpha / self.r) * delta

    def merged_weight(self) -> torch.Tensor:
        """W + (alpha/r) B A, in full precision."""
        return self.frozen_weight() + (self.alpha / self.r) * (self.B @ self.A)

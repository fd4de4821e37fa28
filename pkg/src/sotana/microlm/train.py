"""Instruction tuning of the micro model: loss, Adam loop, greedy decoding.

Sequences are byte-level: each character maps to its codepoint clamped to the
vocab, with id 0 reserved as both pad and end-of-sequence. The training
objective is next-token cross-entropy over response positions only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from .. import corpus
from ..dataforge import InstructionTriple
from .model import MicroTransformer, ModelConfig, count_params, lora_layers

EOS_ID = 0


class TrainError(Exception):
    pass


@dataclass
class TrainConfig:
    r: int = 8
    alpha: float = 16.0
    learning_rate: float = 1e-4
    batch_size: int = 32      # full-scale value: 512
    dropout_p: float = 0.05
    max_seq_len: int = 128    # full-scale value: 512
    epochs: int = 5           # full-scale runs use 5/5/3 by model size
    rng_seed: int = 0
    int8_frozen: bool = False

    def __post_init__(self):
        if min(self.r, self.batch_size, self.max_seq_len) < 1 or self.epochs < 0:
            raise TrainError("invalid training configuration")
        if not (0.0 <= self.dropout_p < 1.0):
            raise TrainError("dropout_p must be in [0, 1)")
        if self.learning_rate <= 0 or self.alpha <= 0:
            raise TrainError("learning_rate and alpha must be positive")


@dataclass
class TrainingHistory:
    losses: list[float] = field(default_factory=list)


def encode_text(text: str, vocab_size: int) -> list[int]:
    return [min(ord(c), vocab_size - 1) for c in text]


def decode_tokens(tokens: list[int]) -> str:
    return "".join(chr(t) for t in tokens if t != EOS_ID)


def render_example(
    triple: InstructionTriple, max_seq_len: int, vocab_size: int
) -> tuple[list[int], list[int]]:
    """Returns (token ids, 0/1 response mask) for one instruction triple."""
    prompt = corpus.render_prompt(
        triple.instruction, triple.input, max_tokens=max_seq_len
    ).rendered
    prompt_ids = encode_text(prompt + "\n", vocab_size)
    target_ids = encode_text(triple.output, vocab_size) + [EOS_ID]
    if len(target_ids) >= max_seq_len:
        target_ids = target_ids[: max_seq_len - 1]
    # keep the prompt tail so the response region always fits the window
    keep = max(1, max_seq_len - len(target_ids))
    prompt_ids = prompt_ids[-keep:]
    ids = (prompt_ids + target_ids)[:max_seq_len]
    mask = ([0] * len(prompt_ids) + [1] * len(target_ids))[:max_seq_len]
    return ids, mask


def collate(
    examples: list[tuple[list[int], list[int]]]
) -> tuple[torch.Tensor, torch.Tensor]:
    width = max(len(ids) for ids, _ in examples)
    toks = torch.zeros(len(examples), width, dtype=torch.long)
    mask = torch.zeros(len(examples), width, dtype=torch.bool)
    for i, (ids, m) in enumerate(examples):
        toks[i, : len(ids)] = torch.tensor(ids, dtype=torch.long)
        mask[i, : len(m)] = torch.tensor(m, dtype=torch.bool)
    return toks, mask


def loss_and_grads(
    model: MicroTransformer, tokens: torch.Tensor, mask: torch.Tensor
) -> tuple[float, dict[str, torch.Tensor]]:
    """Masked next-token cross-entropy plus gradients for every A/B matrix."""
    model.zero_grad(set_to_none=True)
    loss = compute_loss(model, tokens, mask)
    loss.backward()
    grads = {
        name: p.grad.detach().clone()
        for name, p in model.named_parameters()
        if p.requires_grad
    }
    return float(loss.detach()), grads


def compute_loss(
    model: MicroTransformer, tokens: torch.Tensor, mask: torch.Tensor
) -> torch.Tensor:
    if tokens.shape != mask.shape:
        raise TrainError("tokens and mask shapes differ")
    inputs, targets, tmask = tokens[:, :-1], tokens[:, 1:], mask[:, 1:]
    if not tmask.any():
        raise TrainError("batch has no unmasked response positions")
    logits = model(inputs)
    ce = F.cross_entropy(
        logits.reshape(-1, logits.shape[-1]), targets.reshape(-1), reduction="none"
    )
    ce = ce.reshape(targets.shape)
    return (ce * tmask.to(ce.dtype)).sum() / tmask.sum()


def train(
    model: MicroTransformer,
    dataset: list[InstructionTriple],
    cfg: TrainConfig,
) -> TrainingHistory:
    """Run epochs of Adam over the adapter parameters only."""
    if not dataset:
        raise TrainError("dataset is empty")
    history = TrainingHistory()
    if cfg.epochs == 0:
        return history
    torch.manual_seed(cfg.rng_seed)
    vocab = model.cfg.vocab_size
    examples = [render_example(t, cfg.max_seq_len, vocab) for t in dataset]
    params = [p for p in model.parameters() if p.requires_grad]
    if not params:
        raise TrainError("model has no trainable parameters (inject LoRA first)")
    opt = torch.optim.Adam(
        params, lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8
    )
    order_rng = torch.Generator().manual_seed(cfg.rng_seed)
    model.train()
    step = 0
    for _ in range(cfg.epochs):
        perm = torch.randperm(len(examples), generator=order_rng).tolist()
        for start in range(0, len(perm), cfg.batch_size):
            batch = [examples[i] for i in perm[start : start + cfg.batch_size]]
            tokens, mask = collate(batch)
            opt.zero_grad(set_to_none=True)
            loss = compute_loss(model, tokens, mask)
            if not math.isfinite(float(loss.detach())):
                raise TrainError(f"non-finite loss at step {step}")
            loss.backward()
            opt.step()
            history.losses.append(float(loss.detach()))
            step += 1
    model.eval()
    return history


@torch.no_grad()
def generate_greedy(
    model: MicroTransformer, prompt_tokens: list[int], max_new: int
) -> list[int]:
    """Append argmax tokens (ties resolve to the lowest id) until EOS or budget."""
    if len(prompt_tokens) >= model.cfg.max_seq_len:
        raise TrainError("prompt length must be below max_seq_len")
    model.eval()
    out = list(prompt_tokens)
    for _ in range(max_new):
        window = out[-model.cfg.max_seq_len :]
        logits = model(torch.tensor([window], dtype=torch.long))[0, -1]
        nxt = int(torch.argmax(logits))  # argmax returns the first maximal index
        out.append(nxt)
        if nxt == EOS_ID:
            break
    return out


CHECKPOINT_VERSION = 1


def save_checkpoint(
    model: MicroTransformer, cfg: TrainConfig, path, adapters_only: bool = False
) -> None:
    state = model.state_dict()
    if adapters_only:
        state = {
            k: v
            for k, v in state.items()
            if k.rsplit(".", 1)[-1] in ("A", "B")
        }
    torch.save(
        {
            "version": CHECKPOINT_VERSION,
            "model_config": vars(model.cfg),
            "train_config": vars(cfg),
            "adapters_only": adapters_only,
            "state": state,
        },
        path,
    )


def load_checkpoint(path, model: MicroTransformer | None = None):
    """Load a checkpoint; adapters-only checkpoints require a host model."""
    blob = torch.load(path, weights_only=False)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise TrainError(f"unsupported checkpoint version {blob.get('version')}")
    cfg = TrainConfig(**blob["train_config"])
    if blob["adapters_only"]:
        if model is None:
            raise TrainError("adapters-only checkpoint needs a host model")
        model.load_state_dict(blob["state"], strict=False)
    else:
        if model is None:
            from .model import inject_lora
            model = MicroTransformer(ModelConfig(**blob["model_config"]))
            inject_lora(
                model, r=cfg.r, alpha=cfg.alpha, dropout_p=cfg.dropout_p,
                int8_frozen=cfg.int8_frozen,
            )
        model.load_state_dict(blob["state"])
    return model, cfg

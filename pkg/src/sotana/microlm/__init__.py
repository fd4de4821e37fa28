from .lora import LoraError, LoraLinear, dequantize_int8, quantize_int8
from .model import (
    MicroTransformer,
    ModelConfig,
    count_params,
    inject_lora,
    lora_layers,
    merge_adapters,
)
from .train import (
    TrainConfig,
    TrainError,
    TrainingHistory,
    compute_loss,
    decode_tokens,
    encode_text,
    generate_greedy,
    load_checkpoint,
    loss_and_grads,
    render_example,
    save_checkpoint,
    train,
)

__all__ = [
    "LoraError",
    "LoraLinear",
    "MicroTransformer",
    "ModelConfig",
    "TrainConfig",
    "TrainError",
    "TrainingHistory",
    "compute_loss",
    "count_params",
    "decode_tokens",
    "dequantize_int8",
    "encode_text",
    "generate_greedy",
    "inject_lora",
    "load_checkpoint",
    "lora_layers",
    "loss_and_grads",
    "merge_adapters",
    "quantize_int8",
    "render_example",
    "save_checkpoint",
    "train",
]

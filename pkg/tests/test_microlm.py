import math

import pytest
import torch

from sotana.dataforge import InstructionTriple
from sotana import microlm as ml

torch.manual_seed(0)


def small_model(**overrides) -> ml.MicroTransformer:
    cfg = ml.ModelConfig(
        vocab_size=20, d_model=32, n_layers=1, n_heads=2, ff_mult=2, max_seq_len=16,
        **overrides,
    )
    return ml.MicroTransformer(cfg)


def copy_dataset(n=32, seed=0):
    rng = torch.Generator().manual_seed(seed)
    alphabet = "abcdef"
    out = []
    for _ in range(n):
        length = int(torch.randint(3, 6, (1,), generator=rng))
        s = "".join(
            alphabet[int(torch.randint(0, len(alphabet), (1,), generator=rng))]
            for _ in range(length)
        )
        out.append(InstructionTriple("Copy the input.", s, s, origin="seed"))
    return out


COPY_TRAIN_CFG = dict(
    r=8, alpha=16.0, learning_rate=3e-3, batch_size=8, dropout_p=0.0,
    max_seq_len=192, epochs=50, rng_seed=0,
)


# ---------------------------------------------------------------------------
# int8 quantization


def test_quantize_zero_matrix_roundtrip_exact():
    w = torch.zeros(4, 6, dtype=torch.float64)
    q, scale = ml.quantize_int8(w)
    assert torch.equal(ml.dequantize_int8(q, scale), w)


def test_quantize_rounding_bound_random():
    for seed in range(100):
        g = torch.Generator().manual_seed(seed)
        w = torch.randn(32, 32, dtype=torch.float64, generator=g)
        q, scale = ml.quantize_int8(w)
        err = (w - ml.dequantize_int8(q, scale)).abs().amax(dim=1)
        assert bool((err <= scale / 2 + 1e-12).all())


def test_quantize_rejects_nonfinite():
    w = torch.tensor([[float("nan"), 1.0]])
    with pytest.raises(ml.LoraError):
        ml.quantize_int8(w)


# ---------------------------------------------------------------------------
# LoraLinear forward


def test_lora_forward_zero_b_equals_base():
    g = torch.Generator().manual_seed(1)
    w = torch.randn(8, 6, dtype=torch.float64, generator=g)
    layer = ml.LoraLinear(w, r=2, alpha=16.0)
    x = torch.randn(5, 6, dtype=torch.float64, generator=g)
    assert torch.equal(layer(x), x @ w.t())


def test_lora_forward_hand_case():
    w = torch.eye(2, dtype=torch.float64)
    layer = ml.LoraLinear(w, r=1, alpha=1.0)
    with torch.no_grad():
        layer.A.copy_(torch.tensor([[1.0, 0.0]], dtype=torch.float64))
        layer.B.copy_(torch.tensor([[0.0], [2.0]], dtype=torch.float64))
    y = layer(torch.tensor([1.0, 0.0], dtype=torch.float64))
    assert torch.allclose(y, torch.tensor([1.0, 2.0], dtype=torch.float64))


def test_lora_alpha_linearity():
    g = torch.Generator().manual_seed(2)
    w = torch.randn(4, 4, dtype=torch.float64, generator=g)
    x = torch.randn(4, dtype=torch.float64, generator=g)
    a = torch.randn(2, 4, dtype=torch.float64, generator=g)
    b = torch.randn(4, 2, dtype=torch.float64, generator=g)
    deltas = []
    for alpha in (8.0, 16.0):
        layer = ml.LoraLinear(w, r=2, alpha=alpha)
        with torch.no_grad():
            layer.A.copy_(a)
            layer.B.copy_(b)
        deltas.append(layer(x) - x @ w.t())
    assert torch.allclose(deltas[1], 2.0 * deltas[0])


def test_lora_rank_out_of_range():
    w = torch.randn(64, 64, dtype=torch.float64)
    with pytest.raises(ml.LoraError):
        ml.LoraLinear(w, r=65, alpha=16.0)


def test_lora_int8_base_path_uses_dequantized_weight():
    g = torch.Generator().manual_seed(3)
    w = torch.randn(8, 8, dtype=torch.float64, generator=g)
    layer = ml.LoraLinear(w, r=2, alpha=16.0, int8_frozen=True)
    x = torch.randn(8, dtype=torch.float64, generator=g)
    q, scale = ml.quantize_int8(w)
    expected = x @ ml.dequantize_int8(q, scale).t()
    assert torch.allclose(layer(x), expected)


def test_lora_trainable_count_formula():
    w = torch.randn(64, 64, dtype=torch.float64)
    layer = ml.LoraLinear(w, r=8, alpha=16.0)
    assert layer.trainable_param_count() == 1024
    assert layer.A.numel() + layer.B.numel() == 1024


# ---------------------------------------------------------------------------
# injection


def test_inject_zero_init_equivalence():
    base = small_model()
    tokens = torch.randint(0, 20, (3, 10))
    with torch.no_grad():
        before = base(tokens)
    ml.inject_lora(base, r=4, alpha=16.0)
    with torch.no_grad():
        after = base(tokens)
    assert torch.equal(before, after)


def test_inject_covers_all_linears():
    model = ml.inject_lora(small_model(), r=4, alpha=16.0)
    names = [name for name, _ in ml.lora_layers(model)]
    # 1 layer: q,k,v,o + ff1,ff2, plus the output head
    assert len(names) == 7
    assert any("head" in n for n in names)
    assert sum(1 for n in names if "proj" in n) == 4


def test_inject_freezes_everything_but_adapters():
    model = ml.inject_lora(small_model(), r=4, alpha=16.0)
    for name, p in model.named_parameters():
        leaf = name.rsplit(".", 1)[-1]
        assert p.requires_grad == (leaf in ("A", "B")), name


def test_inject_r_too_large_names_layer():
    with pytest.raises(ml.LoraError, match="head"):
        ml.inject_lora(small_model(), r=25, alpha=16.0)  # head is 20x32


def test_double_injection_rejected():
    model = ml.inject_lora(small_model(), r=4, alpha=16.0)
    with pytest.raises(ml.LoraError):
        ml.inject_lora(model, r=4, alpha=16.0)


# ---------------------------------------------------------------------------
# loss and gradients


class OneHotStub(torch.nn.Module):
    """Predicts each target with (numerically) probability 1."""

    def __init__(self, targets, vocab):
        super().__init__()
        self.targets = targets
        self.vocab = vocab

    def forward(self, inputs):
        b, t = inputs.shape
        logits = torch.zeros(b, t, self.vocab, dtype=torch.float64)
        for i in range(b):
            for j in range(t):
                logits[i, j, self.targets[i, j + 1]] = 1e4
        return logits


def test_loss_zero_at_degenerate_optimum():
    tokens = torch.randint(0, 20, (2, 8))
    mask = torch.ones_like(tokens, dtype=torch.bool)
    stub = OneHotStub(tokens, vocab=20)
    loss = ml.compute_loss(stub, tokens, mask)
    assert float(loss) == pytest.approx(0.0, abs=1e-12)


def test_loss_all_masked_errors():
    model = small_model()
    tokens = torch.randint(0, 20, (2, 8))
    mask = torch.zeros_like(tokens, dtype=torch.bool)
    with pytest.raises(ml.TrainError):
        ml.compute_loss(model, tokens, mask)


def test_loss_duplication_invariance():
    model = ml.inject_lora(small_model(), r=4, alpha=16.0)
    tokens = torch.randint(0, 20, (3, 8))
    mask = torch.ones_like(tokens, dtype=torch.bool)
    base = float(ml.compute_loss(model, tokens, mask).detach())
    doubled = float(
        ml.compute_loss(model, tokens.repeat(2, 1), mask.repeat(2, 1)).detach()
    )
    assert doubled == pytest.approx(base, rel=1e-12)


def test_gradients_match_central_finite_differences():
    torch.manual_seed(7)
    model = ml.inject_lora(small_model(), r=2, alpha=16.0)
    # make adapters nontrivial so gradients are nonzero
    with torch.no_grad():
        for _, layer in ml.lora_layers(model):
            layer.B.normal_(0.0, 0.02)
    tokens = torch.randint(0, 20, (2, 8))
    mask = torch.ones_like(tokens, dtype=torch.bool)
    _, grads = ml.loss_and_grads(model, tokens, mask)
    eps = 1e-5
    rng = torch.Generator().manual_seed(11)
    for name, p in model.named_parameters():
        if not p.requires_grad:
            continue
        grad = grads[name]
        flat = p.data.view(-1)
        n_coords = min(20, flat.numel())
        coords = torch.randperm(flat.numel(), generator=rng)[:n_coords]
        for c in coords:
            orig = float(flat[c])
            flat[c] = orig + eps
            with torch.no_grad():
                up = float(ml.compute_loss(model, tokens, mask))
            flat[c] = orig - eps
            with torch.no_grad():
                down = float(ml.compute_loss(model, tokens, mask))
            flat[c] = orig
            fd = (up - down) / (2 * eps)
            an = float(grad.view(-1)[c])
            denom = max(abs(fd), abs(an), 1e-8)
            assert abs(fd - an) / denom < 1e-4, f"{name}[{int(c)}]: fd={fd} an={an}"


# ---------------------------------------------------------------------------
# training


def _fresh_injected(seed=0, train_cfg=None):
    cfg = train_cfg or ml.TrainConfig(**COPY_TRAIN_CFG)
    torch.manual_seed(cfg.rng_seed)
    model = ml.MicroTransformer(ml.ModelConfig(max_seq_len=cfg.max_seq_len))
    gen = torch.Generator().manual_seed(cfg.rng_seed)
    ml.inject_lora(model, r=cfg.r, alpha=cfg.alpha, dropout_p=cfg.dropout_p, generator=gen)
    return model, cfg


def test_train_epochs_zero_noop():
    model, _ = _fresh_injected()
    cfg = ml.TrainConfig(**{**COPY_TRAIN_CFG, "epochs": 0})
    before = {k: v.clone() for k, v in model.state_dict().items()}
    history = ml.train(model, copy_dataset(4), cfg)
    assert history.losses == []
    after = model.state_dict()
    assert all(torch.equal(before[k], after[k]) for k in before)


def test_train_empty_dataset_errors():
    model, cfg = _fresh_injected()
    with pytest.raises(ml.TrainError):
        ml.train(model, [], cfg)


@pytest.mark.slow
def test_train_copy_task_halves_loss_and_freezes_base():
    model, cfg = _fresh_injected()
    frozen_before = {
        name: layer.frozen_weight().clone() for name, layer in ml.lora_layers(model)
    }
    history = ml.train(model, copy_dataset(32), cfg)
    assert len(history.losses) == 200  # 32/8 batches x 50 epochs
    initial = history.losses[0]
    final = sum(history.losses[-4:]) / 4
    assert final < 0.5 * initial, (initial, final)
    for name, layer in ml.lora_layers(model):
        assert torch.equal(frozen_before[name], layer.frozen_weight()), name


@pytest.mark.slow
def test_train_deterministic_across_runs():
    curves = []
    for _ in range(2):
        model, cfg = _fresh_injected()
        cfg = ml.TrainConfig(**{**COPY_TRAIN_CFG, "epochs": 3})
        history = ml.train(model, copy_dataset(16), cfg)
        curves.append(history.losses)
    assert curves[0] == curves[1]


@pytest.mark.slow
def test_generate_copies_after_convergence():
    from sotana import corpus

    data = [
        InstructionTriple("Copy the input.", s, s, origin="seed")
        for s in ["abc", "fed", "dab", "cba"]
    ]
    cfg = ml.TrainConfig(
        r=8, alpha=16.0, learning_rate=3e-3, batch_size=4, dropout_p=0.0,
        max_seq_len=192, epochs=600, rng_seed=0,
    )
    torch.manual_seed(cfg.rng_seed)
    model = ml.MicroTransformer(ml.ModelConfig(max_seq_len=cfg.max_seq_len))
    gen = torch.Generator().manual_seed(cfg.rng_seed)
    ml.inject_lora(model, r=cfg.r, alpha=cfg.alpha, dropout_p=cfg.dropout_p, generator=gen)
    ml.train(model, data, cfg)
    prompt = corpus.render_prompt("Copy the input.", "abc").rendered + "\n"
    toks = ml.encode_text(prompt, model.cfg.vocab_size)
    out = ml.decode_tokens(ml.generate_greedy(model, toks, 6)[len(toks):])
    assert out == "abc"


# ---------------------------------------------------------------------------
# merge


def test_merge_equivalence_random_adapters():
    model = ml.inject_lora(small_model(), r=4, alpha=16.0)
    with torch.no_grad():
        for _, layer in ml.lora_layers(model):
            layer.A.normal_(0.0, 0.1)
            layer.B.normal_(0.0, 0.1)
    tokens = torch.randint(0, 20, (100, 12))
    model.eval()
    with torch.no_grad():
        before = model(tokens)
    ml.merge_adapters(model)
    with torch.no_grad():
        after = model(tokens)
    rel = (before - after).abs().max() / before.abs().max()
    assert float(rel) <= 1e-5


def test_merge_right_after_injection_keeps_weights():
    base = small_model()
    w0 = {k: v.clone() for k, v in base.state_dict().items()}
    model = ml.inject_lora(base, r=4, alpha=16.0)
    ml.merge_adapters(model)
    merged = model.state_dict()
    for key, val in w0.items():
        assert torch.equal(val, merged[key]), key


def test_merge_twice_errors():
    model = ml.inject_lora(small_model(), r=4, alpha=16.0)
    ml.merge_adapters(model)
    with pytest.raises(ml.LoraError):
        ml.merge_adapters(model)


# ---------------------------------------------------------------------------
# generation


def test_generate_zero_budget_returns_prompt():
    model = small_model()
    assert ml.generate_greedy(model, [1, 2, 3], 0) == [1, 2, 3]


def test_generate_deterministic():
    model = ml.inject_lora(small_model(), r=4, alpha=16.0)
    a = ml.generate_greedy(model, [1, 2, 3], 8)
    b = ml.generate_greedy(model, [1, 2, 3], 8)
    assert a == b


def test_generate_prompt_too_long_errors():
    model = small_model()
    with pytest.raises(ml.TrainError):
        ml.generate_greedy(model, list(range(16)), 4)


# ---------------------------------------------------------------------------
# parameter accounting


def test_count_params_single_64x64():
    w = torch.randn(64, 64, dtype=torch.float64)
    layer = ml.LoraLinear(w, r=8, alpha=16.0)
    assert layer.trainable_param_count() == 1024


def test_count_params_matches_shape_walk():
    model = ml.inject_lora(
        ml.MicroTransformer(ml.ModelConfig()), r=8, alpha=16.0
    )
    frozen, trainable = ml.count_params(model)
    # independent walk over the architecture shapes
    expected = 0
    for _, layer in ml.lora_layers(model):
        n, k = layer.out_features, layer.in_features
        expected += (n + k) * 8
    assert trainable == expected
    by_hand = sum(
        p.numel() for name, p in model.named_parameters() if name.endswith((".A", ".B"))
    )
    assert trainable == by_hand


def test_count_params_linear_in_r():
    counts = []
    for r in (4, 8):
        model = ml.inject_lora(small_model(), r=r, alpha=16.0)
        counts.append(ml.count_params(model)[1])
    assert counts[1] == 2 * counts[0]


def test_random_layer_shapes_formula():
    g = torch.Generator().manual_seed(5)
    for _ in range(12):
        n = int(torch.randint(4, 100, (1,), generator=g))
        k = int(torch.randint(4, 100, (1,), generator=g))
        r = int(torch.randint(1, min(n, k) + 1, (1,), generator=g))
        layer = ml.LoraLinear(torch.randn(n, k, dtype=torch.float64), r=r, alpha=16.0)
        assert layer.trainable_param_count() == (n + k) * r


# ---------------------------------------------------------------------------
# checkpointing


def test_checkpoint_roundtrip(tmp_path):
    model, cfg = _fresh_injected()
    with torch.no_grad():
        for _, layer in ml.lora_layers(model):
            layer.B.normal_(0.0, 0.05)
    path = tmp_path / "ckpt.pt"
    ml.save_checkpoint(model, cfg, path)
    loaded, loaded_cfg = ml.load_checkpoint(path)
    assert loaded_cfg == cfg
    tokens = torch.randint(0, 200, (2, 12))
    model.eval(); loaded.eval()
    with torch.no_grad():
        assert torch.equal(model(tokens), loaded(tokens))


def test_checkpoint_adapters_only(tmp_path):
    model, cfg = _fresh_injected()
    with torch.no_grad():
        for _, layer in ml.lora_layers(model):
            layer.B.normal_(0.0, 0.05)
    path = tmp_path / "adapters.pt"
    ml.save_checkpoint(model, cfg, path, adapters_only=True)
    host, _ = _fresh_injected()
    ml.load_checkpoint(path, model=host)
    for (_, la), (_, lb) in zip(ml.lora_layers(model), ml.lora_layers(host)):
        assert torch.equal(la.A, lb.A) and torch.equal(la.B, lb.B)
    with pytest.raises(ml.TrainError):
        ml.load_checkpoint(path)

import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, strategies as st

from wirehouse.nn.checkpoint import (
    CheckpointError, decode_checkpoint, encode_checkpoint, load_checkpoint, load_state,
    save_checkpoint,
)
from wirehouse.nn.gradcheck import check_gradients
from wirehouse.nn.layers import (
    CausalAttentionStack, GraphConv, LocalAttentionStack, MultiHeadAttention,
    ResidualBlock1d, ResidualConv1dStack, adjacency_index, block_mask, init_seeded,
    pad_sequences, scatter_mean,
)
from wirehouse.nn.training import (
    TrainConfig, TrainingDiverged, check_finite, epoch_batches, lr_at, make_optimizer,
    reconstruct_loss, set_lr, smoothed_coordinate_targets, soft_cross_entropy, token_loss,
)
from wirehouse.wireframe import build_graph, cube_wireframe

OP_TOL = 1e-4


def rand(*shape, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=g, dtype=torch.float64, requires_grad=True)


def probe(out, seed=99):
    """Random linear functional, so the check sees every output direction."""
    w = torch.randn(out.shape, generator=torch.Generator().manual_seed(seed), dtype=out.dtype)
    return (out * w).sum()


def assert_grads(fn, tensors, tol=OP_TOL, entries=12):
    errors = check_gradients(fn, tensors, max_entries=entries)
    assert max(errors.values()) < tol, errors


def test_sum_of_squares_gradient():
    x = rand(5)
    (g,) = torch.autograd.grad((x * x).sum(), x)
    assert torch.allclose(g, 2 * x)


OPS = {
    "matmul": (lambda a, b: a @ b, [(3, 4), (4, 2)]),
    "add": (lambda a, b: a + b, [(3, 4), (4,)]),
    "mul": (lambda a, b: a * b, [(3, 4), (3, 4)]),
    "softmax": (lambda a: torch.softmax(a, -1), [(3, 5)]),
    "layer_norm": (lambda a, w, b: F.layer_norm(a, (5,), w, b), [(4, 5), (5,), (5,)]),
    "gather": (lambda t: F.embedding(torch.tensor([2, 0, 2, 1]), t), [(3, 4)]),
    "scatter_mean": (lambda v: scatter_mean(v, torch.tensor([0, 2, 2, 1, 2]), 4), [(5, 3)]),
    "concat": (lambda a, b: torch.cat([a, b], dim=-1), [(2, 3), (2, 4)]),
    "slice": (lambda a: a[1:, ::2], [(4, 5)]),
    "cross_entropy": (lambda a: soft_cross_entropy(a, torch.softmax(torch.arange(5.0, dtype=torch.float64), 0)),
                      [(3, 5)]),
    "gelu": (F.gelu, [(4, 4)]),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_op_gradients(name):
    fn, shapes = OPS[name]
    ts = {f"x{i}": rand(*s, seed=i) for i, s in enumerate(shapes)}
    assert_grads(lambda: probe(fn(*ts.values())), ts)


def test_softmax_rows_sum_to_one():
    p = torch.softmax(rand(50, 17) * 30, -1)
    assert torch.allclose(p.sum(-1), torch.ones(50, dtype=torch.float64), atol=1e-12, rtol=0)


def cube_edges():
    return adjacency_index(build_graph(cube_wireframe()).adjacency)


def test_graph_conv_symmetry_and_isolated_nodes():
    torch.manual_seed(0)
    conv = GraphConv(4, 6)
    x = torch.ones(12, 4, dtype=torch.float64)
    out = conv(x, cube_edges())
    assert torch.allclose(out, out[:1].expand_as(out), atol=0, rtol=0)
    x = rand(5, 4)
    empty = (torch.zeros(0, dtype=torch.long), torch.zeros(0, dtype=torch.long))
    assert torch.allclose(conv(x, empty), F.relu(conv.self_lin(x)))


def test_graph_conv_gradients():
    torch.manual_seed(1)
    conv = GraphConv(4, 5)
    x = rand(12, 4)
    edges = cube_edges()
    ts = {"x": x, **dict(conv.named_parameters())}
    assert_grads(lambda: probe(conv(x, edges)), ts)


def test_attention_weights_sum_to_one():
    torch.manual_seed(0)
    mha = MultiHeadAttention(8, 2)
    attn, _ = mha.weights(rand(10, 8), block_mask(10, 4))
    assert torch.allclose(attn.sum(-1), torch.ones(2, 10, dtype=torch.float64), atol=1e-12)
    # nothing crosses a block boundary
    assert float(attn[:, 0, 4:].detach().abs().max()) == 0.0


def test_wide_window_equals_full_attention():
    torch.manual_seed(0)
    local = LocalAttentionStack(8, 2, 2, window=32)
    x = rand(20, 8)
    full = x
    for layer in local.layers:
        full = layer(full, None)
    assert torch.allclose(local(x), full, atol=1e-10, rtol=0)


def test_local_attention_gradients():
    torch.manual_seed(2)
    stack = LocalAttentionStack(8, 2, 1, window=3)
    x = rand(7, 8)
    ts = {"x": x, **dict(stack.named_parameters())}
    assert_grads(lambda: probe(stack(x)), ts, entries=8)


def test_causal_attention_gradients_and_causality():
    torch.manual_seed(3)
    stack = CausalAttentionStack(8, 2, 1)
    x = rand(6, 8)
    ts = {"x": x, **dict(stack.named_parameters())}
    assert_grads(lambda: probe(stack(x)), ts, entries=8)
    y = x.detach().clone()
    y[4:] += 1.0
    assert torch.equal(stack(x)[:4], stack(y)[:4])


def test_batched_attention_matches_single():
    torch.manual_seed(4)
    stack = LocalAttentionStack(8, 2, 2, window=4)
    seqs = [rand(n, 8, seed=n) for n in (3, 9, 6)]
    padded, valid = pad_sequences(seqs)
    batch = stack(padded, valid)
    for i, s in enumerate(seqs):
        assert torch.allclose(batch[i, :len(s)], stack(s), atol=1e-13, rtol=0)


def test_conv_stack_shapes_and_identity():
    torch.manual_seed(0)
    stack = ResidualConv1dStack(5, channels=(4, 6), blocks=(2, 1))
    x = rand(11, 5)
    assert stack(x).shape == (11, 6)
    block = ResidualBlock1d(4)
    with torch.no_grad():
        block.conv2.weight.zero_()
        block.conv2.bias.zero_()
    h = rand(1, 4, 9)
    assert torch.equal(block(h), h)
    # zeroing every block leaves only the stage projections
    with torch.no_grad():
        for stage in stack.stages:
            for b in stage:
                b.conv2.weight.zero_()
                b.conv2.bias.zero_()
    expect = x.T.unsqueeze(0)
    for proj in stack.projections:
        expect = proj(expect)
    assert torch.allclose(stack(x), expect.squeeze(0).T, atol=1e-14)


def test_conv_stack_gradients_and_padding():
    torch.manual_seed(5)
    stack = ResidualConv1dStack(3, channels=(4, 5), blocks=(1, 2))
    x = rand(8, 3)
    ts = {"x": x, **dict(stack.named_parameters())}
    assert_grads(lambda: probe(stack(x)), ts, entries=6)
    seqs = [rand(n, 3, seed=n) for n in (4, 8)]
    padded, valid = pad_sequences(seqs)
    out = stack(padded, valid)
    for i, s in enumerate(seqs):
        assert torch.allclose(out[i, :len(s)], stack(s), atol=1e-13, rtol=0)


def test_mha_rejects_bad_heads():
    with pytest.raises(ValueError):
        MultiHeadAttention(10, 3)


PAPER = TrainConfig(lr_max=1e-4, lr_min=1e-6, warmup_epochs=10, total_epochs=200)


def test_lr_schedule_examples():
    assert lr_at(10, PAPER) == 1e-4
    assert lr_at(200, PAPER) == 1e-6
    assert lr_at(105, PAPER) == pytest.approx(5e-5, rel=1e-12)
    assert lr_at(0, PAPER) == 1e-6
    with pytest.raises(ValueError):
        lr_at(201, PAPER)


@given(st.floats(0, 200))
def test_lr_bounds(t):
    assert PAPER.lr_min <= lr_at(t, PAPER) <= PAPER.lr_max


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr_max=1e-6, lr_min=1e-4)
    with pytest.raises(ValueError):
        TrainConfig(warmup_epochs=100, total_epochs=100)


def test_smoothed_targets():
    t = smoothed_coordinate_targets(np.arange(128))
    assert np.allclose(t.sum(-1), 1.0, atol=1e-12, rtol=0)
    mid = t[60]
    assert np.allclose(mid[57:64], mid[57:64][::-1], atol=0)
    assert np.count_nonzero(mid) == 7
    assert np.count_nonzero(t[0]) == 4 and np.argmax(t[0]) == 0
    assert t[127, 127] > t[64, 64]
    one_hot = smoothed_coordinate_targets(5, sigma=0.0)
    assert one_hot[5] == 1.0 and one_hot.sum() == 1.0
    tiny = smoothed_coordinate_targets(5, sigma=1e-3)
    assert np.allclose(tiny, one_hot)
    with pytest.raises(ValueError):
        smoothed_coordinate_targets(128)


def test_reconstruct_loss_uniform_and_perfect():
    target = torch.as_tensor(smoothed_coordinate_targets(np.arange(6).reshape(1, 6), 0.0))
    uniform = torch.zeros(1, 6, 128, dtype=torch.float64)
    assert float(reconstruct_loss(uniform, target)) == pytest.approx(math.log(128), abs=1e-12)
    perfect = target * 200.0
    assert float(reconstruct_loss(perfect, target)) < 1e-12


def test_reconstruct_loss_scalar_oracle():
    rng = np.random.default_rng(0)
    logits = rng.normal(size=(2, 6, 128))
    bins = rng.integers(0, 128, size=(2, 6))
    target = smoothed_coordinate_targets(bins)
    total = 0.0
    for i in range(2):
        per_end = []
        for end in range(2):
            s = 0.0
            for c in range(3):
                row = logits[i, 3 * end + c]
                logp = row - math.log(sum(math.exp(v) for v in row))
                s += -sum(target[i, 3 * end + c, k] * logp[k] for k in range(128))
            per_end.append(s / 3)
        total += 0.5 * sum(per_end)
    got = reconstruct_loss(torch.as_tensor(logits), torch.as_tensor(target))
    assert float(got) == pytest.approx(total / 2, abs=1e-12)


def test_token_loss_uniform():
    logits = torch.zeros(7, 65, dtype=torch.float64)
    assert float(token_loss(logits, torch.arange(7))) == pytest.approx(math.log(65), abs=1e-12)


def test_check_finite():
    check_finite(1.0, 0)
    with pytest.raises(TrainingDiverged, match="epoch 4"):
        check_finite(float("nan"), 4)


def test_zero_lr_step_is_identity():
    torch.manual_seed(0)
    model = torch.nn.Linear(4, 3, dtype=torch.float64)
    before = {k: v.clone() for k, v in model.state_dict().items()}
    opt = make_optimizer(model.parameters(), TrainConfig())
    set_lr(opt, 0.0)
    for _ in range(3):
        opt.zero_grad()
        model(rand(5, 4)).pow(2).sum().backward()
        opt.step()
    for k, v in model.state_dict().items():
        assert torch.equal(v, before[k])


def test_seeded_training_is_deterministic():
    def run():
        model = init_seeded(lambda: torch.nn.Linear(4, 1, dtype=torch.float64), 7)
        opt = make_optimizer(model.parameters(), TrainConfig())
        x = torch.linspace(-1, 1, 20, dtype=torch.float64).reshape(5, 4)
        losses = []
        for epoch in range(20):
            opt.zero_grad()
            loss = (model(x) - 1).pow(2).mean()
            loss.backward()
            opt.step()
            losses.append(loss.item())
        return losses

    assert run() == run()


def test_epoch_batches():
    a = epoch_batches(23, 5, seed=1, epoch=3)
    assert sorted(sum(a, [])) == list(range(23))
    assert [len(b) for b in a] == [5, 5, 5, 5, 3]
    assert a == epoch_batches(23, 5, seed=1, epoch=3)
    assert a != epoch_batches(23, 5, seed=1, epoch=4)


def test_checkpoint_roundtrip(tmp_path):
    tensors = {"a": np.arange(6.0).reshape(2, 3), "b": np.array(3.5), "c": np.zeros((0, 4))}
    data = encode_checkpoint(tensors, {"kind": "x"})
    assert data[:4] == b"WHCK"
    back, meta = decode_checkpoint(data)
    assert meta == {"kind": "x"} and list(back) == ["a", "b", "c"]
    for k in tensors:
        assert np.array_equal(back[k], tensors[k]) and back[k].shape == tensors[k].shape
    save_checkpoint(tmp_path / "m.ck", tensors, {})
    assert (tmp_path / "m.ck").read_bytes() == encode_checkpoint(tensors, {})
    assert list(load_checkpoint(tmp_path / "m.ck")[0]) == ["a", "b", "c"]


def test_checkpoint_errors():
    data = encode_checkpoint({"a": np.ones(3)}, {})
    with pytest.raises(CheckpointError):
        decode_checkpoint(b"NOPE" + data[4:])
    with pytest.raises(CheckpointError):
        decode_checkpoint(data[:-3])
    with pytest.raises(CheckpointError):
        decode_checkpoint(data[:4] + (2).to_bytes(4, "little") + data[8:])


def test_load_state_is_strict():
    torch.manual_seed(0)
    model = torch.nn.Linear(3, 2, dtype=torch.float64)
    state = {k: v.numpy() for k, v in model.state_dict().items()}
    other = torch.nn.Linear(3, 2, dtype=torch.float64)
    load_state(other, state)
    assert torch.equal(other.weight, model.weight)
    with pytest.raises(RuntimeError):
        load_state(other, {"weight": state["weight"]})

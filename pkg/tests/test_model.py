"""Model tests: init, causality, gradients, training, checkpoints."""

import numpy as np
import pytest
import torch

from sigstream import model as M
from sigstream.data import Trajectory
from sigstream.errors import ConfigError, DataFormatError, NumericError
from sigstream.model import (
    ModelConfig,
    TrainConfig,
    action_loss,
    build_model,
    gradients,
    init_params,
    load_checkpoint,
    parameter_count,
    save_checkpoint,
    torch_batch,
    train,
)
from sigstream.signature import ChannelSpec
from sigstream.tokens import TokenKind, TokenizerConfig, encode_windows, token_dims

CHANNELS = ChannelSpec.of([0, 1], [2, 3])


def tok_cfg(T=4, mode="isc"):
    return TokenizerConfig(context_len=T, channels=CHANNELS, depth=2, mode=mode)


def tiny_model_cfg(**kw):
    base = dict(embed_dim=8, num_layers=1, num_heads=1, dropout=0.0, max_context=4)
    base.update(kw)
    return ModelConfig(**base)


def make_windows(T=4, n_traj=3, steps=12, seed=0, mode="isc"):
    rng = np.random.default_rng(seed)
    trajs = []
    for _ in range(n_traj):
        states = np.cumsum(rng.uniform(-0.2, 0.2, size=(steps + 1, 4)), axis=0)
        actions = rng.uniform(-1, 1, size=(steps, 2))
        rewards = (rng.uniform(size=steps) < 0.2).astype(float)
        trajs.append(Trajectory(states, actions, rewards, True))
    return encode_windows(trajs, tok_cfg(T, mode))


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(embed_dim=10, num_heads=3)
    with pytest.raises(ConfigError):
        TrainConfig(epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(precision="float16")


def test_init_deterministic():
    cfg = tiny_model_cfg()
    a = build_model(cfg, tok_cfg(), 4, 2, seed=11)
    b = build_model(cfg, tok_cfg(), 4, 2, seed=11)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        assert torch.equal(pa, pb)
    c = build_model(cfg, tok_cfg(), 4, 2, seed=12)
    assert any(not torch.equal(pa, pc) for (_, pa), (_, pc) in zip(a.named_parameters(), c.named_parameters()))


def test_zero_init_action_head_gives_constant_bias():
    net = build_model(tiny_model_cfg(), tok_cfg(), 4, 2, seed=0)
    arrays = make_windows()
    batch = torch_batch(arrays, np.arange(6))
    with torch.no_grad():
        _, preds = net(batch)
    assert torch.equal(preds, torch.zeros_like(preds))


def test_parameter_count_closed_form():
    cfg = ModelConfig(embed_dim=32, num_layers=2, num_heads=2, dropout=0.1, max_context=12)
    tcfg = tok_cfg(T=12)
    layout = token_dims(tcfg, 4, 2)
    net = M.SequencePolicyModel(cfg, layout)

    D = cfg.embed_dim
    widths = [s.width for s in layout.header + layout.per_step]
    expected = sum((w + 1) * D for w in widths)          # input projections
    expected += len(TokenKind) * D                        # type embedding
    expected += layout.num_channel_ids * D                # channel embedding
    expected += cfg.max_context * D                       # position embedding
    per_block = 2 * D + (3 * D * D + 3 * D) + (D * D + D) + 2 * D \
        + (4 * D * D + 4 * D) + (4 * D * D + D)
    expected += cfg.num_layers * per_block
    expected += 2 * D                                     # final norm
    expected += D * 2 + 2                                 # action head
    expected += D * 4 + 4                                 # unused obs head
    assert parameter_count(net) == expected


def test_forward_causality_bitwise():
    net = build_model(tiny_model_cfg(dropout=0.0), tok_cfg(), 4, 2, seed=1)
    with torch.no_grad():
        net.action_head.weight.normal_()  # zero head would hide downstream changes
    arrays = make_windows()
    batch = torch_batch(arrays, np.arange(4))
    net.eval()
    with torch.no_grad():
        lat0, preds0 = net(batch)
    # perturb OBS at step 2: everything strictly before its position is untouched
    batch2 = {k: (tuple(x.clone() for x in v) if isinstance(v, tuple) else v.clone()) for k, v in batch.items()}
    batch2["obs"][:, 2, :] += 10.0
    with torch.no_grad():
        lat1, preds1 = net(batch2)
    cut = net.layout.header_len + 2 * net.layout.step_width  # position of OBS_2
    assert torch.equal(lat0[:, :cut, :], lat1[:, :cut, :])
    assert torch.equal(preds0[:, :2, :], preds1[:, :2, :])
    assert not torch.equal(preds0[:, 2:, :], preds1[:, 2:, :])


def test_act_token_does_not_leak_into_same_step_prediction():
    net = build_model(tiny_model_cfg(), tok_cfg(), 4, 2, seed=3)
    init_params(net, 7)
    with torch.no_grad():
        net.action_head.weight.normal_()
    arrays = make_windows()
    batch = torch_batch(arrays, np.arange(4))
    batch2 = {k: (tuple(x.clone() for x in v) if isinstance(v, tuple) else v.clone()) for k, v in batch.items()}
    batch2["act_in"][:, 1, :] += 5.0
    with torch.no_grad():
        _, p0 = net(batch)
        _, p1 = net(batch2)
    assert torch.equal(p0[:, : 2, :], p1[:, : 2, :])  # steps 0..1 read before ACT_1


def test_head_permutation_invariance():
    cfg = ModelConfig(embed_dim=16, num_layers=2, num_heads=4, dropout=0.0, max_context=4)
    layout = token_dims(tok_cfg(), 4, 2)
    net = M.SequencePolicyModel(cfg, layout)
    init_params(net, 9)
    with torch.no_grad():
        net.action_head.weight.normal_()
    net.double()
    arrays = make_windows()
    batch = torch_batch(arrays, np.arange(5), dtype=torch.float64)
    net.eval()
    with torch.no_grad():
        _, base = net(batch)

    perm = [2, 0, 3, 1]
    hd = cfg.embed_dim // cfg.num_heads
    with torch.no_grad():
        for block in net.blocks:
            W = block.attn.qkv.weight.clone()
            b = block.attn.qkv.bias.clone()
            for section in range(3):  # q, k, v stacked row blocks
                for new, old in enumerate(perm):
                    rows_new = slice(section * cfg.embed_dim + new * hd, section * cfg.embed_dim + (new + 1) * hd)
                    rows_old = slice(section * cfg.embed_dim + old * hd, section * cfg.embed_dim + (old + 1) * hd)
                    block.attn.qkv.weight[rows_new] = W[rows_old]
                    block.attn.qkv.bias[rows_new] = b[rows_old]
            P = block.attn.proj.weight.clone()
            for new, old in enumerate(perm):
                block.attn.proj.weight[:, new * hd : (new + 1) * hd] = P[:, old * hd : (old + 1) * hd]
    with torch.no_grad():
        _, permuted = net(batch)
    assert torch.allclose(base, permuted, atol=1e-12)


def test_loss_zero_iff_exact():
    net = build_model(tiny_model_cfg(), tok_cfg(), 4, 2, seed=0)
    arrays = make_windows()
    batch = torch_batch(arrays, np.arange(6))
    batch["targets"] = torch.zeros_like(batch["targets"])  # zero head predicts zeros
    assert action_loss(net, batch).item() == 0.0


def test_loss_constant_offset():
    net = build_model(tiny_model_cfg(), tok_cfg(), 4, 2, seed=0)
    arrays = make_windows()
    batch = torch_batch(arrays, np.arange(6))
    c = 0.37
    batch["targets"] = torch.full_like(batch["targets"], -c)  # preds are 0
    assert action_loss(net, batch).item() == pytest.approx(c * c, rel=1e-6)


def test_zero_loss_batch_zero_gradients():
    net = build_model(tiny_model_cfg(), tok_cfg(), 4, 2, seed=0)
    arrays = make_windows()
    batch = torch_batch(arrays, np.arange(6))
    batch["targets"] = torch.zeros_like(batch["targets"])
    grads = gradients(net, batch)
    for name, g in grads.items():
        assert torch.equal(g, torch.zeros_like(g)), name


def test_unused_head_zero_gradient():
    net = build_model(tiny_model_cfg(), tok_cfg(), 4, 2, seed=2)
    arrays = make_windows()
    grads = gradients(net, torch_batch(arrays, np.arange(6)))
    assert torch.equal(grads["obs_head.weight"], torch.zeros_like(net.obs_head.weight))
    assert torch.equal(grads["obs_head.bias"], torch.zeros_like(net.obs_head.bias))
    assert grads["action_head.weight"].abs().sum() > 0


def test_gradients_match_finite_differences():
    # central-difference oracle on a tiny double-precision model
    torch.manual_seed(0)
    net = build_model(tiny_model_cfg(), tok_cfg(), 4, 2, seed=4)
    with torch.no_grad():
        net.action_head.weight.normal_(0, 0.1)
        net.action_head.bias.normal_(0, 0.1)
    net.double()
    net.eval()
    arrays = make_windows()
    batch = torch_batch(arrays, np.arange(5), dtype=torch.float64)

    analytic = gradients(net, batch)
    params = dict(net.named_parameters())
    rng = np.random.default_rng(3)
    names = sorted(params.keys())
    h = 1e-5
    checked = 0
    while checked < 20:
        name = names[int(rng.integers(len(names)))]
        p = params[name]
        j = int(rng.integers(p.numel()))
        g_ref = analytic[name].view(-1)[j].item()
        with torch.no_grad():
            flat = p.view(-1)
            orig = flat[j].item()
            flat[j] = orig + h
            up = action_loss(net, batch).item()
            flat[j] = orig - h
            down = action_loss(net, batch).item()
            flat[j] = orig
        g_fd = (up - down) / (2 * h)
        if abs(g_fd) < 1e-10 and abs(g_ref) < 1e-10:
            continue
        assert abs(g_ref - g_fd) / max(abs(g_fd), 1e-8) < 1e-4, (name, j, g_ref, g_fd)
        checked += 1


def test_gradients_reject_nonfinite_loss():
    net = build_model(tiny_model_cfg(), tok_cfg(), 4, 2, seed=2)
    arrays = make_windows()
    batch = torch_batch(arrays, np.arange(4))
    batch["targets"] = batch["targets"] + float("nan")
    with pytest.raises(NumericError):
        gradients(net, batch)


def test_fixed_batch_descent():
    net = build_model(tiny_model_cfg(dropout=0.0), tok_cfg(), 4, 2, seed=6)
    arrays = make_windows(n_traj=2)
    batch = torch_batch(arrays, np.arange(8))
    net.train()
    opt = torch.optim.AdamW(net.parameters(), lr=1e-3)
    first = action_loss(net, batch).item()
    for _ in range(50):
        loss = action_loss(net, batch)
        opt.zero_grad()
        loss.backward()
        opt.step()
    final = action_loss(net, batch).item()
    assert final < first


def test_train_deterministic_same_seed():
    arrays = make_windows(n_traj=2)
    cfg = TrainConfig(epochs=3, batch_size=16, warmup_epochs=1, seed=5, threads=1)
    hist = []
    for _ in range(2):
        net = build_model(tiny_model_cfg(dropout=0.1), tok_cfg(), 4, 2, seed=5)
        hist.append(train(net, arrays, cfg).loss_history)
    assert hist[0] == hist[1]


def test_train_warmup_schedule():
    arrays = make_windows(n_traj=2)
    net = build_model(tiny_model_cfg(), tok_cfg(), 4, 2, seed=1)
    cfg = TrainConfig(epochs=10, batch_size=16, warmup_epochs=10, lr=1e-3, seed=0)
    res = train(net, arrays, cfg)
    assert res.lr_history[0] < res.lr_history[9] <= cfg.lr + 1e-12
    assert len(res.loss_history) == 10


def test_train_divergence_abort_restores():
    arrays = make_windows(n_traj=2)
    net = build_model(tiny_model_cfg(), tok_cfg(), 4, 2, seed=1)
    before = {k: v.clone() for k, v in net.state_dict().items()}
    cfg = TrainConfig(epochs=5, batch_size=16, warmup_epochs=1, lr=1e18, seed=0)
    res = train(net, arrays, cfg)
    if res.diverged:
        for k, v in net.state_dict().items():
            assert torch.isfinite(v).all()
    else:
        pytest.skip("absurd lr did not diverge on this batch")


def test_checkpoint_round_trip(tmp_path):
    cfg = tok_cfg(T=4)
    net = build_model(tiny_model_cfg(dropout=0.1), cfg, 4, 2, seed=8)
    with torch.no_grad():
        net.action_head.weight.normal_()
    path = tmp_path / "model.sigckpt"
    save_checkpoint(path, net, cfg, meta={"note": "test"})
    back, cfg2, meta = load_checkpoint(path)
    assert meta == {"note": "test"}
    assert cfg2 == cfg
    arrays = make_windows()
    batch = torch_batch(arrays, np.arange(4))
    with torch.no_grad():
        _, a = net(batch)
        _, b = back(batch)
    assert torch.equal(a, b)
    # byte-identical re-save
    p2 = tmp_path / "again.sigckpt"
    save_checkpoint(p2, net, cfg, meta={"note": "test"})
    assert path.read_bytes() == p2.read_bytes()


def test_checkpoint_rejects_corruption(tmp_path):
    cfg = tok_cfg(T=4)
    net = build_model(tiny_model_cfg(), cfg, 4, 2, seed=8)
    path = tmp_path / "model.sigckpt"
    save_checkpoint(path, net, cfg)
    raw = path.read_bytes()
    bad = tmp_path / "bad.sigckpt"
    bad.write_bytes(raw[: len(raw) - 10])
    with pytest.raises(DataFormatError):
        load_checkpoint(bad)
    bad.write_bytes(b"WRONGMAG" + raw[8:])
    with pytest.raises(DataFormatError):
        load_checkpoint(bad)


def test_position_information_enters_only_via_embedding():
    # With the position table zeroed, re-indexing token positions cannot
    # change anything; with a nonzero table it must.
    net = build_model(tiny_model_cfg(), tok_cfg(), 4, 2, seed=10)
    with torch.no_grad():
        net.action_head.weight.normal_()
    arrays = make_windows()
    batch = torch_batch(arrays, np.arange(4))
    steps = batch["obs"].shape[1]
    _, _, pos = net.layout.slot_ids(steps)
    shuffled = torch.from_numpy(np.roll(pos, 3))

    with torch.no_grad():
        net_zero = build_model(tiny_model_cfg(), tok_cfg(), 4, 2, seed=10)
        net_zero.action_head.weight.copy_(net.action_head.weight)
        net_zero.pos_emb.weight.zero_()
        _, a = net_zero(batch)
        _, b = net_zero(batch, position_ids=shuffled)
    assert torch.equal(a, b)

    net.eval()
    with torch.no_grad():
        _, c = net(batch)
        _, d = net(batch, position_ids=shuffled)
    assert not torch.equal(c, d)

"""Small causal-attention model over token sequences, trained by action
regression.

Every token kind/channel gets its own input projection into a shared
latent space; token-type, channel, and learned position embeddings are
added on top (no timestep information beyond the window position). The
action for step t is decoded from the latent of the token immediately
preceding ACT_t. Training uses AdamW (decoupled weight decay on matmul
weights only), global grad-norm clipping, and a linear warmup.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ConfigError, DataFormatError, NumericError, ShapeMismatchError
from .tokens import TokenKind, TokenLayout, TokenizerConfig, WindowArrays, token_dims

CHECKPOINT_MAGIC = b"SIGCKPT\x00"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 32
    num_layers: int = 2
    num_heads: int = 2
    dropout: float = 0.1
    nonlinearity: str = "gelu"
    max_context: int = 12  # maximum window steps (position table size)

    def __post_init__(self):
        if self.embed_dim % self.num_heads != 0:
            raise ConfigError(
                f"embed_dim {self.embed_dim} not divisible by num_heads {self.num_heads}"
            )
        if self.nonlinearity not in ("gelu", "relu"):
            raise ConfigError(f"unsupported nonlinearity {self.nonlinearity!r}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 0.01
    grad_clip: float = 1.0
    warmup_epochs: int = 10
    seed: int = 0
    precision: str = "float32"  # float64 mandatory for gradient checks
    threads: int | None = 1  # single-threaded: reproducible (and faster at this size)

    def __post_init__(self):
        for name in ("epochs", "batch_size", "lr", "grad_clip"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"unknown precision {self.precision!r}")


def _act_fn(name: str):
    return F.gelu if name == "gelu" else F.relu


class CausalSelfAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.attn_drop = nn.Dropout(dropout)
        self.resid_drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        B, S, D = x.shape
        hd = D // self.heads
        q, k, v = self.qkv(x).split(D, dim=2)
        q = q.view(B, S, self.heads, hd).transpose(1, 2)
        k = k.view(B, S, self.heads, hd).transpose(1, 2)
        v = v.view(B, S, self.heads, hd).transpose(1, 2)
        att = (q @ k.transpose(-2, -1)) / math.sqrt(hd)
        att = att.masked_fill(mask[:S, :S], float("-inf"))
        att = self.attn_drop(F.softmax(att, dim=-1))
        y = (att @ v).transpose(1, 2).reshape(B, S, D)
        return self.resid_drop(self.proj(y))


class Block(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float, act: str):
        super().__init__()
        self.ln1 = nn.LayerNorm(dim)
        self.attn = CausalSelfAttention(dim, heads, dropout)
        self.ln2 = nn.LayerNorm(dim)
        self.fc_in = nn.Linear(dim, 4 * dim)
        self.fc_out = nn.Linear(4 * dim, dim)
        self.mlp_drop = nn.Dropout(dropout)
        self._act = _act_fn(act)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = x + self.attn(self.ln1(x), mask)
        x = x + self.mlp_drop(self.fc_out(self._act(self.fc_in(x))))
        return x


def _slot_key(kind: TokenKind, channel_id: int) -> str:
    return f"{kind.name}_{channel_id}"


class SequencePolicyModel(nn.Module):
    """Causal transformer over a TokenLayout; predicts actions per step."""

    def __init__(self, cfg: ModelConfig, layout: TokenLayout):
        super().__init__()
        if layout.context_len > cfg.max_context:
            raise ConfigError(
                f"layout context {layout.context_len} exceeds max_context {cfg.max_context}"
            )
        self.cfg = cfg
        self.layout = layout
        D = cfg.embed_dim

        self.input_proj = nn.ModuleDict()
        for slot in layout.header + layout.per_step:
            key = _slot_key(slot.kind, slot.channel_id)
            if key not in self.input_proj:
                self.input_proj[key] = nn.Linear(slot.width, D)

        self.type_emb = nn.Embedding(len(TokenKind), D)
        self.channel_emb = nn.Embedding(layout.num_channel_ids, D)
        self.pos_emb = nn.Embedding(cfg.max_context, D)
        self.drop = nn.Dropout(cfg.dropout)
        self.blocks = nn.ModuleList(
            [Block(D, cfg.num_heads, cfg.dropout, cfg.nonlinearity) for _ in range(cfg.num_layers)]
        )
        self.ln_f = nn.LayerNorm(D)
        self.action_head = nn.Linear(D, layout.action_dim)
        self.obs_head = nn.Linear(D, layout.state_dim)  # unused output path

        max_len = layout.seq_len(cfg.max_context)
        mask = torch.triu(torch.ones(max_len, max_len, dtype=torch.bool), diagonal=1)
        self.register_buffer("causal_mask", mask, persistent=False)
        self._id_cache: dict[int, tuple[torch.Tensor, torch.Tensor, torch.Tensor]] = {}

    def _ids(self, steps: int) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        if steps not in self._id_cache:
            t, c, p = self.layout.slot_ids(steps)
            self._id_cache[steps] = (
                torch.from_numpy(t),
                torch.from_numpy(c),
                torch.from_numpy(p),
            )
        return self._id_cache[steps]

    def _embed_slot(self, kind: TokenKind, channel_id: int, payload: torch.Tensor) -> torch.Tensor:
        proj = self.input_proj[_slot_key(kind, channel_id)]
        if payload.shape[-1] != proj.in_features:
            raise ShapeMismatchError(
                f"{kind.name} payload width {payload.shape[-1]} != {proj.in_features}"
            )
        return proj(payload)

    def forward(
        self,
        batch: dict,
        position_ids: torch.Tensor | None = None,
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (latents (B, S, D), action predictions (B, steps, da)).

        batch holds per-kind payload tensors as produced by
        :func:`torch_batch`. Dropout follows the module's train/eval mode.
        position_ids overrides the per-token position indices (probe hook).
        """
        obs = batch["obs"]
        B, steps, _ = obs.shape
        layout = self.layout

        parts = [
            self._embed_slot(TokenKind.GOAL, 0, batch["goal"]).unsqueeze(1),
            self._embed_slot(TokenKind.PREV_ACTION, 0, batch["prev_action"]).unsqueeze(1),
        ]
        if layout.mode == "full_signature":
            parts.append(self._embed_slot(TokenKind.SIG, 0, batch["sig"]).unsqueeze(1))

        step_embs = [self._embed_slot(TokenKind.OBS, 0, obs)]
        inc_slots = [s for s in layout.per_step if s.kind == TokenKind.INC]
        cross_slots = [s for s in layout.per_step if s.kind == TokenKind.CROSS]
        for slot, payload in zip(inc_slots, batch.get("inc", ())):
            step_embs.append(self._embed_slot(TokenKind.INC, slot.channel_id, payload))
        for slot, payload in zip(cross_slots, batch.get("cross", ())):
            step_embs.append(self._embed_slot(TokenKind.CROSS, slot.channel_id, payload))
        step_embs.append(self._embed_slot(TokenKind.ACT, 0, batch["act_in"]))
        # (B, steps, slots/step, D) -> (B, steps * slots, D)
        stacked = torch.stack(step_embs, dim=2).reshape(B, steps * layout.step_width, -1)
        x = torch.cat(parts + [stacked], dim=1)

        type_ids, channel_ids, pos_ids = self._ids(steps)
        if position_ids is not None:
            pos_ids = position_ids
        x = x + self.type_emb(type_ids) + self.channel_emb(channel_ids) + self.pos_emb(pos_ids)
        x = self.drop(x)
        for block in self.blocks:
            x = block(x, self.causal_mask)
        latents = self.ln_f(x)
        read = torch.from_numpy(layout.read_positions(steps))
        preds = self.action_head(latents[:, read, :])
        return latents, preds


def init_params(model: SequencePolicyModel, seed: int) -> SequencePolicyModel:
    """Deterministic initialization: N(0, 0.02) matrices and embeddings,
    zero biases, unit LayerNorm gains, and a zero action head."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, nn.Linear):
                module.weight.normal_(0.0, 0.02, generator=gen)
                module.bias.zero_()
            elif isinstance(module, nn.Embedding):
                module.weight.normal_(0.0, 0.02, generator=gen)
            elif isinstance(module, nn.LayerNorm):
                module.weight.fill_(1.0)
                module.bias.zero_()
        model.action_head.weight.zero_()
        model.action_head.bias.zero_()
    return model


def build_model(model_cfg: ModelConfig, tok_cfg: TokenizerConfig, state_dim: int, action_dim: int, seed: int = 0) -> SequencePolicyModel:
    layout = token_dims(tok_cfg, state_dim, action_dim)
    model = SequencePolicyModel(model_cfg, layout)
    init_params(model, seed)
    model.eval()
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


# --------------------------------------------------------------- batches


def torch_batch(arrays: WindowArrays, idx: np.ndarray | None = None, dtype: torch.dtype = torch.float32) -> dict:
    """Select windows by index and convert to torch tensors."""

    def pick(a: np.ndarray) -> torch.Tensor:
        sel = a if idx is None else a[idx]
        return torch.as_tensor(sel, dtype=dtype)

    batch = {
        "goal": pick(arrays.goal),
        "prev_action": pick(arrays.prev_action),
        "obs": pick(arrays.obs),
        "inc": tuple(pick(a) for a in arrays.inc),
        "cross": tuple(pick(a) for a in arrays.cross),
        "act_in": pick(arrays.act_in),
        "targets": pick(arrays.targets),
    }
    if arrays.sig is not None:
        batch["sig"] = pick(arrays.sig)
    return batch


def action_loss(model: SequencePolicyModel, batch: dict) -> torch.Tensor:
    """Mean squared error over every predicted action coordinate."""
    _, preds = model(batch)
    return F.mse_loss(preds, batch["targets"])


def gradients(model: SequencePolicyModel, batch: dict) -> dict[str, torch.Tensor]:
    """Analytic gradients of the action loss; zero for unused parameters."""
    model.zero_grad(set_to_none=True)
    loss = action_loss(model, batch)
    if not torch.isfinite(loss):
        raise NumericError(f"non-finite loss {loss.detach().item()!r}; gradients unavailable")
    loss.backward()
    out = {}
    for name, p in model.named_parameters():
        out[name] = torch.zeros_like(p) if p.grad is None else p.grad.detach().clone()
    model.zero_grad(set_to_none=True)
    return out


# --------------------------------------------------------------- training


@dataclass
class TrainResult:
    loss_history: list[float] = field(default_factory=list)
    lr_history: list[float] = field(default_factory=list)
    diverged: bool = False
    steps: int = 0


def _param_groups(model: nn.Module, weight_decay: float):
    decay, no_decay = [], []
    for module in model.modules():
        for name, p in module.named_parameters(recurse=False):
            if isinstance(module, nn.Linear) and name == "weight":
                decay.append(p)
            else:
                no_decay.append(p)
    return [
        {"params": decay, "weight_decay": weight_decay},
        {"params": no_decay, "weight_decay": 0.0},
    ]


def train(model: SequencePolicyModel, arrays: WindowArrays, cfg: TrainConfig) -> TrainResult:
    """Train in place; returns per-epoch loss history.

    Windows are sampled uniformly via a seeded shuffle each epoch. On a
    non-finite loss, training aborts and the last epoch-end parameters are
    restored.
    """
    if cfg.threads is not None:
        torch.set_num_threads(cfg.threads)
    torch.manual_seed(cfg.seed)
    dtype = torch.float64 if cfg.precision == "float64" else torch.float32
    model.to(dtype)

    optimizer = torch.optim.AdamW(_param_groups(model, cfg.weight_decay), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    n = arrays.num_windows
    steps_per_epoch = max(1, math.ceil(n / cfg.batch_size))
    warmup_steps = max(1, cfg.warmup_epochs * steps_per_epoch)

    result = TrainResult()
    snapshot = {k: v.detach().clone() for k, v in model.state_dict().items()}
    gstep = 0
    for _epoch in range(cfg.epochs):
        model.train()
        perm = rng.permutation(n)
        epoch_losses = []
        epoch_lr = None
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            batch = torch_batch(arrays, idx, dtype)
            lr_now = cfg.lr * min(1.0, (gstep + 1) / warmup_steps)
            for group in optimizer.param_groups:
                group["lr"] = lr_now
            if epoch_lr is None:
                epoch_lr = lr_now
            loss = action_loss(model, batch)
            if not torch.isfinite(loss):
                model.load_state_dict(snapshot)
                model.eval()
                result.diverged = True
                return result
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            optimizer.step()
            gstep += 1
            epoch_losses.append(loss.item())
        result.loss_history.append(float(np.mean(epoch_losses)))
        result.lr_history.append(float(epoch_lr))
        snapshot = {k: v.detach().clone() for k, v in model.state_dict().items()}
    result.steps = gstep
    model.eval()
    return result


# --------------------------------------------------------------- checkpoints


def save_checkpoint(
    path,
    model: SequencePolicyModel,
    tok_cfg: TokenizerConfig,
    meta: dict | None = None,
) -> None:
    """Versioned little-endian container: magic, u32 version, JSON header
    (configs + array manifest), then raw arrays. Byte-identical for
    identical inputs."""
    state = model.state_dict()
    names = sorted(state.keys())
    arrays = [state[k].detach().cpu().numpy() for k in names]
    header = {
        "model_cfg": asdict(model.cfg),
        "tokenizer_cfg": tok_cfg.to_dict(),
        "state_dim": model.layout.state_dim,
        "action_dim": model.layout.action_dim,
        "meta": meta or {},
        "arrays": [
            {"name": k, "dtype": str(a.dtype), "shape": list(a.shape)}
            for k, a in zip(names, arrays)
        ],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a).astype(a.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path) -> tuple[SequencePolicyModel, TokenizerConfig, dict]:
    def read_exact(fh, size):
        data = fh.read(size)
        if len(data) != size:
            raise DataFormatError(f"truncated checkpoint: wanted {size} bytes, got {len(data)}")
        return data

    with open(path, "rb") as fh:
        if read_exact(fh, len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
            raise DataFormatError("not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", read_exact(fh, 4))
        if version != CHECKPOINT_VERSION:
            raise DataFormatError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<I", read_exact(fh, 4))
        header = json.loads(read_exact(fh, hlen).decode("utf-8"))
        state = {}
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            nbytes = dtype.itemsize * int(np.prod(shape)) if shape else dtype.itemsize
            raw = read_exact(fh, nbytes)
            state[entry["name"]] = torch.from_numpy(
                np.frombuffer(raw, dtype=dtype.newbyteorder("<")).reshape(shape).copy()
            )
    model_cfg = ModelConfig(**header["model_cfg"])
    tok_cfg = TokenizerConfig.from_dict(header["tokenizer_cfg"])
    layout = token_dims(tok_cfg, header["state_dim"], header["action_dim"])
    model = SequencePolicyModel(model_cfg, layout)
    model.load_state_dict(state)
    model.eval()
    return model, tok_cfg, header["meta"]

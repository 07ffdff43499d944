"""Masked-autoencoder ViT that reconstructs the masked label rows.

Checkpoint layout (little-endian)::

    magic         4 bytes  b"OCAD"
    version       uint32   1
    config_len    uint32
    config        canonical JSON (sorted keys, no whitespace), UTF-8
    n_records     uint32
    n_records records of:
        name_len  uint16, name UTF-8
        rank      uint8, extents uint32 * rank
        data      float32 * prod(extents)

Parameter records carry the model parameter names. Optimizer moments, when
saved, follow as ``optim.m/<name>`` and ``optim.v/<name>`` records and the
step counter is stored in the JSON config under ``optim_step``.
"""

import json
import math
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import nn
from .canvas import patchify
from .errors import CheckpointError, ConfigError, ConfigMismatch
from .nn import Tensor

CKPT_MAGIC = b"OCAD"
CKPT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    patch_dim: int = 256
    seq_len: int = 64
    encoder_dim: int = 128
    encoder_depth: int = 4
    encoder_heads: int = 4
    decoder_dim: int = 64
    decoder_depth: int = 2
    decoder_heads: int = 4
    mlp_ratio: float = 4.0
    pos_embed: str = "sincos"

    def __post_init__(self):
        if self.encoder_dim % self.encoder_heads:
            raise ConfigError("encoder_dim must be divisible by encoder_heads")
        if self.decoder_dim % self.decoder_heads:
            raise ConfigError("decoder_dim must be divisible by decoder_heads")
        if self.pos_embed not in ("sincos", "learned"):
            raise ConfigError(f"pos_embed must be 'sincos' or 'learned', got {self.pos_embed!r}")
        if self.pos_embed == "sincos" and (self.encoder_dim % 4 or self.decoder_dim % 4):
            raise ConfigError("sincos position embeddings need widths divisible by 4")

    @classmethod
    def for_layout(cls, layout, **overrides):
        return cls(patch_dim=layout.patch_dim, seq_len=layout.n_patches, **overrides)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


def sincos_1d(dim, positions):
    omega = 1.0 / 10000 ** (np.arange(dim // 2, dtype=np.float64) / (dim / 2.0))
    out = np.outer(positions, omega)
    return np.concatenate([np.sin(out), np.cos(out)], axis=1)


def sincos_position_table(dim, seq_len):
    """Fixed 2-D sine/cosine table for a square grid (1-D if not square)."""
    g = math.isqrt(seq_len)
    if g * g != seq_len:
        return sincos_1d(dim, np.arange(seq_len, dtype=np.float64))
    rows, cols = np.divmod(np.arange(seq_len), g)
    return np.concatenate([sincos_1d(dim // 2, rows.astype(np.float64)),
                           sincos_1d(dim // 2, cols.astype(np.float64))], axis=1)


def param_count(config):
    """Trainable scalars implied by ``config``; no class count enters anywhere."""
    def linear(a, b):
        return a * b + b

    def block(d):
        hidden = int(d * config.mlp_ratio)
        return 2 * (2 * d) + linear(d, 3 * d) + linear(d, d) + linear(d, hidden) + linear(hidden, d)

    e, dd = config.encoder_dim, config.decoder_dim
    total = linear(config.patch_dim, e) + config.encoder_depth * block(e) + 2 * e
    total += linear(e, dd) + dd + config.decoder_depth * block(dd) + 2 * dd
    total += linear(dd, config.patch_dim)
    if config.pos_embed == "learned":
        total += config.seq_len * (e + dd)
    return total


class MaeModel(nn.Module):
    def __init__(self, config, seed=0, dtype=np.float32):
        self.config = config
        rng = np.random.default_rng(seed)
        dt = np.dtype(dtype)
        c = config
        self.patch_embed = nn.Linear(c.patch_dim, c.encoder_dim, rng, dt)
        self.blocks = [nn.Block(c.encoder_dim, c.encoder_heads, c.mlp_ratio, rng, dt)
                       for _ in range(c.encoder_depth)]
        self.norm = nn.LayerNorm(c.encoder_dim, dtype=dt)
        self.decoder_embed = nn.Linear(c.encoder_dim, c.decoder_dim, rng, dt)
        self.mask_token = nn.Parameter(nn.trunc_normal(rng, (c.decoder_dim,), dtype=dt))
        self.decoder_blocks = [nn.Block(c.decoder_dim, c.decoder_heads, c.mlp_ratio, rng, dt)
                               for _ in range(c.decoder_depth)]
        self.decoder_norm = nn.LayerNorm(c.decoder_dim, dtype=dt)
        self.head = nn.Linear(c.decoder_dim, c.patch_dim, rng, dt)
        if c.pos_embed == "learned":
            self.pos_embed = nn.Parameter(nn.trunc_normal(rng, (c.seq_len, c.encoder_dim), dtype=dt))
            self.decoder_pos_embed = nn.Parameter(nn.trunc_normal(rng, (c.seq_len, c.decoder_dim), dtype=dt))
        else:
            self.pos_table = Tensor(sincos_position_table(c.encoder_dim, c.seq_len).astype(dt))
            self.decoder_pos_table = Tensor(sincos_position_table(c.decoder_dim, c.seq_len).astype(dt))

    @property
    def dtype(self):
        return self.head.weight.dtype

    def _positions(self, decoder):
        if self.config.pos_embed == "learned":
            return self.decoder_pos_embed if decoder else self.pos_embed
        return self.decoder_pos_table if decoder else self.pos_table

    def forward(self, patches, masked_ids):
        """Reconstruct every patch of ``patches`` (``(B, L, P)``) from the unmasked ones."""
        patches = np.asarray(patches)
        c = self.config
        if patches.ndim == 2:
            patches = patches[None]
        if patches.shape[1:] != (c.seq_len, c.patch_dim):
            raise ConfigMismatch(f"patch batch {patches.shape} does not match model ({c.seq_len}, {c.patch_dim})")
        masked = np.unique(np.asarray(masked_ids, dtype=np.int64))
        keep = np.ones(c.seq_len, dtype=bool)
        keep[masked] = False
        visible = np.flatnonzero(keep)
        b = patches.shape[0]

        x = Tensor(patches[:, visible].astype(self.dtype))
        x = self.patch_embed(x) + nn.take(self._positions(False), visible, axis=0)
        for blk in self.blocks:
            x = blk(x)
        x = self.decoder_embed(self.norm(x))

        if masked.size:
            fill = Tensor(np.zeros((b, masked.size, c.decoder_dim), dtype=self.dtype))
            x = nn.concat([x, fill + self.mask_token], axis=1)
            x = nn.take(x, np.argsort(np.concatenate([visible, masked])), axis=1)
        x = x + self._positions(True)
        for blk in self.decoder_blocks:
            x = blk(x)
        return self.head(self.decoder_norm(x))


def forward(model, sample, layout):
    """Reconstruction ``(seq_len, patch_dim)`` for a single composed sample."""
    return model(patchify(sample.canvas, layout), sample.masked_patch_ids)


def loss(model, sample, layout, scope="masked"):
    pred = forward(model, sample, layout)
    target = patchify(sample.target, layout)[None]
    return batch_loss(pred, target, sample.masked_patch_ids, scope)


def batch_loss(pred, target, masked_ids, scope="masked"):
    if scope == "masked":
        return nn.mse_loss(pred, target, masked_ids, axis=1)
    if scope == "full":
        return nn.mse_loss(pred, target, None, axis=1)
    raise ConfigError(f"loss scope must be 'masked' or 'full', got {scope!r}")


_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _record(name, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4")
    nb = name.encode("utf-8")
    head = _U16.pack(len(nb)) + nb + struct.pack("<B", arr.ndim)
    head += b"".join(_U32.pack(n) for n in arr.shape)
    return head + arr.tobytes()


def save_checkpoint(path, model, extra=None, optim_state=None):
    """Write ``model`` (and optionally optimizer moments) in the OCAD format."""
    config = {"model": model.config.to_dict()}
    if extra:
        config.update(extra)
    records = [_record(name, p.data) for name, p in model.named_parameters()]
    if optim_state is not None:
        config["optim_step"] = int(optim_state.step)
        for name, _ in model.named_parameters():
            records.append(_record(f"optim.m/{name}", optim_state.m[name]))
            records.append(_record(f"optim.v/{name}", optim_state.v[name]))
    blob = _canonical_json(config)
    out = [CKPT_MAGIC, _U32.pack(CKPT_VERSION), _U32.pack(len(blob)), blob, _U32.pack(len(records))]
    out.extend(records)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(out))
    tmp.replace(path)


def read_checkpoint(path):
    """Parse a checkpoint into ``(config_dict, {name: float32 array})``."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    try:
        if data[:4] != CKPT_MAGIC:
            raise CheckpointError(f"{path}: bad magic {data[:4]!r}")
        (version,) = _U32.unpack_from(data, 4)
        if version != CKPT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
        (n,) = _U32.unpack_from(data, 8)
        config = json.loads(data[12:12 + n].decode("utf-8"))
        off = 12 + n
        (count,) = _U32.unpack_from(data, off)
        off += 4
        tensors = {}
        for _ in range(count):
            (ln,) = _U16.unpack_from(data, off)
            name = data[off + 2:off + 2 + ln].decode("utf-8")
            off += 2 + ln
            rank = data[off]
            off += 1
            shape = struct.unpack_from(f"<{rank}I", data, off)
            off += 4 * rank
            size = int(np.prod(shape, dtype=np.int64))
            if off + 4 * size > len(data):
                raise CheckpointError(f"{path}: truncated record {name}")
            tensors[name] = np.frombuffer(data, dtype="<f4", count=size, offset=off).reshape(shape)
            off += 4 * size
    except (struct.error, IndexError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from None
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    return config, tensors


def load_checkpoint(path, dtype=np.float32):
    """Rebuild the model stored at ``path``; returns ``(model, config_dict, tensors)``."""
    config, tensors = read_checkpoint(path)
    try:
        mcfg = ModelConfig.from_dict(config["model"])
    except (KeyError, TypeError, ConfigError) as exc:
        raise CheckpointError(f"{path}: invalid model config ({exc})") from None
    model = MaeModel(mcfg, dtype=dtype)
    model.load_state_dict({k: v for k, v in tensors.items() if not k.startswith("optim.")})
    return model, config, tensors

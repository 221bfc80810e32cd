"""Binary checkpoint format.

Layout (little-endian): "IFCK" | u32 version | u32 config length | config JSON |
u32 tensor count | per tensor (u16 name length, name, u8 rank, u32 dims..., f32 data) |
u8 frozen flag per tensor | u8 phase.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .config import Config, ConfigError
from .pipeline import COMPONENTS, PipelineModel

MAGIC = b"IFCK"
VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def _entries(model: PipelineModel):
    """(component, name, tensor) for every persisted tensor, keygen mapping last."""
    out = list(model.named_params())
    out += [("keymap", name, t) for name, t in model.keygen.mapping.named_params()]
    return out


def frozen_after(component: str, phase: int, joint: bool = False) -> bool:
    if component == "keymap":
        return True
    trained_in = COMPONENTS[component]
    if trained_in is None:
        return True
    if joint and component in ("e_attr", "mapping", "icl", "sif"):
        return phase >= 2
    return trained_in <= phase


def to_bytes(model: PipelineModel) -> bytes:
    buf = io.BytesIO()
    cfg = model.cfg.to_json().encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(cfg)))
    buf.write(cfg)
    entries = _entries(model)
    buf.write(struct.pack("<I", len(entries)))
    for _, name, t in entries:
        raw_name = name.encode("utf-8")
        buf.write(struct.pack("<H", len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<B", t.data.ndim))
        buf.write(struct.pack(f"<{t.data.ndim}I", *t.data.shape))
        buf.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    phase = max(model.phase, 0)
    joint = model.cfg.ablation.no_dpt
    buf.write(bytes(int(frozen_after(c, phase, joint)) for c, _, _ in entries))
    buf.write(struct.pack("<B", phase))
    return buf.getvalue()


def save_checkpoint(model: PipelineModel, path: str | Path) -> None:
    Path(path).write_bytes(to_bytes(model))


class _Reader:
    def __init__(self, raw: bytes):
        self.raw, self.off = raw, 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.raw):
            raise CheckpointFormatError("truncated checkpoint")
        out = self.raw[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size))


def from_bytes(raw: bytes) -> tuple[PipelineModel, list[int]]:
    r = _Reader(raw)
    if r.take(4) != MAGIC:
        raise CheckpointFormatError("bad magic")
    version, cfg_len = r.unpack("<II")
    if version != VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    try:
        cfg = Config.from_json(r.take(cfg_len).decode("utf-8"))
    except (UnicodeDecodeError, ConfigError) as e:
        raise CheckpointFormatError(f"bad config echo: {e}") from None
    model = PipelineModel.build(cfg)
    expected = {name: t for _, name, t in _entries(model)}
    (count,) = r.unpack("<I")
    if count != len(expected):
        raise CheckpointFormatError(f"tensor count {count} does not match config ({len(expected)})")
    dtype = expected[next(iter(expected))].data.dtype
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = r.take(n).decode("utf-8")
        (rank,) = r.unpack("<B")
        shape = r.unpack(f"<{rank}I")
        size = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(shape)
        if name not in expected or expected[name].data.shape != tuple(shape):
            raise CheckpointFormatError(f"unexpected tensor {name} {shape}")
        expected[name].data = data.astype(dtype)
    frozen = list(r.take(count))
    (phase,) = r.unpack("<B")
    if r.off != len(raw):
        raise CheckpointFormatError("trailing bytes after checkpoint")
    model.set_trainable(())
    model.phase = phase
    return model, frozen


def load_checkpoint(path: str | Path) -> PipelineModel:
    return from_bytes(Path(path).read_bytes())[0]

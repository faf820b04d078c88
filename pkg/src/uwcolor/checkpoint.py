"""Binary checkpoint format.

Layout (all integers little-endian)::

    magic        8 bytes  b"UWCKPT\\r\\n"
    version      u32
    preset       u16 length + ASCII arch preset name
    metadata     u32 length + UTF-8 JSON (sorted keys): config snapshot,
                 step counter, optimiser counters/hyper-parameters, rng states
    n_blocks     u32
    block*       u16 name length + UTF-8 name, u8 dtype code ('f' = float32,
                 'd' = float64), u8 ndim, ndim x u32 extents, raw LE values
    crc32        u32 over every preceding byte

Block names: ``net/<G|F|D_X|D_Y>/<param>``, ``adam/<net>/m/<param>``,
``adam/<net>/v/<param>`` and ``replay/<X|Y>/<index>``. Writes go to a
temporary file that is renamed into place.
"""

from __future__ import annotations

import io
import json
import os
import struct
import zlib
from pathlib import Path

import numpy as np

from .autograd import default_dtype
from .config import TrainConfig, parse_config, serialize_config
from .nets import GeneratorNet, build_generator
from .optim import AdamState, seeded_rng
from .trainer import ReplayBuffer, TrainState, init_state

MAGIC = b"UWCKPT\r\n"
FORMAT_VERSION = 1
_DTYPES = {b"f": np.dtype("<f4"), b"d": np.dtype("<f8")}
_CODES = {np.dtype("float32"): b"f", np.dtype("float64"): b"d"}
NET_NAMES = ("G", "F", "D_X", "D_Y")


class CheckpointError(ValueError):
    pass


def _write_block(out: io.BytesIO, name: str, arr: np.ndarray) -> None:
    arr = np.asarray(arr)
    code = _CODES.get(arr.dtype)
    if code is None:
        raise CheckpointError(f"block {name}: unsupported dtype {arr.dtype}")
    raw = name.encode()
    out.write(struct.pack("<H", len(raw)))
    out.write(raw)
    out.write(code)
    out.write(struct.pack("<B", arr.ndim))
    out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    out.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())


def _blocks(state: TrainState) -> list[tuple[str, np.ndarray]]:
    blocks = []
    nets, opts = state.networks(), state.optimizers()
    for net_name in NET_NAMES:
        for pname, t in nets[net_name].named_parameters():
            blocks.append((f"net/{net_name}/{pname}", t.data))
    for net_name in NET_NAMES:
        opt = opts[net_name]
        names = [n for n, _ in nets[net_name].named_parameters()]
        for pname, m in zip(names, opt.first_moment):
            blocks.append((f"adam/{net_name}/m/{pname}", m))
        for pname, v in zip(names, opt.second_moment):
            blocks.append((f"adam/{net_name}/v/{pname}", v))
    for label, buf in state.buffers().items():
        for i, img in enumerate(buf.pool):
            blocks.append((f"replay/{label}/{i}", img))
    return blocks


def _metadata(state: TrainState) -> dict:
    opts = state.optimizers()
    return {
        "config": serialize_config(state.config),
        "step": state.step,
        "adam": {
            k: {"step_count": o.step_count, "learning_rate": o.learning_rate, "beta1": o.beta1,
                "beta2": o.beta2, "epsilon": o.epsilon}
            for k, o in opts.items()
        },
        "replay": {
            k: {"capacity": b.capacity, "size": len(b.pool), "rng": b.rng.bit_generator.state}
            for k, b in state.buffers().items()
        },
    }


def checkpoint_bytes(state: TrainState) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", FORMAT_VERSION))
    preset = state.config.arch.preset.encode("ascii")
    out.write(struct.pack("<H", len(preset)))
    out.write(preset)
    meta = json.dumps(_metadata(state), sort_keys=True, separators=(",", ":")).encode()
    out.write(struct.pack("<I", len(meta)))
    out.write(meta)
    blocks = _blocks(state)
    out.write(struct.pack("<I", len(blocks)))
    for name, arr in blocks:
        _write_block(out, name, arr)
    body = out.getvalue()
    return body + struct.pack("<I", zlib.crc32(body))


def save_checkpoint(state: TrainState, path) -> Path:
    """Atomically write ``state`` to ``path`` and return the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = checkpoint_bytes(state)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)
    return path


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def parse_checkpoint(data: bytes) -> tuple[str, dict, dict[str, np.ndarray]]:
    """Decode raw checkpoint bytes into (preset, metadata, blocks)."""
    if not MAGIC.startswith(data[:len(MAGIC)]):
        raise CheckpointError("not a uwcolor checkpoint (bad magic)")
    if len(data) < len(MAGIC) + 8:
        raise CheckpointError("checkpoint is truncated")
    r = _Reader(data)
    r.take(len(MAGIC))
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version} is not supported (expected {FORMAT_VERSION})")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint is truncated or corrupt (checksum mismatch)")
    (n,) = r.unpack("<H")
    preset = r.take(n).decode("ascii")
    (n,) = r.unpack("<I")
    meta = json.loads(r.take(n))
    (count,) = r.unpack("<I")
    blocks: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = r.unpack("<H")
        name = r.take(n).decode()
        code = r.take(1)
        if code not in _DTYPES:
            raise CheckpointError(f"block {name}: unknown dtype code {code!r}")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        dtype = _DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        arr = np.frombuffer(r.take(nbytes), dtype=dtype).reshape(shape)
        blocks[name] = arr.astype(dtype.newbyteorder("="), copy=True)
    if r.pos != len(body):
        raise CheckpointError("checkpoint has trailing bytes")
    return preset, meta, blocks


def _fill(net, net_name: str, blocks: dict) -> None:
    for pname, t in net.named_parameters():
        key = f"net/{net_name}/{pname}"
        if key not in blocks:
            raise CheckpointError(f"checkpoint lacks parameter {key}; architecture mismatch")
        arr = blocks[key]
        if arr.shape != t.shape:
            raise CheckpointError(f"{key}: checkpoint shape {arr.shape} != architecture shape {t.shape}")
        t.data[...] = arr


def _expected_net_blocks(state: TrainState) -> set[str]:
    return {f"net/{k}/{p}" for k, net in state.networks().items() for p, _ in net.named_parameters()}


def state_from_parts(preset: str, meta: dict, blocks: dict) -> TrainState:
    config = parse_config(meta["config"])
    if config.arch.preset != preset:
        raise CheckpointError(f"header preset {preset!r} disagrees with config preset {config.arch.preset!r}")
    state = init_state(config)
    extra = {k for k in blocks if k.startswith("net/")} - _expected_net_blocks(state)
    if extra:
        raise CheckpointError(f"checkpoint has parameters unknown to the architecture: {sorted(extra)[:3]}")
    nets, opts = state.networks(), state.optimizers()
    for net_name in NET_NAMES:
        _fill(nets[net_name], net_name, blocks)
        om = meta["adam"][net_name]
        opt = opts[net_name]
        opt.step_count = int(om["step_count"])
        opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon = om["learning_rate"], om["beta1"], om["beta2"], om["epsilon"]
        for i, (pname, t) in enumerate(nets[net_name].named_parameters()):
            for kind, store in (("m", opt.first_moment), ("v", opt.second_moment)):
                key = f"adam/{net_name}/{kind}/{pname}"
                if key not in blocks or blocks[key].shape != t.shape:
                    raise CheckpointError(f"missing or malformed optimiser block {key}")
                store[i] = blocks[key].copy()
    for label, buf in state.buffers().items():
        info = meta["replay"][label]
        buf.capacity = int(info["capacity"])
        buf.pool = [blocks[f"replay/{label}/{i}"].copy() for i in range(int(info["size"]))]
        buf.rng.bit_generator.state = info["rng"]
    state.step = int(meta["step"])
    return state


def load_checkpoint(path) -> TrainState:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    preset, meta, blocks = parse_checkpoint(data)
    try:
        return state_from_parts(preset, meta, blocks)
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"checkpoint {path} is malformed: {exc}") from exc


def load_generator(path, which: str = "G") -> tuple[GeneratorNet, TrainConfig]:
    """Just one generator (``"G"`` forward or ``"F"`` backward) plus its config."""
    if which not in ("G", "F"):
        raise ValueError(f"which must be 'G' or 'F', got {which!r}")
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    _, meta, blocks = parse_checkpoint(data)
    config = parse_config(meta["config"])
    with default_dtype(config.train.dtype):
        net = build_generator(config.arch, seeded_rng(0))
    _fill(net, which, blocks)
    return net, config


__all__ = [
    "CheckpointError", "FORMAT_VERSION", "MAGIC", "checkpoint_bytes", "load_checkpoint",
    "load_generator", "parse_checkpoint", "save_checkpoint", "AdamState", "ReplayBuffer",
]

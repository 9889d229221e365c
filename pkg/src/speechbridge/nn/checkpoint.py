"""Checkpoint serialization and parameter fingerprinting.

Binary layout ("SOLW"): magic, version u16, entry count u32, then per
entry a length-prefixed UTF-8 name, u32 ndim, ndim u32 dims, and the f32
little-endian values. Round-trips are bit-exact for float32 tensors.
"""

import hashlib
import struct

import torch

from ..errors import FormatError

MAGIC = b"SOLW"
VERSION = 1


def save_checkpoint(path, tensors, meta=None):
    """Write named float tensors (a dict or a module state_dict) to path.

    meta: optional dict of short strings, stored as zero-dim byte entries
    under reserved "__meta__/" names so attach-time validation can read
    architecture tags without loading weights into a model.
    """
    items = dict(tensors)
    if meta:
        for key, val in meta.items():
            enc = torch.frombuffer(bytearray(str(val).encode("utf-8")), dtype=torch.uint8)
            items[f"__meta__/{key}"] = enc.to(torch.float32)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", VERSION, len(items)))
        for name in sorted(items):
            t = items[name].detach().to(torch.float32).contiguous()
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", t.ndim))
            f.write(struct.pack(f"<{t.ndim}I", *t.shape))
            f.write(t.numpy().astype("<f4", copy=False).tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (tensors: dict[str, Tensor], meta: dict[str, str])."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}, expected {MAGIC!r}")
    off = 4
    version, count = struct.unpack_from("<HI", data, off)
    off += 6
    if version != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    tensors, meta = {}, {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off:off + nlen].decode("utf-8")
        off += nlen
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        numel = 1
        for d in shape:
            numel *= d
        end = off + 4 * numel
        if end > len(data):
            raise FormatError(f"{path}: truncated tensor data for {name!r}")
        vals = torch.frombuffer(bytearray(data[off:end]), dtype=torch.float32)
        off = end
        if name.startswith("__meta__/"):
            meta[name[len("__meta__/"):]] = bytes(
                vals.to(torch.uint8).tolist()).decode("utf-8")
        else:
            tensors[name] = vals.reshape(shape).clone()
    if off != len(data):
        raise FormatError(f"{path}: {len(data) - off} trailing bytes")
    return tensors, meta


def parameter_checksum(module: torch.nn.Module) -> str:
    """SHA-256 over the module's parameters in sorted name order.

    Used to prove a stage never touched frozen weights: any bit flip in
    any parameter changes the digest.
    """
    h = hashlib.sha256()
    for name, p in sorted(module.named_parameters(), key=lambda kv: kv[0]):
        h.update(name.encode("utf-8"))
        h.update(p.detach().to(torch.float32).contiguous().numpy().astype("<f4", copy=False).tobytes())
    return h.hexdigest()


def save_module(path, module: torch.nn.Module, meta=None, exclude_prefixes=()):
    """Writes a module's state dict, optionally dropping named subtrees."""
    tensors = {k: v for k, v in module.state_dict().items()
               if not any(k.startswith(px) for px in exclude_prefixes)}
    save_checkpoint(path, tensors, meta)


def load_module(path, module: torch.nn.Module):
    """Loads a checkpoint into a module; shape conflicts -> DimensionMismatch."""
    from ..errors import DimensionMismatch
    tensors, meta = load_checkpoint(path)
    try:
        module.load_state_dict(tensors)
    except RuntimeError as e:
        raise DimensionMismatch(f"{path}: {e}") from None
    return meta

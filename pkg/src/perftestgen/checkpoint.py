"""Self-describing little-endian binary checkpoints.

Layout::

    b"ACTA" | u32 version | u32 n_arrays |
    n_arrays x ( u32 name_len | name (utf-8) | u32 ndims | ndims x u64 | f64 data, row-major )

Everything needed to rebuild a :class:`CGANModel` (input space, layer
shapes, optimizer moments, RNG state) lives in named arrays, so a file can
be loaded without any side information.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .cgan import CGANModel
from .codec import InputSpace
from .nn import Adam

MAGIC = b"ACTA"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


class CheckpointFormatError(CheckpointError):
    """Bad magic bytes or undecodable structure."""


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    """Arrays present but inconsistent with each other or the model layout."""


def write_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    """Write the named-array table atomically (temp file + rename)."""
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
        chunks.append(struct.pack(f"<I{arr.ndim}Q", arr.ndim, *arr.shape))
        chunks.append(arr.tobytes())
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(b"".join(chunks))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_arrays(path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointTruncatedError(f"{path}: unexpected end of file at byte {pos}")
        out = buf[pos:pos + n]
        pos += n
        return out

    if len(buf) < 4 or buf[:4] != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint (bad magic)")
    pos = 4
    version, count = struct.unpack("<II", take(8))
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    arrays = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        try:
            name = take(name_len).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointFormatError(f"{path}: undecodable array name") from exc
        (ndim,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        n = int(np.prod(dims, dtype=np.int64)) if ndim else 1
        arrays[name] = np.frombuffer(take(8 * n), dtype="<f8").reshape(dims).astype(np.float64)
    if pos != len(buf):
        raise CheckpointFormatError(f"{path}: {len(buf) - pos} trailing bytes")
    return arrays


# -- text and RNG state packed into float64 arrays ----------------------------

def _text_to_array(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.float64)


def _array_to_text(arr: np.ndarray) -> str:
    return arr.astype(np.uint8).tobytes().decode("utf-8")


def _split_u128(x: int) -> list[float]:
    # 32-bit limbs are exact in float64
    return [float((x >> (32 * k)) & 0xFFFFFFFF) for k in range(4)]


def _join_u128(limbs) -> int:
    return sum(int(v) << (32 * k) for k, v in enumerate(limbs))


def rng_to_array(rng: np.random.Generator) -> np.ndarray:
    st = rng.bit_generator.state
    if st["bit_generator"] != "PCG64":
        raise CheckpointError("only PCG64 generators can be serialized")
    return np.array(_split_u128(st["state"]["state"]) + _split_u128(st["state"]["inc"])
                    + [float(st["has_uint32"]), float(st["uinteger"])])


def rng_from_array(arr: np.ndarray) -> np.random.Generator:
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": _join_u128(arr[:4]), "inc": _join_u128(arr[4:8])},
        "has_uint32": int(arr[8]),
        "uinteger": int(arr[9]),
    }
    return rng


# -- model <-> arrays ---------------------------------------------------------

def model_to_arrays(model: CGANModel) -> dict[str, np.ndarray]:
    hidden = model.gen.layers[0].n_out
    embed_dim = model.gen.embedding.table.shape[1]
    arrays = {
        "meta/input_space_json": _text_to_array(json.dumps(model.space.to_dict(), sort_keys=True)),
        "meta/model": np.array([model.num_labels, model.seed, model.steps, hidden, embed_dim],
                               dtype=np.float64),
        "meta/seed": np.array(_split_u128(model.seed)),
        "rng/pcg64": rng_to_array(model.rng),
    }
    arrays.update(model.parameter_arrays())
    for prefix, opt in (("opt/gen", model.gen_optimizer), ("opt/disc", model.disc_optimizer)):
        arrays[f"{prefix}/hyper"] = np.array(
            [opt.learning_rate, opt.beta1, opt.beta2, opt.epsilon, opt.step_count])
        for name in opt.first_moment:
            arrays[f"{prefix}/m/{name}"] = opt.first_moment[name]
            arrays[f"{prefix}/v/{name}"] = opt.second_moment[name]
    return arrays


def model_from_arrays(arrays: dict[str, np.ndarray]) -> CGANModel:
    try:
        space = InputSpace.from_dict(json.loads(_array_to_text(arrays["meta/input_space_json"])))
        num_labels, seed, steps, hidden, embed_dim = (int(v) for v in arrays["meta/model"])
        if "meta/seed" in arrays:
            seed = _join_u128(arrays["meta/seed"])
        rng_state = arrays["rng/pcg64"]
    except KeyError as exc:
        raise CheckpointFormatError(f"missing array {exc.args[0]!r}") from None
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointFormatError(f"bad metadata: {exc}") from exc

    model = CGANModel(space, num_labels, seed, hidden=hidden, embed_dim=embed_dim)
    for name, target in model.parameter_arrays().items():
        src = arrays.get(name)
        if src is None:
            raise CheckpointShapeError(f"missing parameter {name!r}")
        if src.shape != target.shape:
            raise CheckpointShapeError(f"{name}: stored {src.shape}, model expects {target.shape}")
        target[...] = src
    for prefix, net, attr in (("opt/gen", model.gen, "gen_optimizer"),
                              ("opt/disc", model.disc, "disc_optimizer")):
        hyper = arrays.get(f"{prefix}/hyper")
        if hyper is None or hyper.shape != (5,):
            raise CheckpointShapeError(f"{prefix}: missing or malformed optimizer header")
        opt = Adam(*hyper[:4])
        opt.step_count = int(hyper[4])
        for name, param in net.parameters().items():
            m = arrays.get(f"{prefix}/m/{name}")
            v = arrays.get(f"{prefix}/v/{name}")
            if m is None and v is None:
                continue
            if m is None or v is None or m.shape != param.shape or v.shape != param.shape:
                raise CheckpointShapeError(f"{prefix}: moments for {name!r} inconsistent")
            opt.first_moment[name] = m.copy()
            opt.second_moment[name] = v.copy()
        setattr(model, attr, opt)
    if rng_state.shape != (10,):
        raise CheckpointShapeError("rng state must have 10 entries")
    model.rng = rng_from_array(rng_state)
    model.steps = steps
    return model


def save(model: CGANModel, path, extra: dict[str, np.ndarray] | None = None) -> None:
    """Write ``model`` (plus optional ``extra`` named arrays) to ``path``."""
    arrays = model_to_arrays(model)
    for name, arr in (extra or {}).items():
        if name in arrays:
            raise ValueError(f"extra array {name!r} clashes with model state")
        arrays[name] = np.asarray(arr, dtype=np.float64)
    write_arrays(path, arrays)


def load(path, with_extra: bool = False):
    """Load a model; with ``with_extra`` also return the non-model arrays."""
    arrays = read_arrays(path)
    model = model_from_arrays(arrays)
    if not with_extra:
        return model
    known = set(model_to_arrays(model))
    return model, {k: v for k, v in arrays.items() if k not in known}

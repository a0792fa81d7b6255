"""Self-describing structured-text archives.

One archive holds a flat metadata mapping and a set of named numpy arrays.
Array payloads are the raw little-endian bytes rendered in base-16, so a
round trip is bit-exact; metadata scalars carry a type tag and floats are
written with repr(), which also round-trips exactly.

Layout::

    riscf-archive 1
    [meta]
    K = int:3
    p_max_w = float:0.4
    method = str:proposed
    [array ue_pos]
    dtype = float64
    shape = 3 3
    hex = 9a9999... (wrapped; continuation lines start with a space)

Supported array dtypes: float64, complex128, int64, int8.
"""

from __future__ import annotations

import numpy as np

_MAGIC = "riscf-archive 1"
_DTYPES = {"float64": "<f8", "complex128": "<c16", "int64": "<i8", "int8": "|i1"}
_WRAP = 120


def _encode_meta(value) -> str:
    if isinstance(value, bool):
        return f"bool:{value}"
    if isinstance(value, int):
        return f"int:{value}"
    if isinstance(value, float):
        return f"float:{value!r}"
    if isinstance(value, str):
        if "\n" in value:
            raise ValueError("metadata strings must be single-line")
        return f"str:{value}"
    if value is None:
        return "none:"
    raise TypeError(f"unsupported metadata type {type(value).__name__}")


def _decode_meta(text: str):
    tag, _, body = text.partition(":")
    if tag == "bool":
        return body == "True"
    if tag == "int":
        return int(body)
    if tag == "float":
        return float(body)
    if tag == "str":
        return body
    if tag == "none":
        return None
    raise ValueError(f"unknown metadata tag {tag!r}")


def save_archive(path, meta: dict, arrays: dict) -> None:
    lines = [_MAGIC, "[meta]"]
    for key, value in meta.items():
        lines.append(f"{key} = {_encode_meta(value)}")
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        dtype_name = arr.dtype.name
        if dtype_name not in _DTYPES:
            raise TypeError(f"array {name!r}: unsupported dtype {dtype_name}")
        payload = np.ascontiguousarray(arr).astype(_DTYPES[dtype_name]).tobytes().hex()
        lines.append(f"[array {name}]")
        lines.append(f"dtype = {dtype_name}")
        lines.append("shape = " + " ".join(str(s) for s in arr.shape))
        if payload:
            lines.append(f"hex = {payload[:_WRAP]}")
            for i in range(_WRAP, len(payload), _WRAP):
                lines.append(" " + payload[i:i + _WRAP])
        else:
            lines.append("hex =")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_archive(path) -> tuple[dict, dict]:
    with open(path, encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ValueError(f"{path}: not a riscf archive")
    meta: dict = {}
    arrays: dict = {}
    section = None  # None | "meta" | array name
    fields: dict = {}

    def finish_array():
        if section in (None, "meta"):
            return
        for required in ("dtype", "shape", "hex"):
            if required not in fields:
                raise ValueError(f"array {section!r}: missing {required}")
        dtype = fields["dtype"]
        if dtype not in _DTYPES:
            raise ValueError(f"array {section!r}: unsupported dtype {dtype}")
        shape = tuple(int(s) for s in fields["shape"].split())
        raw = bytes.fromhex(fields["hex"])
        arr = np.frombuffer(raw, dtype=_DTYPES[dtype]).astype(dtype)
        if arr.size != int(np.prod(shape)):
            raise ValueError(f"array {section!r}: payload does not match shape")
        arrays[section] = arr.reshape(shape)

    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith(" "):  # hex continuation
            if section in (None, "meta") or "hex" not in fields:
                raise ValueError(f"line {lineno}: unexpected continuation")
            fields["hex"] += line.strip()
            continue
        if line.startswith("["):
            finish_array()
            header = line.strip("[]")
            if header == "meta":
                section = "meta"
            elif header.startswith("array "):
                section = header[len("array "):]
                fields = {}
            else:
                raise ValueError(f"line {lineno}: unknown section {header!r}")
            continue
        key, sep, value = line.partition(" = ")
        if not sep:
            key, sep, value = line.partition(" =")
            if not sep:
                raise ValueError(f"line {lineno}: expected 'key = value'")
        if section == "meta":
            meta[key] = _decode_meta(value)
        elif section is not None:
            fields[key.strip()] = value
        else:
            raise ValueError(f"line {lineno}: content outside any section")
    finish_array()
    return meta, arrays

"""Versioned JSON checkpoint container.

Arrays are stored as base64 little-endian float64 with their shapes, which
keeps files exact and byte-stable across runs (no timestamps, sorted keys).
"""

import base64
import json

import numpy as np

FORMAT = "attnscale-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_array(a):
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(obj):
    raw = base64.b64decode(obj["data"])
    return np.frombuffer(raw, dtype="<f8").reshape(obj["shape"]).astype(np.float64)


def encode_tree(tree):
    if isinstance(tree, np.ndarray):
        return {"__array__": encode_array(tree)}
    if isinstance(tree, dict):
        return {str(k): encode_tree(v) for k, v in tree.items()}
    if isinstance(tree, (list, tuple)):
        return [encode_tree(v) for v in tree]
    if isinstance(tree, (np.integer,)):
        return int(tree)
    if isinstance(tree, (np.floating,)):
        return float(tree)
    return tree


def decode_tree(tree):
    if isinstance(tree, dict):
        if set(tree) == {"__array__"}:
            return decode_array(tree["__array__"])
        return {k: decode_tree(v) for k, v in tree.items()}
    if isinstance(tree, list):
        return [decode_tree(v) for v in tree]
    return tree


def save(path, agent_kind, arch, params, extra=None):
    """Write a checkpoint. ``params`` maps names to arrays or tensors."""
    blocks = {k: encode_array(getattr(v, "data", v)) for k, v in params.items()}
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "agent_kind": agent_kind,
        "arch": arch,
        "params": blocks,
        "extra": encode_tree(extra or {}),
    }
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def load(path, expected_kind=None, expected_shapes=None):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    if expected_kind is not None and doc["agent_kind"] != expected_kind:
        raise CheckpointError(
            f"{path}: checkpoint is for agent {doc['agent_kind']}, not {expected_kind}")
    params = {k: decode_array(v) for k, v in doc["params"].items()}
    if expected_shapes is not None:
        if set(expected_shapes) != set(params):
            missing = sorted(set(expected_shapes) ^ set(params))
            raise CheckpointError(f"{path}: parameter set mismatch: {missing}")
        for k, shape in expected_shapes.items():
            if tuple(params[k].shape) != tuple(shape):
                raise CheckpointError(
                    f"{path}: shape mismatch for {k}: {params[k].shape} != {tuple(shape)}")
    return {"agent_kind": doc["agent_kind"], "arch": doc["arch"], "params": params,
            "extra": decode_tree(doc["extra"])}

"""Bitset helpers plus the hot kernels, compiled when available.

The compiled module ``_bitkern`` is preferred; set ``PRESCRIPTIVE_CG_PURE=1``
to force the numpy fallback. ``BACKEND`` names the active implementation.
"""
import os
import sys

import numpy as np

from . import _bitkern_py

if sys.byteorder != "little":  # pragma: no cover
    raise ImportError("bitset layout assumes a little-endian host")

_compiled = None
if not os.environ.get("PRESCRIPTIVE_CG_PURE"):
    try:
        from . import _bitkern as _compiled
    except ImportError:
        _compiled = None

_impl = _compiled if _compiled is not None else _bitkern_py
BACKEND = "cython" if _compiled is not None else "numpy"


def backends():
    """Available kernel modules keyed by name (the fallback is always present)."""
    out = {"numpy": _bitkern_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out


def n_words(n_bits):
    return max(1, (n_bits + 63) // 64)


def from_bool(mask):
    """Pack a boolean array ``(..., n)`` into ``(..., n_words(n))`` uint64 words."""
    mask = np.asarray(mask, dtype=bool)
    n = mask.shape[-1]
    W = n_words(n)
    padded = np.zeros(mask.shape[:-1] + (64 * W,), dtype=bool)
    padded[..., :n] = mask
    packed = np.packbits(padded, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view(np.uint64)


def to_bool(bits, n):
    bits = np.ascontiguousarray(bits, dtype=np.uint64)
    unpacked = np.unpackbits(bits.view(np.uint8), axis=-1, bitorder="little")
    return unpacked[..., :n].astype(bool)


def from_indices(indices, n):
    mask = np.zeros(n, dtype=bool)
    mask[np.asarray(indices, dtype=np.int64)] = True
    return from_bool(mask)


def to_indices(bits, n):
    return np.flatnonzero(to_bool(bits, n))


def full(n):
    return from_bool(np.ones(n, dtype=bool))


def extend_scores(parent_bits, node_bits, weights, best):
    """For every (parent, node) pair, weighted size and ``best`` sum of the intersection.

    Returns two ``(len(parent_bits), len(node_bits))`` float arrays.
    """
    return _impl.extend_scores(
        np.ascontiguousarray(parent_bits, dtype=np.uint64),
        np.ascontiguousarray(node_bits, dtype=np.uint64),
        np.ascontiguousarray(weights, dtype=np.float64),
        np.ascontiguousarray(best, dtype=np.float64),
    )


def action_sums(bits, values):
    """``out[p, q] = sum of values[k, q] over set bits k of bits[p]``."""
    bits = np.ascontiguousarray(np.atleast_2d(bits), dtype=np.uint64)
    return _impl.action_sums(bits, np.ascontiguousarray(values, dtype=np.float64))


def popcount(bits):
    bits = np.ascontiguousarray(np.atleast_2d(bits), dtype=np.uint64)
    return _impl.popcount(bits)

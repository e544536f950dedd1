"""Pure-numpy versions of the bitset kernels in ``_bitkern.pyx``."""
import numpy as np

# rows of unpacked bits processed at once; bounds the temporary bool matrix
_CHUNK_BITS = 1 << 22


def _unpack(bits):
    """(P, W) uint64 -> (P, 64*W) bool, bit k of the set at column k."""
    as_bytes = np.ascontiguousarray(bits).view(np.uint8)
    return np.unpackbits(as_bytes, axis=-1, bitorder="little").astype(bool)


def extend_scores(parent_bits, node_bits, weights, best):
    parent_bits = np.ascontiguousarray(parent_bits, dtype=np.uint64)
    node_bits = np.ascontiguousarray(node_bits, dtype=np.uint64)
    L, W = parent_bits.shape
    N = node_bits.shape[0]
    A = 64 * W
    wb = np.zeros((A, 2))
    wb[: len(weights), 0] = weights
    wb[: len(best), 1] = best
    counts = np.empty((L, N))
    sums = np.empty((L, N))
    step = max(1, _CHUNK_BITS // A)
    for n in range(N):
        for lo in range(0, L, step):
            hi = min(L, lo + step)
            child = _unpack(parent_bits[lo:hi] & node_bits[n])
            out = child @ wb
            counts[lo:hi, n] = out[:, 0]
            sums[lo:hi, n] = out[:, 1]
    return counts, sums


def action_sums(bits, values):
    bits = np.ascontiguousarray(bits, dtype=np.uint64)
    P, W = bits.shape
    A = 64 * W
    padded = np.zeros((A, values.shape[1]))
    padded[: values.shape[0]] = values
    out = np.empty((P, values.shape[1]))
    step = max(1, _CHUNK_BITS // A)
    for lo in range(0, P, step):
        hi = min(P, lo + step)
        out[lo:hi] = _unpack(bits[lo:hi]) @ padded
    return out


def popcount(bits):
    bits = np.ascontiguousarray(bits, dtype=np.uint64)
    return np.unpackbits(bits.view(np.uint8), axis=-1).sum(axis=-1).astype(np.int64)

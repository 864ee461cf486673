"""Hot scalar loops, each with a numba ``@njit`` version and a numpy version.

The numba path is used when numba imports and ``DSGSUM_NUMBA`` is not ``0``.
Both paths are importable directly (``*_numba`` / ``*_numpy``) so tests and
the benchmark can compare them.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("DSGSUM_NUMBA", "1") != "0"


# ------------------------------------------------------------------ LCS length


def lcs_length_numpy(a: np.ndarray, b: np.ndarray) -> int:
    """Longest common subsequence length, one vectorised DP row at a time."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    if a.size == 0 or b.size == 0:
        return 0
    prev = np.zeros(b.size + 1, dtype=np.int64)
    for x in a:
        match = np.where(b == x, prev[:-1] + 1, 0)
        cur = np.zeros_like(prev)
        # cur[j+1] = max(prev[j+1], cur[j], match[j]) needs a running max
        cur[1:] = np.maximum(prev[1:], match)
        np.maximum.accumulate(cur, out=cur)
        prev = cur
    return int(prev[-1])


def _lcs_length_py(a, b):
    n, m = a.shape[0], b.shape[0]
    prev = np.zeros(m + 1, dtype=np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(n):
        cur[0] = 0
        ai = a[i]
        for j in range(m):
            if ai == b[j]:
                cur[j + 1] = prev[j] + 1
            elif prev[j + 1] >= cur[j]:
                cur[j + 1] = prev[j + 1]
            else:
                cur[j + 1] = cur[j]
        prev, cur = cur, prev
    return prev[m]


# ------------------------------------------------------------- trigram block


def trigram_block_mask_numpy(prefix: np.ndarray, vocab_size: int) -> np.ndarray:
    """Boolean mask of tokens that would repeat a trigram already in ``prefix``."""
    prefix = np.asarray(prefix, dtype=np.int64)
    mask = np.zeros(vocab_size, dtype=np.bool_)
    n = prefix.size
    if n < 3:
        return mask
    a, b = prefix[-2], prefix[-1]
    hits = (prefix[: n - 2] == a) & (prefix[1: n - 1] == b)
    mask[prefix[2:][hits]] = True
    return mask


def _trigram_block_mask_py(prefix, vocab_size):
    mask = np.zeros(vocab_size, dtype=np.bool_)
    n = prefix.shape[0]
    if n < 3:
        return mask
    a = prefix[n - 2]
    b = prefix[n - 1]
    for i in range(n - 2):
        if prefix[i] == a and prefix[i + 1] == b:
            mask[prefix[i + 2]] = True
    return mask


# ---------------------------------------------------------- bootstrap means


def bootstrap_mean_diffs_numpy(diff: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Per-resample mean of ``diff`` over the index rows of ``idx``."""
    return np.asarray(diff, dtype=np.float64)[idx].mean(axis=1)


def _bootstrap_mean_diffs_py(diff, idx):
    n_iter, size = idx.shape
    out = np.empty(n_iter, dtype=np.float64)
    for r in range(n_iter):
        acc = 0.0
        for k in range(size):
            acc += diff[idx[r, k]]
        out[r] = acc / size
    return out


if HAVE_NUMBA:
    _lcs_nb = njit(cache=True, nogil=True)(_lcs_length_py)
    _trigram_nb = njit(cache=True, nogil=True)(_trigram_block_mask_py)
    _bootstrap_nb = njit(cache=True, nogil=True)(_bootstrap_mean_diffs_py)

    def lcs_length_numba(a, b) -> int:
        return int(_lcs_nb(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)))

    def trigram_block_mask_numba(prefix, vocab_size: int) -> np.ndarray:
        return _trigram_nb(np.asarray(prefix, dtype=np.int64), int(vocab_size))

    def bootstrap_mean_diffs_numba(diff, idx) -> np.ndarray:
        # summation order differs from numpy's pairwise sum, so results agree
        # to rounding, not bit-for-bit across the two paths
        return _bootstrap_nb(np.asarray(diff, dtype=np.float64), np.asarray(idx, dtype=np.int64))
else:  # pragma: no cover
    lcs_length_numba = lcs_length_numpy
    trigram_block_mask_numba = trigram_block_mask_numpy
    bootstrap_mean_diffs_numba = bootstrap_mean_diffs_numpy


if USE_NUMBA:
    lcs_length = lcs_length_numba
    trigram_block_mask = trigram_block_mask_numba
    bootstrap_mean_diffs = bootstrap_mean_diffs_numba
else:
    lcs_length = lcs_length_numpy
    trigram_block_mask = trigram_block_mask_numpy
    bootstrap_mean_diffs = bootstrap_mean_diffs_numpy


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"

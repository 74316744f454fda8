"""Hot numeric kernels: LCS length and squared label-vector distances.

Each kernel has a numba ``@njit`` implementation and a pure-numpy fallback.
The fallback is used when numba is unavailable or when the environment
variable ``RADIMPRESS_DISABLE_JIT`` is set to a truthy value.
"""
from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("RADIMPRESS_DISABLE_JIT", "").strip().lower()
_JIT_REQUESTED = _FLAG not in {"1", "true", "yes", "on"}

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

JIT_ENABLED = HAVE_NUMBA and _JIT_REQUESTED


# below this many DP cells a plain Python loop beats per-row numpy overhead
_SMALL_LCS = 256


def _lcs_small(a: list, b: list) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def lcs_length_numpy(a: np.ndarray, b: np.ndarray) -> int:
    """LCS length of two int64 token-id arrays, one numpy row per token of the shorter one.

    Uses cur = cummax(max(prev[j], prev[j-1] + match)), which equals the
    textbook recurrence because adjacent DP cells differ by at most one.
    """
    n, m = a.shape[0], b.shape[0]
    if n == 0 or m == 0:
        return 0
    if n > m:
        a, b = b, a
        n, m = m, n
    if n * m <= _SMALL_LCS:
        return _lcs_small(a.tolist(), b.tolist())
    prev = np.zeros(m + 1, dtype=np.int64)
    for i in range(n):
        diag = np.where(b == a[i], prev[:-1] + 1, 0)
        cur = np.empty_like(prev)
        cur[0] = 0
        cur[1:] = np.maximum.accumulate(np.maximum(prev[1:], diag))
        prev = cur
    return int(prev[-1])


def squared_distances_numpy(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Integer squared Euclidean distance from ``query`` to every row of ``matrix``."""
    diff = matrix.astype(np.int64) - query.astype(np.int64)
    return np.einsum("ij,ij->i", diff, diff)


if HAVE_NUMBA:

    @njit(cache=True)
    def lcs_length_numba(a, b):
        n = a.shape[0]
        m = b.shape[0]
        if n == 0 or m == 0:
            return 0
        if m > n:
            a, b = b, a
            n, m = m, n
        row = np.zeros(m + 1, dtype=np.int64)
        for i in range(n):
            diag = 0
            ai = a[i]
            for j in range(1, m + 1):
                up = row[j]
                if ai == b[j - 1]:
                    row[j] = diag + 1
                elif row[j - 1] > up:
                    row[j] = row[j - 1]
                diag = up
        return row[m]

    @njit(cache=True)
    def squared_distances_numba(matrix, query):
        n, d = matrix.shape
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            acc = 0
            for k in range(d):
                t = np.int64(matrix[i, k]) - np.int64(query[k])
                acc += t * t
            out[i] = acc
        return out

else:  # pragma: no cover
    lcs_length_numba = None
    squared_distances_numba = None


def lcs_length(a: np.ndarray, b: np.ndarray) -> int:
    if JIT_ENABLED:
        return int(lcs_length_numba(a, b))
    return lcs_length_numpy(a, b)


def squared_distances(matrix: np.ndarray, query: np.ndarray) -> np.ndarray:
    if JIT_ENABLED:
        return squared_distances_numba(matrix, query)
    return squared_distances_numpy(matrix, query)

"""Independent oracles used to derive expected test values.

These deliberately avoid the library's vectorized code paths: explicit
loops, explicit index maps, and mpmath for high-precision scalars.
"""

import numpy as np


def loop_matmul(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Triple-loop affine map over the last axis."""
    x2 = x.reshape(-1, x.shape[-1])
    out = np.zeros((x2.shape[0], w.shape[1]), dtype=np.float64)
    for r in range(x2.shape[0]):
        for j in range(w.shape[1]):
            acc = 0.0
            for i in range(w.shape[0]):
                acc += float(x2[r, i]) * float(w[i, j])
            if b is not None:
                acc += float(b[j])
            out[r, j] = acc
    return out.reshape(x.shape[:-1] + (w.shape[1],))


def erf_gelu(x: float) -> float:
    """mpmath-based exact GELU for scalar inputs."""
    import mpmath

    mpmath.mp.dps = 30
    v = mpmath.mpf("0.5") * x * (1 + mpmath.erf(mpmath.mpf(x) / mpmath.sqrt(2)))
    return float(v)


def inner_rearrange_index_map(x: np.ndarray, axis: str, m: int) -> np.ndarray:
    """Element-by-element reference for inner-region rearrangement."""
    n, h, w, c = x.shape
    if axis == "height":
        assert h % m == 0
        out = np.zeros((n, h // m, w, m * c), dtype=x.dtype)
        for bn in range(n):
            for r in range(h // m):
                for j in range(m):
                    for ww in range(w):
                        for ch in range(c):
                            out[bn, r, ww, j * c + ch] = x[bn, r * m + j, ww, ch]
        return out
    assert w % m == 0
    out = np.zeros((n, h, w // m, m * c), dtype=x.dtype)
    for bn in range(n):
        for hh in range(h):
            for r in range(w // m):
                for j in range(m):
                    for ch in range(c):
                        out[bn, hh, r, j * c + ch] = x[bn, hh, r * m + j, ch]
    return out


def roll_index_map(x: np.ndarray, axis_idx: int, step: int) -> np.ndarray:
    """Modular-index reference for the circular token shift."""
    out = np.zeros_like(x)
    extent = x.shape[axis_idx]
    for i in range(extent):
        src = [slice(None)] * x.ndim
        dst = [slice(None)] * x.ndim
        src[axis_idx] = i
        dst[axis_idx] = (i + step) % extent
        out[tuple(dst)] = x[tuple(src)]
    return out


def shuffle_index_map(x: np.ndarray, axis_idx: int, m: int) -> np.ndarray:
    """Transpose-factorization reference: token r*m+j moves to j*g+r."""
    out = np.zeros_like(x)
    extent = x.shape[axis_idx]
    g = extent // m
    for r in range(g):
        for j in range(m):
            src = [slice(None)] * x.ndim
            dst = [slice(None)] * x.ndim
            src[axis_idx] = r * m + j
            dst[axis_idx] = j * g + r
            out[tuple(dst)] = x[tuple(src)]
    return out


def circular_pad_index(extent: int, target: int) -> list[int]:
    """out[i] = in[i mod extent]."""
    return [i % extent for i in range(target)]


def per_token_mlp(x: np.ndarray, w1, b1, w2, b2, act) -> np.ndarray:
    """Per-token two-layer MLP via explicit loops over tokens."""
    n, h, w, _ = x.shape
    out = np.zeros((n, h, w, w2.shape[1]), dtype=np.float64)
    for bn in range(n):
        for i in range(h):
            for j in range(w):
                hid = act(x[bn, i, j] @ w1 + b1)
                out[bn, i, j] = hid @ w2 + b2
    return out

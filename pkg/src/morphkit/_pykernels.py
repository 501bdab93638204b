"""Pure numpy implementations of the hot kernels.

Two kernel families live here: MinHash signature minima and the fused GRU
cell (forward + backward).  `morphkit._ckernels` provides the compiled
equivalents; `morphkit.backend` picks one at import time.  Both backends
must agree numerically (exactly for the integer MinHash kernel, to float
round-off for the GRU kernels) -- tests/test_kernels.py enforces this.
"""
from __future__ import annotations

import numpy as np

IS_COMPILED = False

_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SH30 = np.uint64(30)
_SH27 = np.uint64(27)
_SH31 = np.uint64(31)


def minhash_mins(token_hashes: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Per-permutation minima of mixed (token_hash XOR key) values.

    token_hashes: uint64 array (n,) of base token hashes, n >= 1.
    keys: uint64 array (P,) of per-permutation keys.
    Returns a uint64 array (P,); component p is
    min_i splitmix64_fin(token_hashes[i] ^ keys[p]).
    """
    if token_hashes.size == 0:
        raise ValueError("minhash_mins: empty token hash array")
    z = token_hashes[:, None] ^ keys[None, :]
    z = (z ^ (z >> _SH30)) * _MIX1
    z = (z ^ (z >> _SH27)) * _MIX2
    z = z ^ (z >> _SH31)
    return z.min(axis=0)


def gru_forward(x, h, wz, wr, wh, bz, br, bh):
    """Fused GRU cell forward pass.

    x: (n_in,) input, h: (n_h,) previous state; wz/wr/wh: (n_h, n_in+n_h)
    gate weights acting on [x ; h]; bz/br/bh: (n_h,) biases (pass zeros for
    a bias-free cell).

        z = sigmoid(wz @ [x;h] + bz)
        r = sigmoid(wr @ [x;h] + br)
        c = tanh(wh @ [x ; r*h] + bh)
        h_new = (1-z)*h + z*c

    Returns (h_new, z, r, c); the three gate arrays are the cache consumed
    by gru_backward.
    """
    cat = np.concatenate((x, h))
    z = _sigmoid(wz @ cat + bz)
    r = _sigmoid(wr @ cat + br)
    cat_r = np.concatenate((x, r * h))
    c = np.tanh(wh @ cat_r + bh)
    h_new = (1.0 - z) * h + z * c
    return h_new, z, r, c


def gru_backward(g, x, h, z, r, c, wz, wr, wh):
    """Backward pass matching gru_forward.

    g is dL/dh_new.  Returns (dx, dh, dwz, dwr, dwh, dbz, dbr, dbh).
    """
    n_in = x.shape[0]
    cat = np.concatenate((x, h))
    cat_r = np.concatenate((x, r * h))

    dz = g * (c - h)
    daz = dz * z * (1.0 - z)
    dc = g * z
    dac = dc * (1.0 - c * c)

    dcat_r = wh.T @ dac
    drh = dcat_r[n_in:]
    dr = drh * h
    dar = dr * r * (1.0 - r)

    dcat = wz.T @ daz + wr.T @ dar
    dx = dcat[:n_in] + dcat_r[:n_in]
    dh = g * (1.0 - z) + drh * r + dcat[n_in:]

    dwz = np.outer(daz, cat)
    dwr = np.outer(dar, cat)
    dwh = np.outer(dac, cat_r)
    return dx, dh, dwz, dwr, dwh, daz, dar, dac


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out

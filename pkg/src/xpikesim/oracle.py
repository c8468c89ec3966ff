"""Exact reference implementations used to validate the hardware engines.

Everything here is deliberately naive: dense integer matmuls, closed-form
rate arithmetic, and exhaustive enumeration. These functions share no code
with the engine modules so that agreement between the two is meaningful.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "ideal_mvm_int",
    "rate_attention",
    "softmax_attention",
    "brute_force_bernoulli",
    "reference_linear_lif",
    "reference_network",
]


def ideal_mvm_int(weights: np.ndarray, input_bits: np.ndarray) -> np.ndarray:
    """Exact integer matrix-vector product y_j = sum_i bits_i * W[i, j].

    weights is (in_dim, out_dim) in crossbar orientation (row = input line,
    column = output line); input_bits is a 0/1 vector of length in_dim.
    """
    w = np.asarray(weights, dtype=np.int64)
    bits = np.asarray(input_bits, dtype=np.int64)
    if w.ndim != 2 or bits.ndim != 1 or bits.shape[0] != w.shape[0]:
        raise ValueError(f"shape mismatch: weights {w.shape}, input {bits.shape}")
    return bits @ w


def rate_attention(q_rates: np.ndarray, k_rates: np.ndarray, v_rates: np.ndarray,
                   causal: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form expected attention under independent Bernoulli streams.

    Inputs are (d_k, n) rate matrices. Returns (score rates S, output rates A):
        S[n, n'] = (1/d_k) * sum_d Q[d, n] * K[d, n']
        A[d, n]  = (1/n_tokens) * sum_n' S[n, n'] * V[d, n']
    With a causal mask, S[n, n'] is zeroed for n' > n before the second stage.
    """
    q = np.asarray(q_rates, dtype=np.float64)
    k = np.asarray(k_rates, dtype=np.float64)
    v = np.asarray(v_rates, dtype=np.float64)
    if q.shape != k.shape or q.shape != v.shape or q.ndim != 2:
        raise ValueError("q, k, v must share shape (d_k, n)")
    d_k, n = q.shape
    scores = (q.T @ k) / d_k
    if causal:
        scores = np.tril(scores)
    out = (v @ scores.T) / n
    return scores, out


def softmax_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                      causal: bool = False) -> np.ndarray:
    """Conventional scaled dot-product attention, for baseline comparisons.

    Inputs are (d_k, n); output is (d_k, n). Softmax is across keys.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d_k, n = q.shape
    logits = (q.T @ k) / np.sqrt(d_k)
    if causal:
        mask = np.triu(np.ones((n, n), dtype=bool), k=1)
        logits = np.where(mask, -np.inf, logits)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    return v @ weights.T


def brute_force_bernoulli(value: int, i_max: int) -> float:
    """Exact acceptance probability of the integer comparator sampler.

    Enumerates every uniform draw r in 0..i_max-1 and counts value > r.
    """
    if i_max < 1:
        raise ValueError("i_max must be positive")
    if not 0 <= value <= i_max:
        raise ValueError(f"value {value} outside 0..{i_max}")
    hits = sum(1 for r in range(i_max) if value > r)
    return hits / i_max


def reference_linear_lif(weights: np.ndarray, threshold: int,
                         x_spikes: np.ndarray, leak: int = 1,
                         residual: np.ndarray | None = None) -> np.ndarray:
    """Dense integer linear layer followed by LIF, no crossbar emulation.

    weights is (out_dim, in_dim); x_spikes is (tokens, in_dim, t_steps).
    Each token's neuron bank starts from zero potential. The optional
    residual (tokens, out_dim, t_steps) is added to the drive before the
    threshold comparison. Returns (tokens, out_dim, t_steps) spikes.
    """
    w = np.asarray(weights, dtype=np.int64)
    x = np.asarray(x_spikes, dtype=np.int64)
    tokens, in_dim, t_steps = x.shape
    out_dim = w.shape[0]
    if w.shape[1] != in_dim:
        raise ValueError(f"weights {w.shape} do not accept input dim {in_dim}")
    drive = np.einsum("oi,nit->not", w, x)
    if residual is not None:
        drive = drive + np.asarray(residual, dtype=np.int64)
    out = np.zeros((tokens, out_dim, t_steps), dtype=np.uint8)
    potential = np.zeros((tokens, out_dim), dtype=np.int64)
    for t in range(t_steps):
        v = (potential >> leak) + drive[:, :, t]
        fired = v >= threshold
        v[fired] = 0
        potential = v
        out[:, :, t] = fired
    return out


def _sample_attention(q, k, v, rng, causal):
    """One step of score/output sampling with an external RNG (monte carlo)."""
    d_k, n = q.shape
    counts = (q.T.astype(np.int64)) @ k.astype(np.int64)
    s_bits = (rng.random((n, n)) * d_k < counts).astype(np.uint8)
    if causal:
        s_bits = np.tril(s_bits)
    a_counts = v.astype(np.int64) @ s_bits.T.astype(np.int64)
    a_bits = (rng.random((d_k, n)) * n < a_counts).astype(np.uint8)
    return a_bits


def reference_network(weights, batch_rates: np.ndarray, t_steps: int, seed: int,
                      causal: bool = False) -> dict:
    """Monte-carlo reference of the full spiking transformer.

    Independent of every engine module: dense integer matmuls, numpy RNG for
    all Bernoulli draws, reference LIF traces. `weights` is a list of block
    weight dicts plus optional "pos_embed" / "head" entries, mirroring the
    structure the model module consumes:

        [{"w_q": (W, thr), "w_k": ..., "w_v": ..., "w_o": ...,
          "w_1": ..., "w_2": ..., "heads": H}, ...]

    Returns {"output_rates": (tokens, d_model), "class_scores": ... or None}.
    Agreement with the simulator is statistical: both realize the same
    stochastic process, so time averages converge at ~1/sqrt(t_steps).
    """
    rng = np.random.default_rng(seed)
    blocks = [w for w in weights if isinstance(w, dict) and "w_q" in w]
    extras = {k: v for w in weights if isinstance(w, dict) and "w_q" not in w
              for k, v in w.items()}
    x_rates = np.clip(np.asarray(batch_rates, dtype=np.float64), 0.0, 1.0)
    if "pos_embed" in extras:
        x_rates = np.clip(x_rates + extras["pos_embed"], 0.0, 1.0)
    tokens, d_model = x_rates.shape
    q256 = np.clip(np.floor(x_rates * 256.0 + 0.5), 0, 256) / 256.0
    x = (rng.random((tokens, d_model, t_steps)) < q256[:, :, None]).astype(np.uint8)

    for blk in blocks:
        heads = blk["heads"]
        d_k = d_model // heads
        q_sp = reference_linear_lif(blk["w_q"][0], blk["w_q"][1], x)
        k_sp = reference_linear_lif(blk["w_k"][0], blk["w_k"][1], x)
        v_sp = reference_linear_lif(blk["w_v"][0], blk["w_v"][1], x)
        attn = np.zeros_like(x)
        for h in range(heads):
            sl = slice(h * d_k, (h + 1) * d_k)
            for t in range(t_steps):
                # (d_k, n) layout per step
                a = _sample_attention(q_sp[:, sl, t].T, k_sp[:, sl, t].T,
                                      v_sp[:, sl, t].T, rng, causal)
                attn[:, sl, t] = a.T
        u = reference_linear_lif(blk["w_o"][0], blk["w_o"][1], attn, residual=x)
        hid = reference_linear_lif(blk["w_1"][0], blk["w_1"][1], u)
        x = reference_linear_lif(blk["w_2"][0], blk["w_2"][1], hid, residual=u)

    result = {"output_rates": x.mean(axis=2), "class_scores": None}
    if "head" in extras:
        w_head, thr_head = extras["head"]
        head_sp = reference_linear_lif(w_head, thr_head, x)
        per_token = head_sp.mean(axis=2)
        result["class_scores"] = per_token[-1] if causal else per_token.mean(axis=0)
    return result

from __future__ import annotations

import numpy as np


def gae(rewards, values, dones, gamma: float, lam: float, durations=None):
    """Generalised advantage estimation over one decision stream.

    ``values`` carries one extra trailing entry, the bootstrap value of the
    state after the last reward.  ``dones[t]`` cuts the stream after step
    ``t``.  For macro-actions, ``durations[t]`` is the number of ticks step
    ``t`` spanned; the bootstrap and trace are then discounted by
    ``gamma ** durations[t]``.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    if not (len(v) == len(r) + 1 and len(d) == len(r)):
        raise ValueError(f"length mismatch: {len(r)} rewards, {len(v)} values, {len(d)} dones")
    if durations is None:
        disc = np.full(len(r), gamma)
    else:
        k = np.asarray(durations, dtype=np.float64)
        if len(k) != len(r):
            raise ValueError("durations must align with rewards")
        disc = gamma ** k

    adv = np.zeros(len(r))
    running = 0.0
    for t in range(len(r) - 1, -1, -1):
        live = 1.0 - d[t]
        delta = r[t] + disc[t] * v[t + 1] * live - v[t]
        running = delta + disc[t] * lam * live * running
        adv[t] = running
    return adv, adv + v[:-1]


def standardize(advantages) -> np.ndarray:
    """Zero mean, unit variance per batch; constant batches become zeros."""
    a = np.asarray(advantages, dtype=np.float64)
    if a.size < 2:
        return a.copy()
    centred = a - a.mean()
    std = centred.std()
    if std < 1e-12 * max(1.0, float(np.abs(a).max())):
        return np.zeros_like(a)
    out = centred / std
    # second pass removes the residual rounding in mean and scale
    out -= out.mean()
    return out / out.std()

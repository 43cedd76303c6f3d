"""Small actor-critic MLPs in numpy with hand-written backpropagation.

A network is a ReLU trunk followed by ``n_heads`` policy heads and as many
scalar value heads; every sample in a batch selects its head by index.  The
manager uses one head per agent, the shared worker networks a single head.
"""

from __future__ import annotations

import numpy as np


class NonFiniteLoss(FloatingPointError):
    pass


def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    w = q if n_in >= n_out else q.T
    return gain * w[:n_in, :n_out]


class Mlp:
    def __init__(self, n_in: int, hidden: tuple[int, ...], n_actions: int, n_heads: int = 1,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in = n_in
        self.hidden = tuple(hidden)
        self.n_actions = n_actions
        self.n_heads = n_heads
        self.params: dict[str, np.ndarray] = {}
        sizes = (n_in, *hidden)
        for l, (a, b) in enumerate(zip(sizes, sizes[1:])):
            self.params[f"W{l}"] = _orthogonal(rng, a, b, np.sqrt(2.0))
            self.params[f"b{l}"] = np.zeros(b)
        h = sizes[-1]
        self.params["Wpi"] = np.stack([_orthogonal(rng, h, n_actions, 0.01) for _ in range(n_heads)])
        self.params["bpi"] = np.zeros((n_heads, n_actions))
        self.params["Wv"] = np.stack([_orthogonal(rng, h, 1, 1.0)[:, 0] for _ in range(n_heads)])
        self.params["bv"] = np.zeros(n_heads)

    @property
    def n_layers(self) -> int:
        return len(self.hidden)

    def copy(self) -> Mlp:
        new = object.__new__(Mlp)
        new.__dict__.update(self.__dict__)
        new.params = {k: v.copy() for k, v in self.params.items()}
        return new

    def trunk(self, x: np.ndarray) -> list[np.ndarray]:
        acts = [x]
        for l in range(self.n_layers):
            acts.append(np.maximum(acts[-1] @ self.params[f"W{l}"] + self.params[f"b{l}"], 0.0))
        return acts

    def heads_out(self, z: np.ndarray, heads: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        if self.n_heads == 1:
            logits = z @ p["Wpi"][0] + p["bpi"][0]
            values = z @ p["Wv"][0] + p["bv"][0]
        else:
            logits = np.einsum("bi,bia->ba", z, p["Wpi"][heads]) + p["bpi"][heads]
            values = np.einsum("bi,bi->b", z, p["Wv"][heads]) + p["bv"][heads]
        return logits, values


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is not None:
        if not np.all(mask.any(axis=-1)):
            raise ValueError("every row of the action mask needs at least one legal action")
        logits = np.where(mask, logits, -np.inf)
    top = logits.max(axis=-1, keepdims=True)
    shifted = logits - top
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _batch(x, mask, heads):
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if mask is not None:
        mask = np.atleast_2d(np.asarray(mask, dtype=bool))
    if heads is None:
        heads = np.zeros(len(x), dtype=np.int64)
    else:
        heads = np.broadcast_to(np.asarray(heads, dtype=np.int64), (len(x),))
    return x, mask, heads


def forward(net: Mlp, x, mask=None, heads=None) -> tuple[np.ndarray, np.ndarray]:
    """Masked policy probabilities and state values for a batch (or one row)."""
    single = np.ndim(x) == 1
    x, mask, heads = _batch(x, mask, heads)
    if x.shape[1] != net.n_in:
        raise ValueError(f"input width {x.shape[1]} does not match network ({net.n_in})")
    z = net.trunk(x)[-1]
    logits, values = net.heads_out(z, heads)
    probs = np.exp(masked_log_softmax(logits, mask))
    return (probs[0], values[0]) if single else (probs, values)


def loss_and_grads(net: Mlp, x, actions, advantages, returns, mask=None, heads=None,
                   value_coef: float = 0.5, entropy_coef: float = 0.01, with_grads: bool = True):
    """Actor-critic loss over a batch and its exact gradient.

    loss = mean(-log pi(a|s) * A) + value_coef * mean((V - R)^2) - entropy_coef * mean(H)
    """
    x, mask, heads = _batch(x, mask, heads)
    actions = np.asarray(actions, dtype=np.int64)
    adv = np.asarray(advantages, dtype=np.float64)
    ret = np.asarray(returns, dtype=np.float64)
    b = len(x)
    rows = np.arange(b)

    acts = net.trunk(x)
    z = acts[-1]
    logits, values = net.heads_out(z, heads)
    logp = masked_log_softmax(logits, mask)
    probs = np.exp(logp)
    safe_logp = np.where(probs > 0, logp, 0.0)
    entropy = -(probs * safe_logp).sum(axis=1)
    chosen = logp[rows, actions]
    if not np.all(np.isfinite(chosen)):
        raise NonFiniteLoss("an action in the batch has zero probability under its mask")

    policy_loss = float(-(chosen * adv).mean())
    value_loss = float(((values - ret) ** 2).mean())
    ent = float(entropy.mean())
    total = policy_loss + value_coef * value_loss - entropy_coef * ent
    if not np.isfinite(total):
        raise NonFiniteLoss(f"loss is not finite: {total}")
    terms = {"loss": total, "policy_loss": policy_loss, "value_loss": value_loss, "entropy": ent}
    if not with_grads:
        return terms, None

    # d/dlogits of -logp[a] * A is (p - onehot) * A; of -H it is p * (logp + H)
    g_logits = probs * adv[:, None]
    g_logits[rows, actions] -= adv
    g_logits += entropy_coef * probs * (safe_logp + entropy[:, None])
    g_logits /= b
    g_values = 2.0 * value_coef * (values - ret) / b

    p = net.params
    grads = {k: np.zeros_like(v) for k, v in p.items()}
    if net.n_heads == 1:
        grads["Wpi"][0] = z.T @ g_logits
        grads["bpi"][0] = g_logits.sum(axis=0)
        grads["Wv"][0] = z.T @ g_values
        grads["bv"][0] = g_values.sum()
        g_z = g_logits @ p["Wpi"][0].T + np.outer(g_values, p["Wv"][0])
    else:
        np.add.at(grads["Wpi"], heads, z[:, :, None] * g_logits[:, None, :])
        np.add.at(grads["bpi"], heads, g_logits)
        np.add.at(grads["Wv"], heads, z * g_values[:, None])
        np.add.at(grads["bv"], heads, g_values)
        g_z = np.einsum("ba,bia->bi", g_logits, p["Wpi"][heads]) + g_values[:, None] * p["Wv"][heads]

    g = g_z
    for l in reversed(range(net.n_layers)):
        g = g * (acts[l + 1] > 0)
        grads[f"W{l}"] = acts[l].T @ g
        grads[f"b{l}"] = g.sum(axis=0)
        g = g @ p[f"W{l}"].T
    return terms, grads


def backward(net: Mlp, x, actions, advantages, returns, mask=None, heads=None,
             value_coef: float = 0.5, entropy_coef: float = 0.01) -> dict[str, np.ndarray]:
    return loss_and_grads(net, x, actions, advantages, returns, mask, heads,
                          value_coef, entropy_coef)[1]


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float = 3e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8, max_grad_norm: float | None = 0.5):
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> float:
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
        scale = 1.0
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            scale = self.max_grad_norm / (norm + 1e-12)
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, g in grads.items():
            g = g * scale
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
        return norm

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}.m.{k}": v for k, v in self.m.items()}
        out.update({f"{prefix}.v.{k}": v for k, v in self.v.items()})
        out[f"{prefix}.t"] = np.array(self.t)
        return out

    def load_arrays(self, prefix: str, arrays) -> None:
        for k in self.m:
            self.m[k] = np.array(arrays[f"{prefix}.m.{k}"])
            self.v[k] = np.array(arrays[f"{prefix}.v.{k}"])
        self.t = int(arrays[f"{prefix}.t"])

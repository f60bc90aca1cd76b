"""Minimal neural-network engine: dense stacks, a recurrent sequence
encoder, Gaussian policy heads, and exact analytic gradients.

All modules keep their parameters in a ``params`` dict of named numpy
arrays (updated in place by :class:`Adam`), cache what forward needs for
backward, and expose ``backward(grad_at_output) -> grads dict``.  Nets are
dtype-parameterized: the pipeline runs float32 (the checkpoint format's
dtype), gradient-check tests instantiate float64 copies of the same
shapes.
"""

from __future__ import annotations

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


# ---------------------------------------------------------------------------
# activations


def _elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_grad(pre, post):
    return np.where(pre > 0, 1.0, post + 1.0)


def _tanh(x):
    return np.tanh(x)


def _tanh_grad(pre, post):
    return 1.0 - post * post


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(pre, post):
    return (pre > 0).astype(pre.dtype)


ACTIVATIONS = {"elu": (_elu, _elu_grad), "tanh": (_tanh, _tanh_grad), "relu": (_relu, _relu_grad)}


def sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0, e) / (1.0 + e)


def orthogonal(rng: np.random.Generator, shape, gain: float, dtype) -> np.ndarray:
    """Orthogonal init with deterministic sign convention."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    d = np.sign(np.diag(r))
    d[d == 0] = 1.0
    q = q * d
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols], dtype=dtype)


class DenseNet:
    """Affine+activation stack with a linear output head."""

    def __init__(self, in_dim, hidden_dims, out_dim, activation="elu",
                 out_gain=1.0, dtype=np.float32, seed=0):
        self.dims = [int(in_dim)] + [int(d) for d in hidden_dims] + [int(out_dim)]
        self.activation = activation
        self.act, self.act_grad = ACTIVATIONS[activation]
        self.dtype = np.dtype(dtype)
        rng = np.random.Generator(np.random.PCG64(seed))
        self.params = {}
        n_layers = len(self.dims) - 1
        for i in range(n_layers):
            gain = out_gain if i == n_layers - 1 else np.sqrt(2.0)
            self.params[f"w{i}"] = orthogonal(rng, (self.dims[i], self.dims[i + 1]), gain, self.dtype)
            self.params[f"b{i}"] = np.zeros(self.dims[i + 1], dtype=self.dtype)
        self._cache = None

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def forward(self, x: np.ndarray) -> np.ndarray:
        """x: (B, in) or (in,); caches activations for backward."""
        squeeze = x.ndim == 1
        h = np.atleast_2d(np.asarray(x, dtype=self.dtype))
        if h.shape[1] != self.in_dim:
            raise ValueError(f"input dim {h.shape[1]} != expected {self.in_dim}")
        if not np.all(np.isfinite(h)):
            raise FloatingPointError("non-finite network input")
        inputs, pres, posts = [], [], []
        n_layers = len(self.dims) - 1
        for i in range(n_layers):
            inputs.append(h)
            z = h @ self.params[f"w{i}"] + self.params[f"b{i}"]
            if i < n_layers - 1:
                pres.append(z)
                h = self.act(z)
                posts.append(h)
            else:
                h = z
        self._cache = (inputs, pres, posts)
        return h[0] if squeeze else h

    def __call__(self, x):
        return self.forward(x)

    def backward(self, dout: np.ndarray, return_dx: bool = False):
        """Gradients of a scalar loss given its gradient at the output."""
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        inputs, pres, posts = self._cache
        d = np.atleast_2d(np.asarray(dout, dtype=self.dtype))
        grads = {}
        n_layers = len(self.dims) - 1
        for i in range(n_layers - 1, -1, -1):
            grads[f"w{i}"] = inputs[i].T @ d
            grads[f"b{i}"] = d.sum(axis=0)
            d = d @ self.params[f"w{i}"].T
            if i > 0:
                d = d * self.act_grad(pres[i - 1], posts[i - 1])
        return (grads, d) if return_dx else grads

    def copy_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}

    def set_params(self, params: dict):
        for k, v in params.items():
            np.copyto(self.params[k], v)


class RecurrentEncoder:
    """Stacked recurrent net over (B, S, D) windows; sigmoid head on the
    final hidden state.

    Cell types: "gru" (default) or "simple" (tanh).  Step-by-step
    processing from a zero hidden state equals whole-window processing.
    """

    def __init__(self, in_dim, hidden_dims, out_dim=4, cell="gru",
                 dtype=np.float32, seed=0):
        if cell not in ("gru", "simple"):
            raise ValueError(f"unknown recurrent cell {cell!r}")
        self.in_dim = int(in_dim)
        self.hidden_dims = [int(d) for d in hidden_dims]
        self.out_dim = int(out_dim)
        self.cell = cell
        self.dtype = np.dtype(dtype)
        rng = np.random.Generator(np.random.PCG64(seed))
        self.params = {}
        gates = ("z", "r", "n") if cell == "gru" else ("h",)
        prev = self.in_dim
        for l, h in enumerate(self.hidden_dims):
            for g in gates:
                self.params[f"l{l}_w{g}"] = orthogonal(rng, (prev, h), 1.0, self.dtype)
                self.params[f"l{l}_u{g}"] = orthogonal(rng, (h, h), 1.0, self.dtype)
                self.params[f"l{l}_b{g}"] = np.zeros(h, dtype=self.dtype)
            prev = h
        self.params["head_w"] = orthogonal(rng, (prev, self.out_dim), 1.0, self.dtype)
        self.params["head_b"] = np.zeros(self.out_dim, dtype=self.dtype)
        self._cache = None

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_hidden(self, batch: int) -> list:
        return [np.zeros((batch, h), dtype=self.dtype) for h in self.hidden_dims]

    def _gate_blocks(self, l):
        """Fused [x;h] weight blocks for the z/r gates (built per call so
        the canonical per-gate parameters stay the update targets)."""
        p = self.params
        wzr = np.concatenate(
            [np.concatenate([p[f"l{l}_wz"], p[f"l{l}_wr"]], axis=1),
             np.concatenate([p[f"l{l}_uz"], p[f"l{l}_ur"]], axis=1)], axis=0)
        bzr = np.concatenate([p[f"l{l}_bz"], p[f"l{l}_br"]])
        return wzr, bzr

    def _step_layer(self, l, x, h, gate_blocks=None):
        p = self.params
        if self.cell == "simple":
            pre = x @ p[f"l{l}_wh"] + h @ p[f"l{l}_uh"] + p[f"l{l}_bh"]
            new_h = np.tanh(pre)
            return new_h, (x, h, new_h)
        wzr, bzr = gate_blocks if gate_blocks is not None else self._gate_blocks(l)
        width = h.shape[1]
        zr = sigmoid(np.concatenate([x, h], axis=1) @ wzr + bzr)
        z, r = zr[:, :width], zr[:, width:]
        hr = r * h
        n = np.tanh(x @ p[f"l{l}_wn"] + hr @ p[f"l{l}_un"] + p[f"l{l}_bn"])
        new_h = (1.0 - z) * n + z * h
        return new_h, (x, h, z, r, n, hr)

    def step(self, x: np.ndarray, hidden: list):
        """One recurrence step; returns (top hidden, new hidden list)."""
        h_in = np.asarray(x, dtype=self.dtype)
        new_hidden = []
        for l in range(len(self.hidden_dims)):
            h_out, _ = self._step_layer(l, h_in, hidden[l])
            new_hidden.append(h_out)
            h_in = h_out
        return h_in, new_hidden

    def head(self, top_hidden: np.ndarray) -> np.ndarray:
        logits = top_hidden @ self.params["head_w"] + self.params["head_b"]
        return sigmoid(logits)

    def forward_logits(self, windows: np.ndarray) -> np.ndarray:
        """windows: (B, S, D) or (S, D); returns head logits, caching for
        backward-through-time."""
        squeeze = windows.ndim == 2
        seq = np.asarray(windows, dtype=self.dtype)
        if squeeze:
            seq = seq[None]
        batch, steps, dim = seq.shape
        if dim != self.in_dim:
            raise ValueError(f"feature dim {dim} != expected {self.in_dim}")
        hidden = self.zero_hidden(batch)
        n_layers = len(self.hidden_dims)
        blocks = [self._gate_blocks(l) for l in range(n_layers)] if self.cell == "gru" else \
            [None] * n_layers
        caches = []
        for t in range(steps):
            x = seq[:, t, :]
            step_cache = []
            for l in range(n_layers):
                h_out, c = self._step_layer(l, x, hidden[l], blocks[l])
                step_cache.append(c)
                hidden[l] = h_out
                x = h_out
            caches.append(step_cache)
        logits = hidden[-1] @ self.params["head_w"] + self.params["head_b"]
        self._cache = (caches, hidden[-1], steps, batch)
        return logits[0] if squeeze else logits

    def forward(self, windows: np.ndarray) -> np.ndarray:
        """Per-leg fault probabilities in (0, 1) for each window."""
        return sigmoid(self.forward_logits(windows))

    def __call__(self, windows):
        return self.forward(windows)

    def _backward_layer(self, l, cache, dh):
        """Backprop one cell step; returns (dh_prev, dx, grad updates)."""
        p = self.params
        g = {}
        if self.cell == "simple":
            x, h_prev, new_h = cache
            da = dh * (1.0 - new_h * new_h)
            g[f"l{l}_wh"] = x.T @ da
            g[f"l{l}_uh"] = h_prev.T @ da
            g[f"l{l}_bh"] = da.sum(axis=0)
            return da @ p[f"l{l}_uh"].T, da @ p[f"l{l}_wh"].T, g
        x, h_prev, z, r, n, hr = cache
        dn = dh * (1.0 - z)
        dz = dh * (h_prev - n)
        dh_prev = dh * z
        da_n = dn * (1.0 - n * n)
        g[f"l{l}_wn"] = x.T @ da_n
        g[f"l{l}_un"] = hr.T @ da_n
        g[f"l{l}_bn"] = da_n.sum(axis=0)
        dhr = da_n @ p[f"l{l}_un"].T
        dh_prev = dh_prev + dhr * r
        dr = dhr * h_prev
        da_r = dr * r * (1.0 - r)
        g[f"l{l}_wr"] = x.T @ da_r
        g[f"l{l}_ur"] = h_prev.T @ da_r
        g[f"l{l}_br"] = da_r.sum(axis=0)
        dh_prev = dh_prev + da_r @ p[f"l{l}_ur"].T
        da_z = dz * z * (1.0 - z)
        g[f"l{l}_wz"] = x.T @ da_z
        g[f"l{l}_uz"] = h_prev.T @ da_z
        g[f"l{l}_bz"] = da_z.sum(axis=0)
        dh_prev = dh_prev + da_z @ p[f"l{l}_uz"].T
        dx = da_n @ p[f"l{l}_wn"].T + da_r @ p[f"l{l}_wr"].T + da_z @ p[f"l{l}_wz"].T
        return dh_prev, dx, g

    def backward(self, dlogits: np.ndarray) -> dict:
        """Backprop-through-time from the head-logit gradient."""
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        caches, last_hidden, steps, batch = self._cache
        d = np.atleast_2d(np.asarray(dlogits, dtype=self.dtype))
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        grads["head_w"] = last_hidden.T @ d
        grads["head_b"] = d.sum(axis=0)
        n_layers = len(self.hidden_dims)
        dh_carry = [np.zeros((batch, h), dtype=self.dtype) for h in self.hidden_dims]
        dh_carry[-1] = d @ self.params["head_w"].T
        for t in range(steps - 1, -1, -1):
            dx_above = None
            for l in range(n_layers - 1, -1, -1):
                dh = dh_carry[l] if dx_above is None else dh_carry[l] + dx_above
                dh_prev, dx, g = self._backward_layer(l, caches[t][l], dh)
                for k, v in g.items():
                    grads[k] += v
                dh_carry[l] = dh_prev
                dx_above = dx
        return grads

    def copy_params(self) -> dict:
        return {k: v.copy() for k, v in self.params.items()}

    def set_params(self, params: dict):
        for k, v in params.items():
            np.copyto(self.params[k], v)


def encoder_infer(encoder: RecurrentEncoder, obs_window: np.ndarray) -> np.ndarray:
    """Per-leg fault probability estimate for one (S, D) window."""
    return encoder.forward(obs_window)


# ---------------------------------------------------------------------------
# Gaussian policy head (state-independent log-std)


def gaussian_sample(mean, log_std, rng: np.random.Generator):
    std = np.exp(log_std)
    return mean + std * rng.standard_normal(mean.shape).astype(mean.dtype)


def gaussian_log_prob(mean, log_std, actions):
    """Log-density of diagonal-Gaussian actions; sums over action dims."""
    std = np.exp(log_std)
    zscore = (actions - mean) / std
    per_dim = -0.5 * (zscore * zscore + LOG_2PI) - log_std
    return per_dim.sum(axis=-1)

def gaussian_entropy(log_std):
    """Sum over dims of log(sigma) + 0.5*log(2*pi*e)."""
    return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))


def gaussian_log_prob_grads(mean, log_std, actions, dlogp):
    """Grads of sum(dlogp * logp) wrt mean and log_std."""
    inv_var = np.exp(-2.0 * log_std)
    diff = actions - mean
    dmean = dlogp[:, None] * diff * inv_var
    dlog_std = (dlogp[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0)
    return dmean, dlog_std


# ---------------------------------------------------------------------------
# binary cross-entropy (per-bit labels)


def bce_with_logits(logits, targets):
    """Mean per-bit cross-entropy, numerically stable."""
    l, t = np.asarray(logits, dtype=np.float64), np.asarray(targets, dtype=np.float64)
    loss = np.maximum(l, 0.0) - l * t + np.log1p(np.exp(-np.abs(l)))
    return float(loss.mean())


def bce_grad(logits, targets):
    """Gradient of bce_with_logits wrt logits."""
    p = sigmoid(np.asarray(logits))
    return (p - np.asarray(targets, dtype=p.dtype)) / p.size


# ---------------------------------------------------------------------------
# optimization


def global_grad_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(np.asarray(g, dtype=np.float64) ** 2))
    return float(np.sqrt(total))


class Adam:
    """Adaptive-moment optimizer with global gradient-norm clipping."""

    def __init__(self, params: dict, lr=3e-4, betas=(0.9, 0.999), eps=1e-8,
                 max_grad_norm=1.0):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict):
        scale = 1.0
        if self.max_grad_norm is not None:
            norm = global_grad_norm(grads)
            if norm > self.max_grad_norm:
                scale = self.max_grad_norm / (norm + 1e-12)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            p = self.params[k]
            g = np.asarray(g, dtype=p.dtype) * p.dtype.type(scale)
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


def merge_params(**named: dict) -> dict:
    """Flatten {"actor": {...}} into {"actor/w0": arr} sharing storage."""
    out = {}
    for prefix, params in named.items():
        for k, v in params.items():
            out[f"{prefix}/{k}"] = v
    return out


def split_params(flat: dict) -> dict:
    out: dict = {}
    for key, v in flat.items():
        prefix, _, name = key.partition("/")
        out.setdefault(prefix, {})[name] = v
    return out

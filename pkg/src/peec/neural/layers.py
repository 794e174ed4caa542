"""Dense layers, an LSTM cell, a Gaussian position head, and Adam."""

from __future__ import annotations

import copy
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor, _record, _sigmoid


class Module:
    """Holds named parameters; children are discovered from attributes."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_parameters(prefix + key + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(np.sum([p.data.size for p in self.parameters()]))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def clone(self):
        return copy.deepcopy(self)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(f"load {name}", p.shape, arr.shape)
            p.data = arr.copy()

    def soft_update_from(self, source: "Module", tau: float) -> None:
        """``self <- tau * source + (1 - tau) * self``."""
        for (_, mine), (_, theirs) in zip(self.named_parameters(), source.named_parameters()):
            if tau == 1.0:
                mine.data = theirs.data.copy()
            else:
                mine.data = tau * theirs.data + (1.0 - tau) * mine.data


def _uniform(rng: np.random.Generator, fan_in: int, shape: tuple) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Dense(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, scale: float = 1.0):
        self.n_in, self.n_out = n_in, n_out
        self.W = Tensor(scale * _uniform(rng, n_in, (n_in, n_out)), requires_grad=True)
        self.b = Tensor(scale * _uniform(rng, n_in, (n_out,)), requires_grad=True)

    def __call__(self, x) -> Tensor:
        x = T.as_tensor(x)
        if x.shape[-1] != self.n_in:
            raise ShapeError("dense", x.shape, self.W.shape)
        if x.data.ndim == 2:
            return T.linear(x, self.W, self.b)
        return T.add(T.matmul(x, self.W), self.b)

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        """Untracked forward for inference."""
        return x @ self.W.data + self.b.data


class LSTMCell(Module):
    """Standard LSTM; gate blocks in ``W``/``b`` are ordered input, forget,
    output, candidate. The forget bias starts at +1."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        self.n_in, self.hidden = n_in, hidden
        fan = n_in + hidden
        self.W = Tensor(_uniform(rng, fan, (fan, 4 * hidden)), requires_grad=True)
        b = _uniform(rng, fan, (4 * hidden,))
        b[hidden : 2 * hidden] = 1.0
        self.b = Tensor(b, requires_grad=True)

    def zero_state(self, batch: int) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros((batch, self.hidden)), np.zeros((batch, self.hidden))

    def step(self, x, state) -> tuple[Tensor, tuple[Tensor, Tensor]]:
        """One step built from primitive ops (fully differentiable)."""
        x = T.as_tensor(x)
        if x.shape[-1] != self.n_in:
            raise ShapeError("lstm step", x.shape, (self.n_in,))
        h, c = T.as_tensor(state[0]), T.as_tensor(state[1])
        H = self.hidden
        z = T.add(T.matmul(T.concat([x, h], axis=-1), self.W), self.b)
        i = T.logistic(T.take(z, 0, H))
        f = T.logistic(T.take(z, H, 2 * H))
        o = T.logistic(T.take(z, 2 * H, 3 * H))
        g = T.tanh(T.take(z, 3 * H, 4 * H))
        c_new = T.add(T.mul(f, c), T.mul(i, g))
        h_new = T.mul(o, T.tanh(c_new))
        return h_new, (h_new, c_new)

    def step_np(self, x: np.ndarray, h: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Untracked single step for inference; same arithmetic as :meth:`unroll`."""
        H, W = self.hidden, self.W.data
        z = x @ W[: self.n_in] + self.b.data + h @ W[self.n_in :]
        s = _sigmoid(z[:, : 3 * H])
        g = np.tanh(z[:, 3 * H :])
        c = s[:, H : 2 * H] * c + s[:, :H] * g
        h = s[:, 2 * H : 3 * H] * np.tanh(c)
        return h, c

    def unroll(self, xs, state) -> tuple[Tensor, tuple[np.ndarray, np.ndarray]]:
        """Run over ``xs`` of shape ``(L, B, n_in)`` as a single tape node.

        Returns the hidden sequence ``(L, B, hidden)`` and the final
        ``(h, c)`` as plain arrays. Gradients flow to ``xs``, ``W``, ``b``
        and, when given as tensors, to the initial state.
        """
        xs = T.as_tensor(xs)
        if xs.data.ndim != 3 or xs.shape[-1] != self.n_in:
            raise ShapeError("lstm unroll", xs.shape, (None, None, self.n_in))
        h0, c0 = T.as_tensor(state[0]), T.as_tensor(state[1])
        L, B, _ = xs.shape
        H, n_in = self.hidden, self.n_in
        W, b = self.W.data, self.b.data
        Wh = W[n_in:]
        # input projections for every step in one matmul
        Zx = (xs.data.reshape(L * B, n_in) @ W[:n_in] + b).reshape(L, B, 4 * H)
        hs = np.empty((L, B, H))
        hprev = np.empty((L, B, H))
        cprev = np.empty((L, B, H))
        gates = np.empty((L, B, 4 * H))
        tcs = np.empty((L, B, H))
        h, c = h0.data, c0.data
        for t in range(L):
            hprev[t] = h
            cprev[t] = c
            z = Zx[t] + h @ Wh
            gt = gates[t]
            gt[:, : 3 * H] = _sigmoid(z[:, : 3 * H])
            gt[:, 3 * H :] = np.tanh(z[:, 3 * H :])
            c = gt[:, H : 2 * H] * c + gt[:, :H] * gt[:, 3 * H :]
            tc = np.tanh(c)
            tcs[t] = tc
            h = gt[:, 2 * H : 3 * H] * tc
            hs[t] = h

        def fn(dH):
            dZ = np.empty((L, B, 4 * H))
            dh_next = np.zeros((B, H))
            dc_next = np.zeros((B, H))
            i_, f_, o_, g_ = (gates[..., k * H : (k + 1) * H] for k in range(4))
            for t in range(L - 1, -1, -1):
                i, f, o, g, tc = i_[t], f_[t], o_[t], g_[t], tcs[t]
                dh = dH[t] + dh_next
                dc = dh * o * (1.0 - tc * tc) + dc_next
                dz = dZ[t]
                dz[:, :H] = dc * g * i * (1.0 - i)
                dz[:, H : 2 * H] = dc * cprev[t] * f * (1.0 - f)
                dz[:, 2 * H : 3 * H] = dh * tc * o * (1.0 - o)
                dz[:, 3 * H :] = dc * i * (1.0 - g * g)
                dh_next = dz @ Wh.T
                dc_next = dc * f
            flat = dZ.reshape(L * B, 4 * H)
            dW = np.concatenate(
                [xs.data.reshape(L * B, n_in).T @ flat, hprev.reshape(L * B, H).T @ flat], axis=0
            )
            db = flat.sum(axis=0)
            dxs = (flat @ W[:n_in].T).reshape(L, B, n_in)
            return dxs, dW, db, dh_next, dc_next

        out = _record(hs, (xs, self.W, self.b, h0, c0), fn)
        return out, (h, c)


class GaussianHead(Module):
    """Maps features to a 2-D mean and a scalar ``sigma = softplus(raw) + 1e-6``."""

    def __init__(self, n_in: int, rng: np.random.Generator):
        self.mean = Dense(n_in, 2, rng)
        self.raw_sigma = Dense(n_in, 1, rng)

    def __call__(self, x) -> tuple[Tensor, Tensor]:
        mu = self.mean(x)
        sigma = T.add(T.softplus(self.raw_sigma(x)), 1e-6)
        return mu, sigma


def gaussian_nll(mu: Tensor, sigma: Tensor, target, eps: float = 1e-6) -> Tensor:
    """Mean over rows of ``|target - mu| / (2 sigma + eps) + log(sigma + eps) / 2``.

    ``mu``: (B, 2); ``sigma``: (B, 1); ``target``: (B, 2).
    """
    diff = T.sub(T.as_tensor(target), mu)
    # tiny offset keeps the norm differentiable at zero error
    err = T.sqrt(T.add(T.sum(T.square(diff), axis=-1), 1e-18))
    s = T.reshape(sigma, (sigma.shape[0],))
    per = T.add(T.div(err, T.add(T.mul(s, 2.0), eps)), T.mul(T.log(T.add(s, eps)), 0.5))
    return T.mean(per)


class Adam:
    """Adam with bias-corrected moments (lr 3e-4, betas 0.9/0.999, eps 1e-8)."""

    def __init__(self, params: list[Tensor], lr: float = 3e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self, grads: list[np.ndarray | None] | None = None) -> None:
        if grads is None:
            grads = [p.grad for p in self.params]
        if len(grads) != len(self.params):
            raise ValueError(f"adam: {len(grads)} gradients for {len(self.params)} parameters")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1.0 - b1**self.t, 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.shape:
                raise ShapeError("adam", p.shape, g.shape)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state(self) -> dict[str, np.ndarray]:
        out = {f"m.{i}": m for i, m in enumerate(self.m)}
        out.update({f"v.{i}": v for i, v in enumerate(self.v)})
        return out

    def load_state(self, arrays: dict[str, np.ndarray], t: int) -> None:
        self.m = [np.asarray(arrays[f"m.{i}"], dtype=np.float64).copy() for i in range(len(self.params))]
        self.v = [np.asarray(arrays[f"v.{i}"], dtype=np.float64).copy() for i in range(len(self.params))]
        self.t = int(t)


def adam_update(params: list[Tensor], grads: list[np.ndarray], state: Adam) -> list[Tensor]:
    state.step(grads)
    return params

"""Minimal feed-forward approximator with exact reverse-mode gradients,
an adaptive-moment optimizer, and the shared experience buffer.

Everything is float64 numpy; the heavy lifting (layered matmuls, backward
pass, optimizer step) goes through the selected kernel backend.
"""

from __future__ import annotations

import numpy as np

from . import backend, serialization


class Mlp:
    """Fully connected net: ReLU hidden layers, linear or tanh output.

    ``sizes`` lists every layer width, input first.  Weights use uniform
    fan-in scaling; ``final_scale`` shrinks the last layer (actors start
    near zero so the initial actions sit mid-range).
    """

    def __init__(self, sizes, out_act: str = "linear",
                 rng: np.random.Generator | None = None,
                 final_scale: float = 1.0):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if out_act not in ("linear", "tanh"):
            raise ValueError("out_act must be 'linear' or 'tanh'")
        self.sizes = list(sizes)
        self.out_act = out_act
        self.ws: list[np.ndarray] = []
        self.bs: list[np.ndarray] = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            if rng is None:
                w = np.zeros((fan_in, fan_out))
                b = np.zeros(fan_out)
            else:
                w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
                b = rng.uniform(-bound, bound, size=fan_out)
            if i == len(sizes) - 2 and final_scale != 1.0:
                w *= final_scale
                b *= final_scale
            self.ws.append(w)
            self.bs.append(b)

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def _as_batch(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return x[None, :], True
        return x, False

    def forward(self, x: np.ndarray) -> np.ndarray:
        acts = self.forward_cached(x)
        return acts[-1]

    def forward_cached(self, x: np.ndarray) -> list[np.ndarray]:
        """Activations [input, h1, ..., output]; single inputs stay 1-D."""
        xb, squeeze = self._as_batch(x)
        if xb.shape[1] != self.in_dim:
            raise ValueError(f"input width {xb.shape[1]} != {self.in_dim}")
        acts = backend.kernels().mlp_forward(
            self.ws, self.bs, np.ascontiguousarray(xb), self.out_act == "tanh")
        if squeeze:
            acts = [a[0] for a in acts]
        return acts

    def gradients(self, x: np.ndarray, upstream: np.ndarray):
        """Gradients of sum(output * upstream) w.r.t. parameters and input.

        Returns (dws, dbs, dx) with shapes mirroring ws/bs/x.
        """
        xb, squeeze = self._as_batch(x)
        ub, _ = self._as_batch(upstream)
        if ub.shape != (xb.shape[0], self.out_dim):
            raise ValueError("upstream shape does not match the output")
        acts = backend.kernels().mlp_forward(
            self.ws, self.bs, np.ascontiguousarray(xb), self.out_act == "tanh")
        return self.backward(acts, ub, squeeze_dx=squeeze)

    def backward(self, acts: list[np.ndarray], upstream: np.ndarray,
                 squeeze_dx: bool = False):
        """Backward pass from cached (batched) activations."""
        dws, dbs, dx = backend.kernels().mlp_backward(
            self.ws, acts, np.ascontiguousarray(upstream, dtype=np.float64),
            self.out_act == "tanh")
        if squeeze_dx:
            dx = dx[0]
        return dws, dbs, dx

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.ws, self.bs):
            out.append(w)
            out.append(b)
        return out

    def copy_from(self, other: "Mlp") -> None:
        for dst, src in zip(self.parameters(), other.parameters()):
            np.copyto(dst, src)

    def clone(self) -> "Mlp":
        twin = Mlp(self.sizes, out_act=self.out_act)
        twin.copy_from(self)
        return twin


class Adam:
    """Bias-corrected adaptive-moment optimizer over an Mlp's parameters."""

    def __init__(self, net: Mlp, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.parameters()]
        self.v = [np.zeros_like(p) for p in net.parameters()]

    def step(self, net: Mlp, dws, dbs) -> None:
        grads = []
        for dw, db in zip(dws, dbs):
            grads.append(dw)
            grads.append(db)
        self.t += 1
        kern = backend.kernels()
        for p, g, m, v in zip(net.parameters(), grads, self.m, self.v):
            kern.adam_update(p.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                             m.reshape(-1), v.reshape(-1), self.t,
                             self.lr, self.beta1, self.beta2, self.eps)


class ReplayBuffer:
    """Ring buffer of (s, a, r, s') with uniform without-replacement batches."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int,
                 rng: np.random.Generator):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.rng = rng
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.cursor = 0
        self.size = 0

    def push(self, s, a, r, s2) -> None:
        i = self.cursor
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s2[i] = s2
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int):
        """(s, a, r, s') copies for a uniform batch; raises when under-filled."""
        if batch_size > self.size:
            raise ValueError(f"buffer holds {self.size} < batch {batch_size}")
        idx = self.rng.choice(self.size, size=batch_size, replace=False)
        return (self.s[idx].copy(), self.a[idx].copy(),
                self.r[idx].copy(), self.s2[idx].copy())


# ---------------------------------------------------------------------------
# checkpoints

def save_mlp(net: Mlp, opt: Adam | None, path, extra_meta: dict | None = None) -> None:
    meta = {"kind": "mlp-checkpoint", "out_act": net.out_act,
            "sizes": " ".join(str(s) for s in net.sizes)}
    arrays = {}
    for i, (w, b) in enumerate(zip(net.ws, net.bs)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    if opt is not None:
        meta.update({"opt.lr": opt.lr, "opt.beta1": opt.beta1,
                     "opt.beta2": opt.beta2, "opt.eps": opt.eps, "opt.t": opt.t})
        for i, (m, v) in enumerate(zip(opt.m, opt.v)):
            arrays[f"opt.m{i}"] = m
            arrays[f"opt.v{i}"] = v
    if extra_meta:
        meta.update(extra_meta)
    serialization.save_archive(path, meta, arrays)


def load_mlp(path) -> tuple[Mlp, Adam | None, dict]:
    meta, arrays = serialization.load_archive(path)
    if meta.get("kind") != "mlp-checkpoint":
        raise ValueError(f"{path}: not an mlp checkpoint")
    sizes = [int(s) for s in meta["sizes"].split()]
    net = Mlp(sizes, out_act=meta["out_act"])
    for i in range(len(net.ws)):
        net.ws[i] = arrays[f"w{i}"].copy()
        net.bs[i] = arrays[f"b{i}"].copy()
    opt = None
    if "opt.lr" in meta:
        opt = Adam(net, lr=meta["opt.lr"], beta1=meta["opt.beta1"],
                   beta2=meta["opt.beta2"], eps=meta["opt.eps"])
        opt.t = meta["opt.t"]
        opt.m = [arrays[f"opt.m{i}"].copy() for i in range(len(opt.m))]
        opt.v = [arrays[f"opt.v{i}"].copy() for i in range(len(opt.v))]
    leftover = {k: v for k, v in meta.items()
                if k not in ("kind", "out_act", "sizes") and not k.startswith("opt.")}
    return net, opt, leftover

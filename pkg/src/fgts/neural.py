"""Dense networks on a small reverse-mode autodiff core.

Everything is float64 numpy.  ``Tensor`` records the operations applied to it
and ``Tensor.backward`` propagates gradients of a scalar through the recorded
graph.  Networks are built from ``MLP`` blocks whose layout is described by an
``MLPSpec``; ``PairCritic`` wires three MLPs into the two-branch discriminator
used for pairs ``(history, target)``.
"""

from dataclasses import asdict, dataclass, field

import numpy as np


class Tensor:
    """An array node in a differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    @staticmethod
    def _node(data, parents, backward):
        req = any(p.requires_grad for p in parents)
        return Tensor(data, req, parents if req else (), backward if req else None)

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.data.shape))

        return Tensor._node(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def backward(g):
            a._accumulate(-g)

        return Tensor._node(-a.data, (a,), backward)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._node(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self, other

        def backward(g):
            if a.requires_grad:
                a._accumulate(g @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ g)

        return Tensor._node(a.data @ b.data, (a, b), backward)

    # -- elementwise ------------------------------------------------------
    def relu(self):
        a = self
        mask = a.data > 0  # subgradient 0 at exactly 0

        def backward(g):
            a._accumulate(g * mask)

        return Tensor._node(a.data * mask, (a,), backward)

    def exp(self):
        a = self
        out = np.exp(a.data)

        def backward(g):
            a._accumulate(g * out)

        return Tensor._node(out, (a,), backward)

    def tanh(self):
        a = self
        out = np.tanh(a.data)

        def backward(g):
            a._accumulate(g * (1.0 - out * out))

        return Tensor._node(out, (a,), backward)

    def square(self):
        a = self

        def backward(g):
            a._accumulate(2.0 * g * a.data)

        return Tensor._node(a.data * a.data, (a,), backward)

    def clamp_min(self, floor):
        a = self
        mask = a.data >= floor

        def backward(g):
            a._accumulate(g * mask)

        return Tensor._node(np.where(mask, a.data, floor), (a,), backward)

    # -- reductions -------------------------------------------------------
    def sum(self):
        a = self

        def backward(g):
            a._accumulate(np.broadcast_to(g, a.data.shape))

        return Tensor._node(np.sum(a.data), (a,), backward)

    def mean(self):
        a = self
        n = a.data.size

        def backward(g):
            a._accumulate(np.broadcast_to(g / n, a.data.shape))

        return Tensor._node(np.mean(a.data), (a,), backward)

    def weighted_mean(self, weights):
        """``sum(w * x) / sum(w)`` over a vector or (B, 1) column."""
        w = np.asarray(weights, dtype=np.float64).reshape(self.data.shape)
        return (self * (w / w.sum())).sum()

    # -- graph ------------------------------------------------------------
    def backward(self):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every leaf that requires it."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        return self


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    g = g.sum(axis=tuple(range(g.ndim - len(shape)))) if g.ndim > len(shape) else g
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    return g.sum(axis=axes, keepdims=True) if axes else g


def concat(tensors, axis=-1):
    """Concatenate tensors along ``axis`` (differentiable)."""
    ts = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.data.shape[axis] for t in ts])[:-1]

    def backward(g):
        for t, piece in zip(ts, np.split(g, sizes, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    return Tensor._node(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), backward)


def grad(loss, params):
    """Gradients of scalar ``loss`` w.r.t. each tensor in ``params`` (a name -> Tensor dict)."""
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise ValueError("grad() needs a scalar Tensor loss")
    for p in params.values():
        p.grad = None
    loss.backward()
    return {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}


# ---------------------------------------------------------------------------
# networks


@dataclass(frozen=True)
class MLPSpec:
    """Layer layout of a dense ReLU network.

    ``layer_dims`` lists representation sizes from input to output.  A noise
    vector of size ``noise_dim`` is concatenated to the representation at
    position ``concat_noise_at`` (0 = the raw input), and likewise a lag code
    of size ``lag_dim`` at ``concat_lag_at``.  Hidden layers use ReLU; the
    output uses ``output_activation`` ("identity" or "relu").
    """

    layer_dims: tuple
    noise_dim: int = 0
    concat_noise_at: int = None
    lag_dim: int = 0
    concat_lag_at: int = None
    output_activation: str = "identity"

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2 or any(d < 1 for d in dims):
            raise ValueError(f"layer_dims must list >= 2 positive sizes, got {dims}")
        for at, size, what in ((self.concat_noise_at, self.noise_dim, "noise"),
                               (self.concat_lag_at, self.lag_dim, "lag")):
            if at is None:
                if size:
                    raise ValueError(f"{what}_dim given without concat_{what}_at")
            elif not 0 <= at < len(dims) - 1 or size < 1:
                raise ValueError(f"concat_{what}_at={at} out of range for {len(dims) - 1} layers")
        if self.output_activation not in ("identity", "relu"):
            raise ValueError(f"unknown output activation {self.output_activation!r}")

    @property
    def n_layers(self):
        return len(self.layer_dims) - 1

    def fan_in(self, i):
        extra = self.noise_dim if self.concat_noise_at == i else 0
        extra += self.lag_dim if self.concat_lag_at == i else 0
        return self.layer_dims[i] + extra

    def to_dict(self):
        d = asdict(self)
        d["layer_dims"] = list(self.layer_dims)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{**d, "layer_dims": tuple(d["layer_dims"])})


class MLP:
    """Dense network with parameters ``W{i}`` of shape (fan_in, out) and ``b{i}``."""

    def __init__(self, spec, params, rng_seed_used=0):
        self.spec = spec
        self.rng_seed_used = int(rng_seed_used)
        self.params = {}
        for i in range(spec.n_layers):
            W = np.asarray(params[f"W{i}"], dtype=np.float64)
            b = np.asarray(params[f"b{i}"], dtype=np.float64)
            want = (spec.fan_in(i), spec.layer_dims[i + 1])
            if W.shape != want or b.shape != (want[1],):
                raise ValueError(f"layer {i}: expected W{want} b({want[1]},), got {W.shape} {b.shape}")
            self.params[f"W{i}"] = Tensor(W.copy(), requires_grad=True)
            self.params[f"b{i}"] = Tensor(b.copy(), requires_grad=True)

    @property
    def input_dim(self):
        return self.spec.layer_dims[0]

    @property
    def output_dim(self):
        return self.spec.layer_dims[-1]

    def parameters(self):
        return self.params

    def arrays(self):
        return {k: p.data for k, p in self.params.items()}

    def copy(self):
        return MLP(self.spec, self.arrays(), self.rng_seed_used)

    def _check(self, x, noise, lag_code):
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"input has {x.shape[-1]} features, expected {self.input_dim}")
        for arr, at, size, what in ((noise, self.spec.concat_noise_at, self.spec.noise_dim, "noise"),
                                    (lag_code, self.spec.concat_lag_at, self.spec.lag_dim, "lag_code")):
            if at is None and arr is not None:
                raise ValueError(f"{what} given but the network has no {what} input")
            if at is not None:
                if arr is None:
                    raise ValueError(f"{what} of dim {size} is required")
                if arr.shape[-1] != size:
                    raise ValueError(f"{what} has dim {arr.shape[-1]}, expected {size}")

    def forward(self, inputs, noise=None, lag_code=None):
        """Differentiable forward pass on a (batch, input_dim) Tensor or array."""
        h = as_tensor(inputs)
        noise = None if noise is None else as_tensor(noise)
        lag_code = None if lag_code is None else as_tensor(lag_code)
        self._check(h.data, None if noise is None else noise.data, None if lag_code is None else lag_code.data)
        last = self.spec.n_layers - 1
        for i in range(self.spec.n_layers):
            extras = []
            if self.spec.concat_noise_at == i:
                extras.append(noise)
            if self.spec.concat_lag_at == i:
                extras.append(lag_code)
            if extras:
                h = concat([h, *extras])
            h = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if i < last or self.spec.output_activation == "relu":
                h = h.relu()
        return h

    __call__ = forward

    def predict(self, inputs, noise=None, lag_code=None):
        """Graph-free forward pass returning a numpy array."""
        h = np.asarray(inputs, dtype=np.float64)
        self._check(h, noise, lag_code)
        last = self.spec.n_layers - 1
        for i in range(self.spec.n_layers):
            extras = []
            if self.spec.concat_noise_at == i:
                extras.append(np.broadcast_to(noise, h.shape[:-1] + (self.spec.noise_dim,)))
            if self.spec.concat_lag_at == i:
                extras.append(np.broadcast_to(lag_code, h.shape[:-1] + (self.spec.lag_dim,)))
            if extras:
                h = np.concatenate([h, *extras], axis=-1)
            h = h @ self.params[f"W{i}"].data + self.params[f"b{i}"].data
            if i < last or self.spec.output_activation == "relu":
                h = np.maximum(h, 0.0)
        return h


def init_network(spec, seed):
    """He-uniform weights for ReLU layers, ``U(+-sqrt(1/fan_in))`` for a linear output; zero biases."""
    rng = np.random.default_rng(int(seed))
    params = {}
    for i in range(spec.n_layers):
        fan_in = spec.fan_in(i)
        relu_after = i < spec.n_layers - 1 or spec.output_activation == "relu"
        bound = np.sqrt((6.0 if relu_after else 1.0) / fan_in)
        params[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, spec.layer_dims[i + 1]))
        params[f"b{i}"] = np.zeros(spec.layer_dims[i + 1])
    return MLP(spec, params, rng_seed_used=seed)


class PairCritic:
    """Two-branch discriminator ``h(history, target)``.

    The history (k frames, flattened and concatenated) goes through
    fc+ReLU -> fc, the target through fc+ReLU, and the concatenated
    embeddings through fc+ReLU -> fc to a scalar score.
    """

    def __init__(self, history, target, head):
        self.history = history
        self.target = target
        self.head = head
        self.params = {f"{name}.{k}": p for name, net in self.branches().items()
                       for k, p in net.params.items()}

    def branches(self):
        return {"history": self.history, "target": self.target, "head": self.head}

    @classmethod
    def build(cls, history_dim, target_dim, seed, width=64, lag_dim=0):
        from ._rng import derive_seed

        specs = cls.specs(history_dim, target_dim, width, lag_dim)
        nets = [init_network(spec, derive_seed(seed, i)) for i, spec in enumerate(specs)]
        return cls(*nets)

    @staticmethod
    def specs(history_dim, target_dim, width=64, lag_dim=0):
        return (
            MLPSpec((history_dim, width, width)),
            MLPSpec((target_dim, width), output_activation="relu"),
            MLPSpec((2 * width, width, 1), lag_dim=lag_dim, concat_lag_at=0 if lag_dim else None),
        )

    def parameters(self):
        return self.params

    def arrays(self):
        return {k: p.data for k, p in self.params.items()}

    def forward(self, history, target, lag_code=None):
        z = concat([self.history(history), self.target(target)])
        return self.head(z, lag_code=lag_code)

    __call__ = forward

    def predict(self, history, target, lag_code=None):
        z = np.concatenate([self.history.predict(history), self.target.predict(target)], axis=-1)
        return self.head.predict(z, lag_code=lag_code)


# ---------------------------------------------------------------------------
# optimisation


@dataclass
class OptimizerState:
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def optimizer_step(state, params, grads):
    """One AdamW update applied in place to the arrays in ``params``.

    Weight decay is decoupled: ``w <- w (1 - lr wd)`` before the adaptive step.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter block {name!r}")
    state.step_count += 1
    t = state.step_count
    lr, b1, b2 = state.learning_rate, state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, w in params.items():
        g = grads[name]
        if w.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {w.shape} for {name!r}")
        m = state.m.setdefault(name, np.zeros_like(w))
        v = state.v.setdefault(name, np.zeros_like(w))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay:
            w *= 1.0 - lr * state.weight_decay
        w -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


class AdamW:
    """AdamW bound to a network's parameter tensors."""

    def __init__(self, params, lr=1e-4, weight_decay=1e-4, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.state = OptimizerState(lr, weight_decay, betas[0], betas[1], eps)

    def step(self, grads, maximize=False):
        if maximize:
            grads = {k: -g for k, g in grads.items()}
        optimizer_step(self.state, {k: p.data for k, p in self.params.items()}, grads)

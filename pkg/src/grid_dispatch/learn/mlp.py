"""
Multilayer perceptron for grid-dispatch

Batched numpy MLP with cached forward pass and reverse-mode gradients, plus an
Adam optimizer over its parameter list. Rows are samples; a layer computes
z = x @ W.T + b with W of shape (n_out, n_in).
"""

from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..utils.logger import get_logger

logger = get_logger(__name__)

ACTIVATIONS = ("relu", "identity")


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_grad(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, 0.0)


class Mlp:
    """Fully connected network with rectifier hidden layers and a linear output"""

    def __init__(self,
                 sizes: Sequence[int],
                 rng: Optional[np.random.Generator] = None,
                 activations: Optional[Sequence[str]] = None,
                 use_bias: bool = True):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ValueError(f"Invalid layer sizes {sizes}")

        n_layers = len(sizes) - 1
        if activations is None:
            activations = ["relu"] * (n_layers - 1) + ["identity"]
        activations = list(activations)
        if len(activations) != n_layers or any(a not in ACTIVATIONS for a in activations):
            raise ValueError(f"Need {n_layers} activations from {ACTIVATIONS}, got {activations}")

        self.sizes = sizes
        self.activations = activations
        self.use_bias = use_bias

        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for n_in, n_out in zip(sizes[:-1], sizes[1:]):
            # uniform fan-in scaling
            bound = 1.0 / np.sqrt(n_in)
            self.weights.append(rng.uniform(-bound, bound, size=(n_out, n_in)))
            self.biases.append(np.zeros(n_out))

        self._cache: Optional[List[Tuple[np.ndarray, np.ndarray]]] = None

    @property
    def n_in(self) -> int:
        return self.sizes[0]

    @property
    def n_out(self) -> int:
        return self.sizes[-1]

    @property
    def params(self) -> List[np.ndarray]:
        """Parameter arrays in [W0, b0, W1, b1, ...] order"""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Evaluate on a (batch, n_in) array or a single vector; caches for backward"""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        a = x.reshape(1, -1) if single else x
        if a.shape[1] != self.n_in:
            raise ValueError(f"Expected input width {self.n_in}, got {a.shape[1]}")

        cache = []
        for w, b, act in zip(self.weights, self.biases, self.activations):
            z = a @ w.T
            if self.use_bias:
                z = z + b
            cache.append((a, z))
            a = relu(z) if act == "relu" else z

        self._cache = cache
        return a[0] if single else a

    __call__ = forward

    def backward(self, grad_out: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """Gradients of sum(grad_out * output) w.r.t. params and input, for the last forward"""
        if self._cache is None:
            raise RuntimeError("backward() called before forward()")

        grad = np.asarray(grad_out, dtype=float)
        single = grad.ndim == 1
        if single:
            grad = grad.reshape(1, -1)
        if grad.shape != (self._cache[-1][1].shape[0], self.n_out):
            raise ValueError(f"Upstream gradient shape {grad.shape} does not match last output")

        grads: List[np.ndarray] = []
        for w, act, (a_in, z) in zip(reversed(self.weights),
                                     reversed(self.activations),
                                     reversed(self._cache)):
            dz = grad * relu_grad(z) if act == "relu" else grad
            db = dz.sum(axis=0) if self.use_bias else np.zeros(w.shape[0])
            grads.extend([db, dz.T @ a_in])
            grad = dz @ w

        grads.reverse()
        return grads, (grad[0] if single else grad)

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_flat(self, flat: np.ndarray):
        flat = np.asarray(flat, dtype=float)
        expected = sum(p.size for p in self.params)
        if flat.shape != (expected,):
            raise ValueError(f"Expected {expected} parameters, got shape {flat.shape}")

        pos = 0
        for p in self.params:
            p[...] = flat[pos:pos + p.size].reshape(p.shape)
            pos += p.size

    def copy(self) -> "Mlp":
        clone = Mlp(self.sizes, activations=self.activations, use_bias=self.use_bias)
        clone.set_flat(self.get_flat())
        return clone

    def soft_update(self, source: "Mlp", tau: float):
        """Move parameters towards source: p <- (1 - tau) p + tau p_source"""
        if source.sizes != self.sizes:
            raise ValueError("Soft update between networks of different shapes")
        for p, q in zip(self.params, source.params):
            p[...] = (1.0 - tau) * p + tau * q

    def perturbed(self, std: float, rng: np.random.Generator) -> "Mlp":
        """Copy with Gaussian noise added to every parameter"""
        clone = self.copy()
        for p in clone.params:
            p += rng.normal(0.0, std, size=p.shape)
        return clone

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sizes": list(self.sizes),
            "activations": list(self.activations),
            "params": [p.ravel().tolist() for p in self.params],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Mlp":
        net = cls(data["sizes"], activations=data["activations"])
        params = data["params"]
        if len(params) != len(net.params):
            raise ValueError("Parameter list length does not match layer sizes")
        for p, values in zip(net.params, params):
            values = np.asarray(values, dtype=float)
            if values.size != p.size:
                raise ValueError(f"Parameter block of size {values.size} where {p.size} expected")
            p[...] = values.reshape(p.shape)
        return net


class Adam:
    """Adaptive-moment optimizer updating a fixed list of arrays in place"""

    def __init__(self,
                 params: Sequence[np.ndarray],
                 lr: float = 1e-3,
                 betas: Tuple[float, float] = (0.9, 0.999),
                 eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads: Sequence[np.ndarray]):
        """Descend along grads (minimization)"""
        if len(grads) != len(self.params):
            raise ValueError(f"Expected {len(self.params)} gradients, got {len(grads)}")

        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

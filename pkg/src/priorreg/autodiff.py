"""MLP evaluation with exact input jets and parameter gradients.

The forward pass carries truncated Taylor coefficients (value, first and
second directional derivative) for every requested input direction through
the network.  Parameter gradients of a scalar loss built from those jets are
then obtained by reverse accumulation over the same augmented pass, so loss
terms that contain ``u_t``, ``u_x`` or ``u_xx`` get exact weight gradients
without a general autodiff graph.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import _kernels
from .errors import ContractError, DivergedError, DomainError, ShapeError

ACTIVATIONS = ("tanh",)


@dataclass
class MlpParams:
    """Weights of a fully connected network.

    ``weights[k]`` has shape ``(out_dim, in_dim)``.  The activation is applied
    after every layer except the last, which is affine.
    """

    weights: list
    biases: list
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("need one bias per weight matrix and at least one layer")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ShapeError(f"layer {k}: weight {w.shape} / bias {b.shape} mismatch")
            if k and w.shape[1] != self.weights[k - 1].shape[0]:
                raise ShapeError(f"layer {k} input {w.shape[1]} != previous output {self.weights[k - 1].shape[0]}")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [w.shape[0] for w in self.weights]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flat(self) -> np.ndarray:
        """Copy of all trainable scalars, layer by layer (W then b)."""
        return np.concatenate([a.ravel() for w, b in zip(self.weights, self.biases) for a in (w, b)])

    @classmethod
    def from_flat(cls, flat, layer_sizes, activation="tanh", copy=True):
        """Inverse of :meth:`flat`.  With ``copy=False`` the arrays are views."""
        flat = np.asarray(flat, dtype=np.float64)
        if copy:
            flat = flat.copy()
        weights, biases = _split_flat(flat, layer_sizes)
        if sum(w.size + b.size for w, b in zip(weights, biases)) != flat.size:
            raise ShapeError("flat vector length does not match layer sizes")
        return cls(weights, biases, activation)

    def is_finite(self) -> bool:
        return all(np.isfinite(w).all() and np.isfinite(b).all() for w, b in zip(self.weights, self.biases))

    def sq_norm(self) -> float:
        return float(sum(np.vdot(w, w) + np.vdot(b, b) for w, b in zip(self.weights, self.biases)))


@dataclass
class ParamGradient:
    """Gradient with the same layout as :class:`MlpParams`."""

    weights: list
    biases: list

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for w, b in zip(self.weights, self.biases) for a in (w, b)])


def _split_flat(flat, layer_sizes):
    weights, biases, pos = [], [], 0
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(flat[pos : pos + n_in * n_out].reshape(n_out, n_in))
        pos += n_in * n_out
        biases.append(flat[pos : pos + n_out])
        pos += n_out
    return weights, biases


def n_params_for(layer_sizes) -> int:
    return sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))


def init_mlp(layer_sizes: Sequence[int], seed: int = 0, activation: str = "tanh") -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    flat = np.zeros(n_params_for(layer_sizes))
    weights, _ = _split_flat(flat, list(layer_sizes))
    for w in weights:
        limit = math.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return MlpParams.from_flat(flat, list(layer_sizes), activation, copy=False)


@dataclass
class Jet2:
    """Network value and directional derivatives at one or many points.

    For a single point ``value`` has shape ``(output_dim,)``; for a batch of
    ``N`` points every array has shape ``(N, output_dim)``.
    """

    value: np.ndarray
    d1: dict = field(default_factory=dict)
    d2: dict = field(default_factory=dict)
    renormalized: tuple = ()


# ---------------------------------------------------------------------------
# stacked forward / backward
# ---------------------------------------------------------------------------


def _normalize_dirs(dirs, input_dim):
    if isinstance(dirs, Mapping):
        dirs = list(dirs.items())
    labels, vecs, renorm = [], [], []
    for label, vec in dirs:
        vec = np.asarray(vec, dtype=np.float64).reshape(-1)
        if vec.shape != (input_dim,):
            raise ShapeError(f"direction {label!r} has length {vec.size}, expected {input_dim}")
        norm = float(np.linalg.norm(vec))
        if norm == 0.0 or not math.isfinite(norm):
            raise DomainError(f"direction {label!r} has zero or non-finite norm")
        if abs(norm - 1.0) > 1e-12:
            vec = vec / norm
            renorm.append(label)
        labels.append(label)
        vecs.append(vec)
    if len(set(labels)) != len(labels):
        raise ContractError("duplicate direction labels")
    return labels, vecs, tuple(renorm)


def _ordered_dirs(labels, vecs, second):
    """Put second-order directions first; returns (labels, (K, in) array, k2)."""
    second = [s for s in labels if s in set(second)]
    order = second + [s for s in labels if s not in set(second)]
    by_label = dict(zip(labels, vecs))
    if not order:
        return order, np.zeros((0, len(vecs[0]) if vecs else 0)), 0
    return order, np.array([by_label[s] for s in order]), len(second)


def _forward(params, x, dmat, k2):
    n, k = x.shape[0], dmat.shape[0]
    h = np.zeros((n * (1 + k + k2), x.shape[1]))
    h[:n] = x
    for d in range(k):
        h[n + d * n : n + (d + 1) * n] = dmat[d]
    cache = []
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w.T
        z[:n] += b
        if layer == last:
            cache.append((h, None, None))
            return z, cache
        a, s = _kernels.tanh_jet_forward(z, n, k, k2)
        cache.append((h, z, s))
        h = a


def _backward(params, cache, g, n, k, k2, gweights, gbiases):
    """Accumulate parameter gradients for output cotangent ``g`` (stacked)."""
    for layer in range(len(params.weights) - 1, -1, -1):
        h_in = cache[layer][0]
        gweights[layer] += g.T @ h_in
        gbiases[layer] += g[:n].sum(axis=0)
        if layer:
            gh = g @ params.weights[layer]
            _, z, s = cache[layer - 1]
            g = _kernels.tanh_jet_backward(gh, z, s, n, k, k2)


def _as_batch(params, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x.reshape(1, -1) if single else x
    if x2.ndim != 2 or x2.shape[1] != params.input_dim:
        raise ShapeError(f"input has shape {x.shape}, network expects last dim {params.input_dim}")
    return x2, single


def mlp_forward(params: MlpParams, x) -> np.ndarray:
    """Evaluate the network at ``x`` of shape ``(input_dim,)`` or ``(N, input_dim)``."""
    x2, single = _as_batch(params, x)
    h = x2
    last = len(params.weights) - 1
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if layer != last:
            h = np.tanh(h)
    return h[0] if single else h


def mlp_jet(params: MlpParams, x, dirs, order: int = 2, second=None) -> Jet2:
    """Value plus directional derivatives of the network at ``x``.

    ``dirs`` is a mapping or sequence of ``(label, vector)``.  With ``order=2``
    second derivatives are returned for every direction unless ``second``
    restricts them to a subset of labels.  Non-unit directions are
    normalized, reported in ``Jet2.renormalized`` and warned about.
    """
    if order not in (1, 2):
        raise ContractError("order must be 1 or 2")
    x2, single = _as_batch(params, x)
    if np.isnan(x2).any():
        raise DomainError("NaN in network input")
    labels, vecs, renorm = _normalize_dirs(dirs, params.input_dim)
    if renorm:
        warnings.warn(f"directions {renorm} were not unit length and have been normalized", stacklevel=2)
    if order == 1:
        second = ()
    elif second is None:
        second = labels
    else:
        unknown = set(second) - set(labels)
        if unknown:
            raise ContractError(f"second-order labels {sorted(unknown)} are not among the directions")
    order_labels, dmat, k2 = _ordered_dirs(labels, vecs, second)
    out, _ = _forward(params, x2, dmat, k2)
    jet = _unstack(out, x2.shape[0], order_labels, k2, 0, x2.shape[0])
    jet.renormalized = renorm
    if single:
        jet = Jet2(jet.value[0], {a: v[0] for a, v in jet.d1.items()}, {a: v[0] for a, v in jet.d2.items()}, renorm)
    return jet


def _unstack(out, n, labels, k2, lo, hi):
    k = len(labels)
    d1 = {lab: out[n + d * n + lo : n + d * n + hi] for d, lab in enumerate(labels)}
    d2 = {labels[d]: out[n + k * n + d * n + lo : n + k * n + d * n + hi] for d in range(k2)}
    return Jet2(out[lo:hi], d1, d2)


# ---------------------------------------------------------------------------
# loss programs
# ---------------------------------------------------------------------------


@dataclass
class LossTerm:
    """One scalar summand of a loss program.

    ``reduce(jet)`` receives the batched :class:`Jet2` of the network at
    ``points`` and returns ``(value, cotangent)`` where ``cotangent`` is a
    :class:`Jet2` holding d(value)/d(jet entry) for every entry the value
    depends on (missing entries are treated as zero).  The term contributes
    ``weight * value`` to the loss.
    """

    name: str
    points: np.ndarray
    reduce: Callable
    dirs: tuple = ()
    second: tuple = ()
    weight: float = 1.0


def _group_key(term):
    return (tuple((lab, tuple(np.asarray(v, dtype=float).ravel())) for lab, v in term.dirs), tuple(term.second))


def loss_grad(params: MlpParams, terms: Sequence[LossTerm], parts: dict | None = None, out=None):
    """Loss value and its exact gradient with respect to every parameter.

    Terms sharing the same direction set are evaluated in one stacked pass.
    If ``parts`` is a dict it receives each term's unweighted value.  ``out``
    may be a preallocated flat buffer of length ``params.n_params`` that
    receives the gradient.
    """
    sizes = params.layer_sizes
    gflat = np.zeros(n_params_for(sizes)) if out is None else out
    if out is not None:
        gflat[:] = 0.0
    gweights, gbiases = _split_flat(gflat, sizes)

    groups: dict = {}
    for term in terms:
        groups.setdefault(_group_key(term), []).append(term)

    total = 0.0
    for members in groups.values():
        first = members[0]
        labels, vecs, _ = _normalize_dirs(first.dirs, params.input_dim)
        order_labels, dmat, k2 = _ordered_dirs(labels, vecs, first.second)
        pts = [np.asarray(t.points, dtype=np.float64).reshape(-1, params.input_dim) for t in members]
        x = pts[0] if len(pts) == 1 else np.concatenate(pts)
        n, k = x.shape[0], len(order_labels)
        stacked, cache = _forward(params, x, dmat, k2)
        gout = np.zeros_like(stacked)
        lo = 0
        for term, p in zip(members, pts):
            hi = lo + p.shape[0]
            jet = _unstack(stacked, n, order_labels, k2, lo, hi)
            value, cot = term.reduce(jet)
            value = float(value)
            if not math.isfinite(value):
                raise DivergedError(f"loss term {term.name!r} is not finite ({value})", term=term.name)
            if parts is not None:
                parts[term.name] = value
            total += term.weight * value
            _scatter(gout, cot, term.weight, n, order_labels, k2, lo, hi)
            lo = hi
        _backward(params, cache, gout, n, k, k2, gweights, gbiases)

    if not math.isfinite(total):
        raise DivergedError(f"total loss is not finite ({total})", term="total")
    return total, ParamGradient(gweights, gbiases)


def _scatter(gout, cot, weight, n, labels, k2, lo, hi):
    if cot.value is not None:
        gout[lo:hi] += weight * np.asarray(cot.value).reshape(hi - lo, -1)
    k = len(labels)
    for d, lab in enumerate(labels):
        if lab in cot.d1:
            gout[n + d * n + lo : n + d * n + hi] += weight * np.asarray(cot.d1[lab]).reshape(hi - lo, -1)
        if d < k2 and lab in cot.d2:
            gout[n + k * n + d * n + lo : n + k * n + d * n + hi] += weight * np.asarray(cot.d2[lab]).reshape(hi - lo, -1)
    missing = (set(cot.d1) | set(cot.d2)) - set(labels)
    if missing:
        raise ContractError(f"cotangent references directions {sorted(missing)} that were not evaluated")
    extra2 = set(cot.d2) - set(labels[:k2])
    if extra2:
        raise ContractError(f"cotangent references second derivatives {sorted(extra2)} that were not evaluated")


def squared_error_term(name, points, targets, weight=1.0) -> LossTerm:
    """Mean squared error between the network and ``targets`` at ``points``."""
    targets = np.asarray(targets, dtype=np.float64)

    def reduce(jet):
        r = jet.value - targets.reshape(jet.value.shape)
        return float(np.mean(r * r)), Jet2(2.0 * r / r.size)

    return LossTerm(name, points, reduce, weight=weight)

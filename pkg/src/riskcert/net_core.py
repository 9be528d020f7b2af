"""Budgeted convolutional networks: construction, evaluation and statistics.

A network is an ordered stack of layers.  Affine layers are either dense
(``W x + b``) or convolutional (stride-1 filter bank realised as an induced
sparse matrix plus bias); each is followed by a ReLU or identity activation.
Max-pooling layers carry no parameters.  Every affine layer owns a norm
budget ``a`` constraining ``||W||_F + ||b||_F`` (dense) or
``||C||_F + ||b||_F`` (conv).

Inputs that are 2-D images are flattened row-major before entering a network.
Index sets are 0-based.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

KINDS = ("dense", "conv", "maxpool")
ACTIVATIONS = ("relu", "identity")
FORMAT_NAME = "riskcert-network"
FORMAT_VERSION = 1


class DimensionError(ValueError):
    """Raised when layer or input dimensions do not chain."""


# ---------------------------------------------------------------------------
# Filter banks and induced matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FilterBank:
    """``r`` filters of size ``s``, each applied at ``m`` index sets."""

    weights: np.ndarray  # r x s
    index_sets: np.ndarray  # m x s, integer positions into the layer input

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weights, dtype=np.float64))
        idx = np.atleast_2d(np.asarray(self.index_sets, dtype=np.int64))
        if w.shape[1] != idx.shape[1]:
            raise DimensionError(
                f"filter size {w.shape[1]} does not match index-set width {idx.shape[1]}"
            )
        if len({tuple(row) for row in idx.tolist()}) != idx.shape[0]:
            raise ValueError("index sets must be distinct")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "index_sets", idx)

    @property
    def r(self) -> int:
        return self.weights.shape[0]

    @property
    def s(self) -> int:
        return self.weights.shape[1]

    @property
    def m(self) -> int:
        return self.index_sets.shape[0]

    @property
    def d_out(self) -> int:
        return self.r * self.m


def sliding_index_sets(input_shape, filter_shape) -> np.ndarray:
    """Index sets of a stride-1 sliding window over a row-major flattened input.

    ``input_shape`` and ``filter_shape`` are ints (1-D) or pairs (2-D).  Window
    positions are enumerated row-major from the top-left corner; inside a
    window the filter entries are also taken row-major.
    """
    if np.isscalar(input_shape):
        input_shape, filter_shape = (1, int(input_shape)), (1, int(filter_shape))
    (h, w), (fh, fw) = input_shape, filter_shape
    if fh > h or fw > w:
        raise DimensionError("filter larger than input")
    sets = []
    for i in range(h - fh + 1):
        for j in range(w - fw + 1):
            sets.append([(i + u) * w + (j + v) for u in range(fh) for v in range(fw)])
    return np.asarray(sets, dtype=np.int64)


def _check_index_range(index_sets: np.ndarray, d_in: int) -> None:
    if index_sets.size and (index_sets.min() < 0 or index_sets.max() >= d_in):
        raise DimensionError(f"index sets reference positions outside [0, {d_in})")


def induce_weight_matrix(fb: FilterBank, d_in: int) -> np.ndarray:
    """Dense ``(r*m) x d_in`` matrix whose row ``i*m + j`` holds filter ``i`` at ``S_j``."""
    _check_index_range(fb.index_sets, d_in)
    W = np.zeros((fb.d_out, d_in))
    rows = np.arange(fb.d_out).repeat(fb.s)
    cols = np.tile(fb.index_sets, (fb.r, 1)).ravel()
    vals = np.repeat(fb.weights, fb.m, axis=0).ravel()
    np.add.at(W, (rows, cols), vals)
    return W


def conv_apply(weights: np.ndarray, index_sets: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Convolution output for a batch ``x`` of shape (n, d_in) without forming W^c."""
    patches = x[:, index_sets]  # n x m x s
    out = np.einsum("nms,rs->nrm", patches, weights)
    return out.reshape(x.shape[0], -1)


# ---------------------------------------------------------------------------
# Layer descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LayerSpec:
    """Architecture-only description of one layer."""

    kind: str
    d_in: int
    d_out: int
    activation: str = "relu"
    budget: float | None = None
    filters: int | None = None
    index_sets: np.ndarray | None = field(default=None, compare=False)
    pool_sets: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind == "conv":
            idx = np.atleast_2d(np.asarray(self.index_sets, dtype=np.int64))
            object.__setattr__(self, "index_sets", idx)
            _check_index_range(idx, self.d_in)
            if self.filters is None or self.filters * idx.shape[0] != self.d_out:
                raise DimensionError("conv layer needs d_out = filters * len(index_sets)")
        if self.kind == "maxpool":
            sets = tuple(tuple(int(i) for i in s) for s in self.pool_sets or ())
            if any(len(s) == 0 for s in sets):
                raise ValueError("empty pooling index set")
            if len(sets) != self.d_out:
                raise DimensionError("maxpool needs one index set per output")
            if any(i < 0 or i >= self.d_in for s in sets for i in s):
                raise DimensionError("pooling index out of range")
            object.__setattr__(self, "pool_sets", sets)
            object.__setattr__(self, "activation", "identity")
        elif self.budget is not None and self.budget <= 0:
            raise ValueError("budget must be positive")

    @property
    def affine(self) -> bool:
        return self.kind != "maxpool"

    @property
    def lipschitz(self) -> float:
        # ReLU and identity are both 1-Lipschitz.
        return 1.0

    @property
    def m(self) -> int:
        """Operations per filter (conv), 1 for dense, pool multiplicity for maxpool."""
        if self.kind == "conv":
            return int(self.index_sets.shape[0])
        if self.kind == "maxpool":
            return self.pool_multiplicity
        return 1

    @property
    def s(self) -> int:
        return int(self.index_sets.shape[1]) if self.kind == "conv" else 0

    @property
    def pool_multiplicity(self) -> int:
        counts = np.zeros(self.d_in, dtype=int)
        for s in self.pool_sets or ():
            counts[list(s)] += 1
        return int(counts.max()) if counts.size else 0

    @property
    def weight_shape(self) -> tuple[int, int] | None:
        if self.kind == "dense":
            return (self.d_out, self.d_in)
        if self.kind == "conv":
            return (self.filters, self.s)
        return None


def dense(d_in: int, d_out: int, budget: float | None = None, activation: str = "relu") -> LayerSpec:
    return LayerSpec("dense", d_in, d_out, activation, budget)


def conv(d_in: int, index_sets, filters: int, budget: float | None = None,
         activation: str = "relu") -> LayerSpec:
    idx = np.atleast_2d(np.asarray(index_sets, dtype=np.int64))
    return LayerSpec("conv", d_in, filters * idx.shape[0], activation, budget,
                     filters=filters, index_sets=idx)


def maxpool(d_in: int, pool_sets) -> LayerSpec:
    sets = tuple(tuple(s) for s in pool_sets)
    return LayerSpec("maxpool", d_in, len(sets), "identity", pool_sets=sets)


@dataclass(frozen=True)
class Layer:
    spec: LayerSpec
    weight: np.ndarray | None = None
    bias: np.ndarray | None = None

    def __post_init__(self):
        shape = self.spec.weight_shape
        if shape is None:
            return
        w = np.asarray(self.weight, dtype=np.float64).reshape(shape)
        b = np.asarray(self.bias, dtype=np.float64).reshape(self.spec.d_out)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    def norm(self) -> float:
        """``||W||_F + ||b||_F`` (``||C||_F + ||b||_F`` for conv)."""
        if self.weight is None:
            return 0.0
        return float(np.linalg.norm(self.weight) + np.linalg.norm(self.bias))

    def matrix(self) -> np.ndarray:
        """The affine layer's weight matrix acting on the flattened input."""
        if self.spec.kind == "dense":
            return self.weight
        if self.spec.kind == "conv":
            return induce_weight_matrix(FilterBank(self.weight, self.spec.index_sets),
                                        self.spec.d_in)
        raise TypeError("maxpool layers have no weight matrix")


class Network:
    """Immutable stack of instantiated layers."""

    def __init__(self, layers: Sequence[Layer]):
        layers = tuple(layers)
        for prev, nxt in zip(layers, layers[1:]):
            if prev.spec.d_out != nxt.spec.d_in:
                raise DimensionError(
                    f"layer dims do not chain: {prev.spec.d_out} -> {nxt.spec.d_in}"
                )
        self._layers = layers

    @property
    def layers(self) -> tuple[Layer, ...]:
        return self._layers

    @property
    def specs(self) -> list[LayerSpec]:
        return [l.spec for l in self._layers]

    @property
    def d_in(self) -> int:
        return self._layers[0].spec.d_in

    @property
    def d_out(self) -> int:
        return self._layers[-1].spec.d_out

    @property
    def depth(self) -> int:
        """Number of affine layers."""
        return sum(1 for l in self._layers if l.spec.affine)

    @property
    def width(self) -> int:
        return max([self.d_in] + [l.spec.d_out for l in self._layers])

    @property
    def size(self) -> int:
        return param_count(self.specs)

    def parameters(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Copies of ``(weight, bias)`` for every affine layer, in order."""
        return [(l.weight.copy(), l.bias.copy()) for l in self._layers if l.spec.affine]

    def with_parameters(self, params) -> "Network":
        it = iter(params)
        new = []
        for l in self._layers:
            if l.spec.affine:
                w, b = next(it)
                new.append(Layer(l.spec, w, b))
            else:
                new.append(l)
        return Network(new)

    def satisfies_budgets(self, tol: float = 1e-12) -> bool:
        return all(
            l.spec.budget is None or l.norm() <= l.spec.budget + tol
            for l in self._layers if l.spec.affine
        )

    def __call__(self, x):
        return forward(self, x)

    def __repr__(self):
        kinds = ",".join(l.spec.kind for l in self._layers)
        return f"Network(d_in={self.d_in}, layers=[{kinds}], S={self.size})"


def init_network(specs: Sequence[LayerSpec], rng: np.random.Generator,
                 scale: float = 1.0) -> Network:
    """He-style random initialisation, then projection onto each layer budget."""
    layers = []
    for spec in specs:
        shape = spec.weight_shape
        if shape is None:
            layers.append(Layer(spec))
            continue
        fan_in = spec.d_in if spec.kind == "dense" else spec.s
        w = rng.normal(0.0, scale * math.sqrt(2.0 / fan_in), size=shape)
        b = np.zeros(spec.d_out)
        if spec.budget is not None:
            w, b = project_budget(w, b, spec.budget)
        layers.append(Layer(spec, w, b))
    return Network(layers)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def max_pool(u, pool_sets) -> np.ndarray:
    """Component ``i`` of the output is ``max(u[j] for j in pool_sets[i])``."""
    u = np.asarray(u, dtype=np.float64)
    out = []
    for s in pool_sets:
        s = list(s)
        if not s:
            raise ValueError("empty pooling index set")
        out.append(u[..., s].max(axis=-1))
    return np.stack(out, axis=-1)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    return np.maximum(z, 0.0) if activation == "relu" else z


def layer_preactivation(layer: Layer, h: np.ndarray) -> np.ndarray:
    spec = layer.spec
    if spec.kind == "dense":
        return h @ layer.weight.T + layer.bias
    if spec.kind == "conv":
        return conv_apply(layer.weight, spec.index_sets, h) + layer.bias
    return max_pool(h, spec.pool_sets)


def forward(net: Network, x) -> np.ndarray:
    """Evaluate the network on one input vector or a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != net.d_in:
        raise DimensionError(f"input has dimension {h.shape[1]}, network expects {net.d_in}")
    for layer in net.layers:
        h = _activate(layer_preactivation(layer, h), layer.spec.activation)
    return h[0] if single else h


def forward_cache(net: Network, x: np.ndarray):
    """Batch forward pass keeping every layer input and pre-activation."""
    inputs, pre = [], []
    h = np.asarray(x, dtype=np.float64)
    for layer in net.layers:
        inputs.append(h)
        z = layer_preactivation(layer, h)
        pre.append(z)
        h = _activate(z, layer.spec.activation)
    return h, inputs, pre


# ---------------------------------------------------------------------------
# Architecture statistics
# ---------------------------------------------------------------------------


def _specs_of(spec) -> list[LayerSpec]:
    return spec.specs if isinstance(spec, Network) else list(spec)


def param_count(spec) -> int:
    """Number of parameters: ``(d_in+1) d_out`` per dense layer, ``(s+m) r`` per conv."""
    total = 0
    for l in _specs_of(spec):
        if l.kind == "dense":
            total += (l.d_in + 1) * l.d_out
        elif l.kind == "conv":
            total += (l.s + l.m) * l.filters
    return total


def output_bound(spec, input_bound: float) -> float:
    """Bound ``B_L`` on the network output for inputs with ``||x||_2 <= input_bound``.

    Affine layers follow ``B_l = sqrt(m_l) rho_l a_l (B_{l-1} + 1)`` which unrolls
    to ``B0 prod sqrt(m_i) rho_i a_i + sum_i prod_{j>=i} sqrt(m_j) rho_j a_j``.
    A pooling layer of multiplicity m scales the running bound by ``sqrt(m)``.
    The bound holds for the Euclidean norm of every layer output, hence for the
    sup-norm of the network output.
    """
    B = float(input_bound)
    for l in _specs_of(spec):
        if l.kind == "maxpool":
            B *= math.sqrt(l.pool_multiplicity)
            continue
        if l.budget is None:
            raise ValueError("output_bound needs a budget on every affine layer")
        B = math.sqrt(l.m) * l.lipschitz * l.budget * (B + 1.0)
    return B


def project_budget(weight, bias, a: float):
    """Radially rescale ``(weight, bias)`` so that ``||W||_F + ||b||_F <= a``."""
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    total = np.linalg.norm(weight) + np.linalg.norm(bias)
    if total <= a:
        return weight, bias
    scale = a / total
    return weight * scale, bias * scale


def sample_budget_params(rng: np.random.Generator, weight_shape, d_bias: int, a: float):
    """Uniform draw from ``{(W, b): ||W||_F + ||b||_F <= a}``.

    The radii ``(||W||, ||b||)`` of a uniform point have density proportional to
    ``r1^(p-1) r2^(q-1)`` on the simplex ``r1 + r2 <= a``, i.e. ``(r1, r2)/a`` is
    the leading pair of a Dirichlet(p, q, 1) draw.
    """
    p = int(np.prod(weight_shape))
    q = int(d_bias)
    frac = rng.dirichlet([p, q, 1.0]) if q > 0 else np.array([rng.beta(p, 1.0), 0.0])
    w = rng.normal(size=weight_shape)
    w *= a * frac[0] / np.linalg.norm(w)
    b = np.zeros(q)
    if q:
        b = rng.normal(size=q)
        b *= a * frac[1] / np.linalg.norm(b)
    return w, b


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _spec_to_dict(spec: LayerSpec) -> dict:
    d = {"kind": spec.kind, "d_in": spec.d_in, "d_out": spec.d_out,
         "activation": spec.activation, "budget": spec.budget}
    if spec.kind == "conv":
        d["filters"] = spec.filters
        d["index_sets"] = spec.index_sets.tolist()
    if spec.kind == "maxpool":
        d["pool_sets"] = [list(s) for s in spec.pool_sets]
    return d


def _spec_from_dict(d: dict) -> LayerSpec:
    kind = d["kind"]
    if kind == "dense":
        return dense(d["d_in"], d["d_out"], d.get("budget"), d.get("activation", "relu"))
    if kind == "conv":
        return conv(d["d_in"], d["index_sets"], d["filters"], d.get("budget"),
                    d.get("activation", "relu"))
    if kind == "maxpool":
        return maxpool(d["d_in"], d["pool_sets"])
    raise ValueError(f"unknown layer kind {kind!r}")


def specs_to_list(specs: Sequence[LayerSpec]) -> list[dict]:
    return [_spec_to_dict(s) for s in specs]


def specs_from_list(items) -> list[LayerSpec]:
    return [_spec_from_dict(d) for d in items]


def network_to_dict(net: Network) -> dict:
    layers = []
    for l in net.layers:
        d = _spec_to_dict(l.spec)
        if l.spec.affine:
            d["weight"] = l.weight.ravel().tolist()
            d["bias"] = l.bias.tolist()
        layers.append(d)
    return {"format": FORMAT_NAME, "version": FORMAT_VERSION, "layers": layers}


def network_from_dict(doc: dict) -> Network:
    if doc.get("format") != FORMAT_NAME:
        raise ValueError("not a riskcert network document")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported network format version {doc.get('version')}")
    layers = []
    for d in doc["layers"]:
        spec = _spec_from_dict(d)
        if spec.affine:
            layers.append(Layer(spec, np.array(d["weight"], dtype=np.float64),
                                np.array(d["bias"], dtype=np.float64)))
        else:
            layers.append(Layer(spec))
    return Network(layers)


def dumps_network(net: Network) -> str:
    # json writes floats with repr(), which round-trips finite doubles exactly.
    return json.dumps(network_to_dict(net), indent=1, sort_keys=True)


def loads_network(text: str) -> Network:
    return network_from_dict(json.loads(text))


def save_network(net: Network, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(dumps_network(net))


def load_network(path) -> Network:
    with open(path, encoding="ascii") as fh:
        return loads_network(fh.read())

import hashlib
from collections import namedtuple
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ShapeMismatchError

__all__ = ['ACTIVATIONS', 'NetworkSpec', 'ParamState', 'Mask', 'DualValue',
           'init_network', 'forward_with_time_derivative']

## Each activation returns (value, first derivative, second derivative).
## The residual losses differentiate the network once in time and the
## optimizer differentiates that again, so two derivatives are needed.

def _tanh(z):
    a  = np.tanh(z)
    d1 = 1.0 - a**2
    return a, d1, -2.0 * a * d1

def _sin(z):
    return np.sin(z), np.cos(z), -np.sin(z)

ACTIVATIONS = {'tanh': _tanh, 'sin': _sin}


@dataclass(frozen=True)
class NetworkSpec:
    """
    Topology of a fixed, fully connected network t -> outputs.

    **Attributes**

    input_dim : int
        Number of inputs (1: the scalar time t)

    hidden_dims : tuple of int
        Widths of the hidden layers, e.g. (50, 50). An empty tuple gives a
        single linear layer.

    output_dim : int
        Number of outputs (2 for the nonlinear oscillator, 4 for Henon-Heiles)

    activation : str
        Hidden-layer nonlinearity, one of `ACTIVATIONS` ('tanh' or 'sin').
        The output layer is always linear.
    """
    input_dim: int = 1
    hidden_dims: tuple = (50, 50)
    output_dim: int = 2
    activation: str = 'tanh'

    def __post_init__(self):
        object.__setattr__(self, 'hidden_dims', tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim,) + self.hidden_dims + (self.output_dim,)
        if any(int(d) < 1 for d in dims):
            raise ValueError("all layer dimensions must be >= 1, got {}".format(dims))
        if self.activation not in ACTIVATIONS:
            raise ValueError("unknown activation '{}', choose from {}".format(
                self.activation, sorted(ACTIVATIONS)))

    @property
    def layer_shapes(self):
        """(rows, cols) = (fan_out, fan_in) of every weight matrix"""
        dims = (self.input_dim,) + self.hidden_dims + (self.output_dim,)
        return [(dims[i+1], dims[i]) for i in range(len(dims) - 1)]

    @property
    def n_layers(self):
        return len(self.hidden_dims) + 1

    @property
    def layer_weight_counts(self):
        return [r * c for r, c in self.layer_shapes]

    @property
    def n_weights(self):
        return sum(self.layer_weight_counts)

    @property
    def n_params(self):
        return sum(r * c + r for r, c in self.layer_shapes)

    def to_dict(self):
        result = asdict(self)
        result['hidden_dims'] = list(self.hidden_dims)
        return result

    @staticmethod
    def from_dict(d):
        return NetworkSpec(**d)


class ParamState(object):
    """
    Weights and biases of a network described by a NetworkSpec.

    The flat view orders parameters layer by layer, each layer as its
    row-major weight matrix followed by its bias vector.

    **Attributes**

    spec : NetworkSpec

    weights : list of numpy.ndarray
        One (fan_out, fan_in) float64 matrix per layer

    biases : list of numpy.ndarray
        One (fan_out,) float64 vector per layer
    """
    def __init__(self, spec, weights, biases):
        if len(weights) != spec.n_layers or len(biases) != spec.n_layers:
            raise ShapeMismatchError("expected {} layers, got {} weight and {} bias arrays".format(
                spec.n_layers, len(weights), len(biases)))
        self.spec = spec
        self.weights, self.biases = [], []
        for i, (shape, W, b) in enumerate(zip(spec.layer_shapes, weights, biases)):
            W = np.array(W, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            if W.shape != shape or b.shape != (shape[0],):
                raise ShapeMismatchError("layer {}: expected weights {} and biases {}, got {} and {}".format(
                    i, shape, (shape[0],), W.shape, b.shape))
            self.weights.append(W)
            self.biases.append(b)

    def __len__(self):
        return self.spec.n_params

    def flat(self):
        """The full parameter vector (length p = spec.n_params)"""
        return np.concatenate([np.concatenate([W.ravel(), b])
                               for W, b in zip(self.weights, self.biases)])

    @staticmethod
    def from_flat(spec, vector):
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (spec.n_params,):
            raise ShapeMismatchError("flat vector has shape {}, expected ({},)".format(
                vector.shape, spec.n_params))
        weights, biases, k = [], [], 0
        for r, c in spec.layer_shapes:
            weights.append(vector[k:k + r*c].reshape(r, c))
            k += r * c
            biases.append(vector[k:k + r])
            k += r
        return ParamState(spec, weights, biases)

    def weight_vector(self):
        """All weights, concatenated in mask order"""
        return np.concatenate([W.ravel() for W in self.weights])

    def weight_positions(self):
        """Indices of the weight entries within `flat()`, in mask order"""
        result, k = [], 0
        for r, c in self.spec.layer_shapes:
            result.append(np.arange(k, k + r*c))
            k += r * c + r
        return np.concatenate(result)

    def layer_index(self, offset):
        """
        Map a flat offset to (layer, row, col). Bias entries return
        col = None.
        """
        if not 0 <= offset < self.spec.n_params:
            raise IndexError("offset {} outside [0, {})".format(offset, self.spec.n_params))
        k = 0
        for layer, (r, c) in enumerate(self.spec.layer_shapes):
            if offset < k + r*c:
                row, col = divmod(offset - k, c)
                return layer, row, col
            k += r * c
            if offset < k + r:
                return layer, offset - k, None
            k += r

    def copy(self):
        return ParamState(self.spec, [W.copy() for W in self.weights],
                          [b.copy() for b in self.biases])

    def fingerprint(self):
        """SHA-256 digest of the flat parameter bytes"""
        return hashlib.sha256(self.flat().tobytes()).hexdigest()


class Mask(object):
    """
    Binary pruning mask over the weights of a network (biases are never
    masked). 1 = surviving, 0 = pruned.

    **Attributes**

    spec : NetworkSpec

    bits : numpy.ndarray (uint8)
        One entry per weight, in `ParamState.weight_vector()` order
    """
    def __init__(self, spec, bits):
        bits = np.asarray(bits)
        if bits.shape != (spec.n_weights,):
            raise ShapeMismatchError("mask has shape {}, expected ({},)".format(
                bits.shape, spec.n_weights))
        if not np.all((bits == 0) | (bits == 1)):
            raise ValueError("mask entries must be 0 or 1")
        self.spec = spec
        self.bits = bits.astype(np.uint8)

    @classmethod
    def ones(cls, spec):
        return cls(spec, np.ones(spec.n_weights, dtype=np.uint8))

    @classmethod
    def zeros(cls, spec):
        return cls(spec, np.zeros(spec.n_weights, dtype=np.uint8))

    @classmethod
    def from_layers(cls, spec, layers):
        """Build a mask from one (fan_out, fan_in) array per layer"""
        if len(layers) != spec.n_layers:
            raise ShapeMismatchError("expected {} layer masks, got {}".format(spec.n_layers, len(layers)))
        for i, (shape, m) in enumerate(zip(spec.layer_shapes, layers)):
            if np.shape(m) != shape:
                raise ShapeMismatchError("layer {} mask has shape {}, expected {}".format(
                    i, np.shape(m), shape))
        return cls(spec, np.concatenate([np.asarray(m).ravel() for m in layers]))

    def layer_slice(self, layer):
        counts = self.spec.layer_weight_counts
        start = sum(counts[:layer])
        return slice(start, start + counts[layer])

    def layer(self, layer):
        """The (fan_out, fan_in) bit matrix of one layer"""
        return self.bits[self.layer_slice(layer)].reshape(self.spec.layer_shapes[layer])

    def layers(self):
        return [self.layer(i) for i in range(self.spec.n_layers)]

    def surviving(self, layer=None):
        if layer is None:
            return int(self.bits.sum())
        return int(self.bits[self.layer_slice(layer)].sum())

    def density(self):
        return self.surviving() / self.spec.n_weights

    def is_subset_of(self, other):
        """True if every surviving weight here also survives in `other`"""
        return bool(np.all(self.bits <= other.bits))

    def check(self, params):
        if params.spec != self.spec:
            raise ShapeMismatchError("mask built for {} but parameters follow {}".format(
                self.spec, params.spec))

    def apply(self, params):
        """Masked weight matrices w * m, one per layer"""
        self.check(params)
        return [W * m for W, m in zip(params.weights, self.layers())]

    def copy(self):
        return Mask(self.spec, self.bits.copy())

    def __eq__(self, other):
        return isinstance(other, Mask) and self.spec == other.spec and \
               np.array_equal(self.bits, other.bits)

    def __repr__(self):
        return "Mask(density={:.4f}, surviving={}/{})".format(
            self.density(), self.surviving(), self.spec.n_weights)


@dataclass
class DualValue:
    """
    Forward-mode dual number primal + tangent*eps, vectorised over numpy
    arrays. The tangent is the derivative with respect to the scalar network
    input t.
    """
    primal: np.ndarray
    tangent: np.ndarray

    @classmethod
    def variable(cls, t):
        t = np.asarray(t, dtype=np.float64)
        return cls(t, np.ones_like(t))

    @classmethod
    def constant(cls, c):
        c = np.asarray(c, dtype=np.float64)
        return cls(c, np.zeros_like(c))

    def __add__(self, other):
        if isinstance(other, DualValue):
            return DualValue(self.primal + other.primal, self.tangent + other.tangent)
        return DualValue(self.primal + other, self.tangent)

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, DualValue):
            return DualValue(self.primal * other.primal,
                             self.primal * other.tangent + self.tangent * other.primal)
        return DualValue(self.primal * other, self.tangent * other)

    __rmul__ = __mul__

    def linear(self, W, b):
        """Affine map x @ W.T + b; the bias carries no tangent"""
        return DualValue(self.primal @ W.T + b, self.tangent @ W.T)

    def activate(self, name):
        a, d1, _ = ACTIVATIONS[name](self.primal)
        return DualValue(a, d1 * self.tangent)

    def tanh(self):
        return self.activate('tanh')

    def sin(self):
        return self.activate('sin')


## Forward pass with everything the reverse pass needs

ForwardCache = namedtuple('ForwardCache', ['inputs', 'pre', 'weights', 'mask', 'activation'])

def forward_cache(params, mask, t):
    """
    Run the masked network on a column of times and keep the intermediate
    dual values.

    t : numpy.ndarray
        Times, shape (K,)

    Returns (outputs, cache) where outputs is a DualValue of shape
    (K, output_dim).
    """
    mask.check(params)
    weights = mask.apply(params)
    x = DualValue.variable(np.reshape(t, (-1, 1)))
    inputs, pre = [], []
    last = len(weights) - 1
    for i, (W, b) in enumerate(zip(weights, params.biases)):
        inputs.append(x)
        z = x.linear(W, b)
        pre.append(z)
        x = z if i == last else z.activate(params.spec.activation)
    return x, ForwardCache(inputs, pre, weights, mask, params.spec.activation)


def backpropagate(cache, g_out, g_dout):
    """
    Reverse pass through a forward cache.

    g_out, g_dout : numpy.ndarray, shape (K, output_dim)
        Adjoints of the loss with respect to the outputs and to their time
        derivatives.

    Returns (weight_grads, bias_grads), one array per layer. Weight
    gradients are already multiplied by the mask.
    """
    g_z, g_zdot = g_out, g_dout
    n = len(cache.weights)
    weight_grads, bias_grads = [None] * n, [None] * n
    act = ACTIVATIONS[cache.activation]
    for i in reversed(range(n)):
        W, x = cache.weights[i], cache.inputs[i]
        weight_grads[i] = (g_z.T @ x.primal + g_zdot.T @ x.tangent) * cache.mask.layer(i)
        bias_grads[i] = g_z.sum(axis=0)
        if i == 0:
            break
        g_a, g_adot = g_z @ W, g_zdot @ W
        z = cache.pre[i-1]
        _, d1, d2 = act(z.primal)
        g_z = g_a * d1 + g_adot * d2 * z.tangent
        g_zdot = g_adot * d1
    return weight_grads, bias_grads


## Public operations

def init_network(spec, seed):
    """
    Draw initial parameters, uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)]
    for both weights and biases of each layer.

    spec : NetworkSpec

    seed : int
        The same (spec, seed) always gives bit-identical parameters.
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_out, fan_in in spec.layer_shapes:
        bound = np.sqrt(1.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return ParamState(spec, weights, biases)


def forward_with_time_derivative(params, mask, t):
    """
    Evaluate the masked network and the exact time derivative of its outputs.

    **Inputs**

    params : ParamState

    mask : Mask
        Must be built for params.spec

    t : float or numpy.ndarray
        A single time or a 1D array of K times

    **Returns**

    outputs, d_outputs_dt : numpy.ndarray
        Shape (output_dim,) for a scalar t, (K, output_dim) otherwise
    """
    out, _ = forward_cache(params, mask, np.atleast_1d(t))
    if np.ndim(t) == 0:
        return out.primal[0], out.tangent[0]
    return out.primal, out.tangent

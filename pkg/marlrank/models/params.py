"""Parameter containers for the similarity and policy networks."""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from marlrank.errors import ShapeError
from marlrank.schemas.schemas import NUM_LEVELS, ActionEncoding, Activation


class Head(str, Enum):
    SOFTMAX = "softmax"
    SIGMOID = "sigmoid"
    LINEAR = "linear"


@dataclass(eq=False)
class LayerParams:
    """Affine layer: weights (out x in) and bias (out)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"inconsistent layer shapes: weights {self.weights.shape}, bias {self.bias.shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def zeros(cls, out_dim: int, in_dim: int) -> "LayerParams":
        return cls(np.zeros((out_dim, in_dim)), np.zeros(out_dim))

    @classmethod
    def glorot(cls, out_dim: int, in_dim: int, rng: np.random.Generator) -> "LayerParams":
        bound = np.sqrt(6.0 / (in_dim + out_dim))
        return cls(rng.uniform(-bound, bound, size=(out_dim, in_dim)), np.zeros(out_dim))

    def copy(self) -> "LayerParams":
        return LayerParams(self.weights.copy(), self.bias.copy())

    def equals(self, other: "LayerParams") -> bool:
        return np.array_equal(self.weights, other.weights) and np.array_equal(self.bias, other.bias)


@dataclass(eq=False)
class Network:
    """A chain of affine layers: hidden activation between layers, `head` on the last."""

    layers: list[LayerParams]
    names: tuple[str, ...]
    head: Head
    activation: Activation = Activation.RELU

    def __post_init__(self):
        if len(self.layers) != len(self.names):
            raise ShapeError("every layer needs a name")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(f"layer chain broken: {prev.out_dim} -> {nxt.in_dim}")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def named_layers(self) -> dict[str, LayerParams]:
        return dict(zip(self.names, self.layers))

    def copy(self) -> "Network":
        return Network([layer.copy() for layer in self.layers], self.names, self.head, self.activation)


@dataclass(eq=False)
class ModelParams:
    """Weights of the one-layer similarity module and the two-hidden-layer policy."""

    similarity: Network
    policy: Network
    feature_dim: int
    k: int
    action_encoding: ActionEncoding = ActionEncoding.SCALAR

    FORMAT_VERSION = 1
    POLICY_NAMES = ("policy_hidden1", "policy_hidden2", "policy_output")

    def __post_init__(self):
        if self.similarity.in_dim != 4 * self.feature_dim or self.similarity.out_dim != 1:
            raise ShapeError(
                f"similarity layer must map {4 * self.feature_dim} -> 1, "
                f"got {self.similarity.in_dim} -> {self.similarity.out_dim}"
            )
        if self.policy.in_dim != self.observation_dim:
            raise ShapeError(
                f"policy input is {self.policy.in_dim}, observation length is {self.observation_dim}"
            )
        if self.policy.out_dim != NUM_LEVELS:
            raise ShapeError(f"policy must output {NUM_LEVELS} levels, got {self.policy.out_dim}")

    @property
    def action_width(self) -> int:
        return NUM_LEVELS if self.action_encoding == ActionEncoding.ONEHOT else 1

    @property
    def observation_dim(self) -> int:
        return 2 * self.feature_dim + self.k * self.action_width + self.k

    @property
    def similarity_layer(self) -> LayerParams:
        return self.similarity.layers[0]

    @property
    def policy_hidden1(self) -> LayerParams:
        return self.policy.layers[0]

    @property
    def policy_hidden2(self) -> LayerParams:
        return self.policy.layers[1]

    @property
    def policy_output(self) -> LayerParams:
        return self.policy.layers[2]

    def named_layers(self) -> dict[str, LayerParams]:
        return {**self.similarity.named_layers(), **self.policy.named_layers()}

    def copy(self) -> "ModelParams":
        return ModelParams(
            self.similarity.copy(), self.policy.copy(), self.feature_dim, self.k, self.action_encoding
        )

    def equals(self, other: "ModelParams") -> bool:
        mine, theirs = self.named_layers(), other.named_layers()
        return (
            (self.feature_dim, self.k, self.action_encoding, self.policy.activation)
            == (other.feature_dim, other.k, other.action_encoding, other.policy.activation)
            and mine.keys() == theirs.keys()
            and all(mine[name].equals(theirs[name]) for name in mine)
        )

    def check_compatible(self, feature_dim: int, k: int | None = None) -> None:
        """Raise ShapeError when these weights cannot run on the given data."""
        if feature_dim != self.feature_dim:
            raise ShapeError(
                f"model was built for {self.feature_dim} features, dataset has {feature_dim}"
            )
        if k is not None and k != self.k:
            raise ShapeError(f"model was built for k={self.k}, config asks for k={k}")

    @classmethod
    def build(
        cls,
        similarity_layer: LayerParams,
        policy_layers: list[LayerParams],
        feature_dim: int,
        k: int,
        activation: Activation = Activation.RELU,
        action_encoding: ActionEncoding = ActionEncoding.SCALAR,
    ) -> "ModelParams":
        similarity = Network([similarity_layer], ("similarity",), Head.SIGMOID, activation)
        policy = Network(list(policy_layers), cls.POLICY_NAMES, Head.SOFTMAX, activation)
        return cls(similarity, policy, feature_dim, k, action_encoding)

    @classmethod
    def initialize(
        cls,
        feature_dim: int,
        k: int,
        hidden_units: int = 100,
        activation: Activation = Activation.RELU,
        action_encoding: ActionEncoding = ActionEncoding.SCALAR,
        seed: int | None = 0,
        zero_similarity: bool = False,
    ) -> "ModelParams":
        """Glorot-uniform weights and zero biases, seeded."""
        rng = np.random.default_rng(seed)
        width = NUM_LEVELS if action_encoding == ActionEncoding.ONEHOT else 1
        obs_dim = 2 * feature_dim + k * width + k
        if zero_similarity:
            similarity_layer = LayerParams.zeros(1, 4 * feature_dim)
        else:
            similarity_layer = LayerParams.glorot(1, 4 * feature_dim, rng)
        policy_layers = [
            LayerParams.glorot(hidden_units, obs_dim, rng),
            LayerParams.glorot(hidden_units, hidden_units, rng),
            LayerParams.glorot(NUM_LEVELS, hidden_units, rng),
        ]
        return cls.build(similarity_layer, policy_layers, feature_dim, k, activation, action_encoding)

    @classmethod
    def zeros(
        cls,
        feature_dim: int,
        k: int,
        hidden_units: int = 100,
        activation: Activation = Activation.RELU,
        action_encoding: ActionEncoding = ActionEncoding.SCALAR,
    ) -> "ModelParams":
        width = NUM_LEVELS if action_encoding == ActionEncoding.ONEHOT else 1
        obs_dim = 2 * feature_dim + k * width + k
        return cls.build(
            LayerParams.zeros(1, 4 * feature_dim),
            [
                LayerParams.zeros(hidden_units, obs_dim),
                LayerParams.zeros(hidden_units, hidden_units),
                LayerParams.zeros(NUM_LEVELS, hidden_units),
            ],
            feature_dim,
            k,
            activation,
            action_encoding,
        )

    def __repr__(self) -> str:
        return (
            f"<ModelParams(F={self.feature_dim}, k={self.k}, "
            f"hidden={self.policy_hidden1.out_dim}, activation={self.policy.activation.value})>"
        )


@dataclass(eq=False)
class GradientBuffer:
    """Gradients keyed by layer name, same shapes as the parameters they belong to."""

    layers: dict[str, LayerParams] = field(default_factory=dict)
    input_grad: np.ndarray | None = None

    @classmethod
    def zeros_like(cls, params: "ModelParams | Network") -> "GradientBuffer":
        return cls(
            {
                name: LayerParams.zeros(layer.out_dim, layer.in_dim)
                for name, layer in params.named_layers().items()
            }
        )

    def add(self, other: "GradientBuffer", scale: float = 1.0) -> "GradientBuffer":
        """Accumulate `other` in place; its layers must be a subset of ours."""
        for name, grad in other.layers.items():
            if name not in self.layers:
                raise ShapeError(f"no gradient slot for layer {name!r}")
            mine = self.layers[name]
            if mine.weights.shape != grad.weights.shape:
                raise ShapeError(
                    f"{name}: gradient shape {grad.weights.shape} != {mine.weights.shape}"
                )
            mine.weights += scale * grad.weights
            mine.bias += scale * grad.bias
        return self

    def scale(self, factor: float) -> "GradientBuffer":
        for grad in self.layers.values():
            grad.weights *= factor
            grad.bias *= factor
        return self

    def is_finite(self) -> bool:
        return all(
            np.isfinite(grad.weights).all() and np.isfinite(grad.bias).all()
            for grad in self.layers.values()
        )

    def max_abs(self) -> float:
        return max(
            (
                max(np.abs(grad.weights).max(initial=0.0), np.abs(grad.bias).max(initial=0.0))
                for grad in self.layers.values()
            ),
            default=0.0,
        )

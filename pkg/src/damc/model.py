"""Feature generator G and a bank of k classifier heads."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .numerics import Parameter, Tensor, as_tensor, exp, log_softmax, matmul, no_grad, relu

__all__ = [
    "GeneratorSpec",
    "ClassifierBankSpec",
    "Linear",
    "ModelState",
    "SoftmaxBankOutput",
    "init_model",
    "forward_features",
    "forward_bank",
    "ensemble_predict",
]


@dataclass(frozen=True)
class GeneratorSpec:
    input_dim: int
    hidden_dims: tuple[int, ...] = (32, 32)
    feature_dim: int = 16

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.feature_dim)
        if any(d < 1 for d in dims):
            raise ValueError(f"generator dims must all be >= 1, got {dims}")


@dataclass(frozen=True)
class ClassifierBankSpec:
    k: int
    c: int
    head_hidden: int = 16  # 0 means a single linear layer

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"need at least 2 classifiers, got k={self.k}")
        if self.c < 2:
            raise ValueError(f"need at least 2 categories, got c={self.c}")
        if self.head_hidden < 0:
            raise ValueError("head_hidden must be >= 0")


@dataclass
class Linear:
    weight: Parameter  # (fan_in, fan_out)
    bias: Parameter  # (1, fan_out)

    @classmethod
    def init(cls, fan_in: int, fan_out: int, rng: np.random.Generator, name: str) -> Linear:
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        return cls(Parameter(w, f"{name}.weight"), Parameter(np.zeros((1, fan_out)), f"{name}.bias"))

    def __call__(self, x: Tensor) -> Tensor:
        return matmul(x, self.weight) + self.bias

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]


def _mlp(layers: list[Linear], x: Tensor) -> Tensor:
    for layer in layers[:-1]:
        x = relu(layer(x))
    return layers[-1](x)


@dataclass
class ModelState:
    gspec: GeneratorSpec
    bspec: ClassifierBankSpec
    seed: int
    generator: list[Linear]
    heads: list[list[Linear]]

    def generator_parameters(self) -> list[Parameter]:
        return [p for layer in self.generator for p in layer.parameters()]

    def head_parameters(self, j: int | None = None) -> list[Parameter]:
        heads = self.heads if j is None else [self.heads[j]]
        return [p for head in heads for layer in head for p in layer.parameters()]

    def parameters(self) -> list[Parameter]:
        return self.generator_parameters() + self.head_parameters()

    def named_parameters(self) -> list[tuple[str, Parameter]]:
        return [(p.name, p) for p in self.parameters()]

    def snapshot(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters()]

    def restore(self, values: list[np.ndarray]) -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise ValueError("snapshot does not match this model")
        for p, v in zip(params, values):
            p.data[...] = v
            p.velocity[...] = 0.0
            p.grad[...] = 0.0

    def spec_dict(self) -> dict:
        return {"generator": asdict(self.gspec), "bank": asdict(self.bspec), "seed": self.seed}


@dataclass
class SoftmaxBankOutput:
    """Per-head probabilities (batch x c) and their logs, as graph tensors."""

    log_probs: list[Tensor]
    probs: list[Tensor] = field(default_factory=list)

    def __post_init__(self):
        if not self.probs:
            self.probs = [exp(lp) for lp in self.log_probs]

    @classmethod
    def from_logits(cls, logits: list[Tensor]) -> SoftmaxBankOutput:
        return cls([log_softmax(z) for z in logits])

    @classmethod
    def from_probs(cls, probs, floor: float = 1e-12) -> SoftmaxBankOutput:
        """Wrap fixed probability matrices (one per head); logs are floored at ``floor``."""
        ps = [as_tensor(p) for p in probs]
        lps = [Tensor(np.log(np.maximum(p.data, floor))) for p in ps]
        return cls(lps, ps)

    @property
    def k(self) -> int:
        return len(self.probs)

    @property
    def c(self) -> int:
        return self.probs[0].cols

    @property
    def batch(self) -> int:
        return self.probs[0].rows

    def arrays(self) -> np.ndarray:
        """Stacked probabilities, shape (k, batch, c)."""
        return np.stack([p.data for p in self.probs])


def init_model(gspec: GeneratorSpec, bspec: ClassifierBankSpec, seed: int) -> ModelState:
    rng = np.random.default_rng(seed)
    dims = (gspec.input_dim, *gspec.hidden_dims, gspec.feature_dim)
    generator = [Linear.init(a, b, rng, f"G.{i}") for i, (a, b) in enumerate(zip(dims, dims[1:]))]
    head_dims = (gspec.feature_dim, bspec.head_hidden, bspec.c) if bspec.head_hidden else (
        gspec.feature_dim, bspec.c)
    heads = [
        [Linear.init(a, b, rng, f"C{j}.{i}") for i, (a, b) in enumerate(zip(head_dims, head_dims[1:]))]
        for j in range(bspec.k)
    ]
    return ModelState(gspec, bspec, seed, generator, heads)


def clone_model(m: ModelState) -> ModelState:
    fresh = init_model(m.gspec, m.bspec, m.seed)
    fresh.restore(m.snapshot())
    return fresh


def forward_features(m: ModelState, X) -> Tensor:
    X = as_tensor(X)
    if X.cols != m.gspec.input_dim:
        raise ValueError(f"input has {X.cols} columns, generator expects {m.gspec.input_dim}")
    return _mlp(m.generator, X)


def head_logits(m: ModelState, feats: Tensor, j: int) -> Tensor:
    return _mlp(m.heads[j], feats)


def forward_bank(m: ModelState, feats) -> SoftmaxBankOutput:
    feats = as_tensor(feats)
    if feats.cols != m.gspec.feature_dim:
        raise ValueError(f"features have {feats.cols} columns, heads expect {m.gspec.feature_dim}")
    return SoftmaxBankOutput.from_logits([head_logits(m, feats, j) for j in range(m.bspec.k)])


def ensemble_predict(out: SoftmaxBankOutput) -> tuple[np.ndarray, np.ndarray]:
    """Argmax of the head-averaged probabilities; np.argmax breaks ties toward the lowest index."""
    mean = out.arrays().mean(axis=0)
    labels = np.argmax(mean, axis=1)
    return labels, mean[np.arange(len(labels)), labels]


def infer(m: ModelState, X) -> tuple[np.ndarray, SoftmaxBankOutput]:
    """Features and bank output without graph recording."""
    with no_grad():
        feats = forward_features(m, X)
        return feats.data, forward_bank(m, feats)


def predict(m: ModelState, X) -> tuple[np.ndarray, np.ndarray]:
    return ensemble_predict(infer(m, X)[1])

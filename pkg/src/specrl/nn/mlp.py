"""Dense and residual multilayer perceptrons on top of the autodiff tensors."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor
from .params import ParamSet

ACTIVATIONS = ("relu", "tanh", "elu", "sinusoidal")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths plus activation choice.

    With ``residual=True`` every hidden transition between equal widths is a
    block ``x + W2 @ act(W1 @ x)``; the first and last transitions stay plain
    affine maps. ``layer_norm`` (off by default) normalizes the block input.
    """

    layer_widths: tuple
    activation: str = "relu"
    residual: bool = False
    output_activation: bool = False
    layer_norm: bool = False

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ValueError("an MLP needs at least two layer widths")
        if any(w < 1 for w in widths):
            raise ValueError(f"layer widths must be positive, got {widths}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.residual:
            for i in range(1, len(widths) - 2):
                if widths[i] != widths[i + 1]:
                    raise ValueError(
                        f"residual block {i} maps {widths[i]} -> {widths[i + 1]}; "
                        "blocks need equal input and output width"
                    )

    @property
    def in_dim(self):
        return self.layer_widths[0]

    @property
    def out_dim(self):
        return self.layer_widths[-1]


def activate(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return x.relu()
    if kind == "tanh":
        return x.tanh()
    if kind == "elu":
        return x.elu()
    if kind == "sinusoidal":
        return x.sin()
    raise ValueError(kind)


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _layout(spec: MlpSpec):
    """Yield ``("dense", i, fan_in, fan_out)`` or ``("block", i, width)`` per transition."""
    w = spec.layer_widths
    n = len(w) - 1
    for i in range(n):
        if spec.residual and 0 < i < n - 1:
            yield ("block", i, w[i])
        else:
            yield ("dense", i, w[i], w[i + 1])


def init_mlp(spec: MlpSpec, rng: np.random.Generator, prefix: str = "", params=None) -> ParamSet:
    """Uniform fan-in initialization for every dense weight and bias."""
    params = ParamSet() if params is None else params
    for item in _layout(spec):
        if item[0] == "dense":
            _, i, fi, fo = item
            params.add(f"{prefix}l{i}.w", _uniform(rng, fi, (fi, fo)))
            params.add(f"{prefix}l{i}.b", _uniform(rng, fi, (fo,)))
        else:
            _, i, h = item
            params.add(f"{prefix}b{i}.w1", _uniform(rng, h, (h, h)))
            params.add(f"{prefix}b{i}.b1", _uniform(rng, h, (h,)))
            params.add(f"{prefix}b{i}.w2", _uniform(rng, h, (h, h)))
            params.add(f"{prefix}b{i}.b2", _uniform(rng, h, (h,)))
    return params


def _layer_norm(x: Tensor, eps=1e-5) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    c = x - mu
    var = c.square().mean(axis=-1, keepdims=True)
    return c / (var + eps).sqrt()


def mlp_forward(spec: MlpSpec, params: ParamSet, x, prefix: str = "") -> Tensor:
    """Apply the network to a vector ``(in_dim,)`` or a batch ``(B, in_dim)``.

    The returned tensor carries the recorded operations needed by
    :func:`specrl.nn.autodiff.backward`.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    if x.shape[-1] != spec.in_dim:
        raise ValueError(f"input width {x.shape[-1]} does not match {spec.in_dim}")
    layout = list(_layout(spec))
    last = len(layout) - 1
    for k, item in enumerate(layout):
        if item[0] == "dense":
            i = item[1]
            x = x @ params[f"{prefix}l{i}.w"] + params[f"{prefix}l{i}.b"]
            if k < last or spec.output_activation:
                x = activate(x, spec.activation)
        else:
            i = item[1]
            h = _layer_norm(x) if spec.layer_norm else x
            h = activate(h @ params[f"{prefix}b{i}.w1"] + params[f"{prefix}b{i}.b1"], spec.activation)
            x = x + (h @ params[f"{prefix}b{i}.w2"] + params[f"{prefix}b{i}.b2"])
    return x


class Mlp:
    """Convenience pairing of a spec with a parameter prefix inside a shared ParamSet."""

    def __init__(self, spec: MlpSpec, params: ParamSet, rng, prefix: str):
        self.spec = spec
        self.prefix = prefix
        init_mlp(spec, rng, prefix=prefix, params=params)

    def __call__(self, params: ParamSet, x) -> Tensor:
        return mlp_forward(self.spec, params, x, prefix=self.prefix)

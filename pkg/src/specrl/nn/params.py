"""Named parameter collections."""
from __future__ import annotations

from collections import OrderedDict
from contextlib import contextmanager

import numpy as np

from .autodiff import Tensor


class ParamSet:
    """Ordered mapping from unique names to parameter tensors.

    Each entry's gradient lives on ``tensor.grad`` and always matches the
    entry's shape once populated. Iteration order is insertion order.
    """

    def __init__(self):
        self._entries: OrderedDict[str, Tensor] = OrderedDict()

    def add(self, name: str, value, trainable: bool = True) -> Tensor:
        if name in self._entries:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=trainable, name=name)
        self._entries[name] = t
        return t

    def update(self, other: "ParamSet", prefix: str = "") -> None:
        """Adopt the entries of ``other`` (shared tensors, not copies)."""
        for name, t in other.items():
            key = prefix + name
            if key in self._entries:
                raise KeyError(f"duplicate parameter name {key!r}")
            self._entries[key] = t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def names(self):
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def trainable(self):
        return [(n, t) for n, t in self._entries.items() if t.requires_grad]

    def arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, t.data) for n, t in self._entries.items())

    def grads(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict(
            (n, np.zeros_like(t.data) if t.grad is None else t.grad)
            for n, t in self._entries.items()
        )

    def zero_grad(self) -> None:
        for t in self._entries.values():
            t.grad = None

    def copy(self) -> "ParamSet":
        out = ParamSet()
        for n, t in self._entries.items():
            out.add(n, t.data.copy(), trainable=t.requires_grad)
        return out

    def load_arrays(self, arrays) -> None:
        for n, a in arrays.items():
            t = self._entries[n]
            a = np.asarray(a, dtype=np.float64)
            if a.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {n}: {a.shape} vs {t.data.shape}")
            t.data = a.copy()

    def soft_update(self, source: "ParamSet", tau: float) -> None:
        """``self <- (1 - tau) * self + tau * source`` entrywise, in place."""
        for n, t in self._entries.items():
            src = source[n].data
            t.data = t.data + tau * (src - t.data)

    def equals(self, other: "ParamSet") -> bool:
        if self.names() != other.names():
            return False
        return all(np.array_equal(t.data, other[n].data) for n, t in self.items())

    def n_values(self) -> int:
        return int(sum(t.data.size for t in self._entries.values()))


@contextmanager
def frozen(*param_sets):
    """Temporarily stop recording gradients for every entry of the given sets."""
    saved = []
    for ps in param_sets:
        for _, t in ps.items():
            saved.append((t, t.requires_grad))
            t.requires_grad = False
    try:
        yield
    finally:
        for t, flag in saved:
            t.requires_grad = flag

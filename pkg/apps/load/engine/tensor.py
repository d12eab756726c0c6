"""
LoAd Platform - Tensor and Compute Graph

A dense numpy-backed tensor that records the operations producing it, and
the reverse-mode pass that walks the recorded graph:

    - Tensor: value, optional gradient buffer, link to its producing node
    - ComputeGraphNode: operation tag, inputs and the backward rule (a closure
      over the intermediates saved during the forward pass)

Only tensors that depend on something with ``requires_grad`` get a node, so
frozen computations (feature extraction, inference) build no graph at all.

Created:    2026
License:    MIT - See LICENSE file
"""

import numpy as np

from ..exceptions import NumericError, ShapeError


class ComputeGraphNode:
    """How a tensor was produced: op tag, input tensors, backward rule."""

    __slots__ = ("op", "inputs", "backward")

    def __init__(self, op, inputs, backward):
        self.op = op
        self.inputs = tuple(inputs)
        # grad_out -> tuple of input gradients (None where not needed)
        self.backward = backward

    def __repr__(self):
        return f"ComputeGraphNode(op={self.op!r}, inputs={len(self.inputs)})"


def check_finite(array, where):
    """Raise NumericError when ``array`` holds NaN or Inf."""
    if not np.isfinite(array).all():
        raise NumericError(f"{where} produced non-finite values")


class Tensor:
    """
    Dense real array of rank 0..4 carrying an optional gradient.

    ``data`` keeps the dtype it was built with; float32 is used for training
    and float64 for gradient checks. Operations never mutate their inputs.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None, _node=None):
        array = np.asarray(data, dtype=dtype)
        if array.dtype.kind != "f":
            array = array.astype(np.float32)
        if any(extent <= 0 for extent in array.shape):
            raise ShapeError(f"tensor extents must be positive, got {array.shape}")
        self.data = array
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._node = _node

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def node(self):
        return self._node

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def detach(self):
        """Same values, no graph, no gradient."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # ------------------------------------------------------------------
    # Reverse mode
    # ------------------------------------------------------------------

    def _topological_order(self):
        """Inputs before consumers; every reachable node exactly once."""
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            tensor, expanded = stack.pop()
            if expanded:
                order.append(tensor)
                continue
            if id(tensor) in visited:
                continue
            visited.add(id(tensor))
            stack.append((tensor, True))
            if tensor._node is not None:
                for parent in tensor._node.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return order

    def backward(self, grad=None):
        """
        Accumulate d(self)/d(t) into ``t.grad`` for every tensor ``t`` in the
        graph that requires a gradient.

        Without an explicit ``grad`` the tensor must hold a single value.
        """
        if not self.requires_grad:
            raise ShapeError("backward() called on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(
                    f"backward() without a gradient needs a scalar, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.dtype)
            if grad.shape != self.shape:
                raise ShapeError(f"gradient shape {grad.shape} does not match {self.shape}")

        pending = {id(self): grad}
        for tensor in reversed(self._topological_order()):
            g = pending.pop(id(tensor), None)
            if g is None:
                continue
            check_finite(g, f"backward through {tensor._node.op if tensor._node else 'leaf'}")
            tensor.grad = g if tensor.grad is None else tensor.grad + g
            node = tensor._node
            if node is None:
                continue
            for parent, parent_grad in zip(node.inputs, node.backward(g)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pending[key] + parent_grad if key in pending else parent_grad

    # ------------------------------------------------------------------
    # Small arithmetic helpers used to compose scores and losses
    # ------------------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            if other.shape != self.shape:
                raise ShapeError(f"add: shape mismatch {self.shape} vs {other.shape}")
            return make_result(
                self.data + other.data, "add", (self, other), lambda g: (g, g)
            )
        value = float(other)
        return make_result(self.data + value, "add_scalar", (self,), lambda g: (g,))

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("use elementwise_mul for tensor products")
        value = float(other)
        return make_result(self.data * value, "scale", (self,), lambda g: (g * value,))

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def sum(self):
        shape = self.shape
        return make_result(
            np.asarray(self.data.sum(), dtype=self.dtype),
            "sum",
            (self,),
            lambda g: (np.broadcast_to(g, shape).astype(g.dtype, copy=True),),
        )

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        original = self.shape
        return make_result(
            self.data.reshape(shape), "reshape", (self,), lambda g: (g.reshape(original),)
        )

    def flatten(self):
        """Keep the leading (batch) axis, flatten the rest."""
        return self.reshape(self.shape[0], -1)


def make_result(data, op, inputs, backward):
    """Wrap an op result, attaching a graph node only when a gradient is needed."""
    check_finite(data, op)
    needs_grad = any(t.requires_grad for t in inputs)
    node = ComputeGraphNode(op, inputs, backward) if needs_grad else None
    return Tensor(data, requires_grad=needs_grad, _node=node)


def as_tensor(value, dtype=None):
    """Pass tensors through; wrap arrays without tracking gradients."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)

"""Reverse-mode automatic differentiation on an explicit per-batch tape.

Every activation is a `Var`: a float64 numpy array plus the recipe for
pushing adjoints back to its parents. A `Tape` owns the Vars of one
forward pass in creation order, so backward is a single reverse sweep
over the recorded list. Parameters enter a tape through `Tape.param`,
which ties leaf nodes to a `ParamStore`; `backward_total` accumulates
into the store's gradient buffers while `head_grad` reads adjoints of
the severity-head parameter subset without touching them.

vjp contract: every closure returns freshly allocated arrays, one per
parent, never aliasing the upstream adjoint or cached values. All ops
go through np.einsum with optimize=False so the summation order is
fixed regardless of BLAS backend.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, InvalidHandle, StaleTapeError


class ParamStore:
    """Ordered named float64 parameters with paired gradient buffers.

    A parameter added with head=True belongs to the severity-head
    subset over which per-class gradient norms are taken. `version` is
    bumped on every in-place update so tapes can detect staleness.
    """

    def __init__(self):
        self._order: list[str] = []
        self.tensors: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._head: set[str] = set()
        self.version = 0

    def add(self, name: str, value: np.ndarray, head: bool = False) -> None:
        if name in self.tensors:
            raise ConfigurationError(f"duplicate parameter name {name!r}")
        arr = np.asarray(value, dtype=np.float64)
        self._order.append(name)
        self.tensors[name] = arr
        self.grads[name] = np.zeros_like(arr)
        if head:
            self._head.add(name)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._order)

    @property
    def head_names(self) -> tuple[str, ...]:
        return tuple(n for n in self._order if n in self._head)

    def is_head(self, name: str) -> bool:
        return name in self._head

    @property
    def head_dim(self) -> int:
        return sum(self.tensors[n].size for n in self.head_names)

    @property
    def num_values(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([self.grads[n].ravel() for n in self._order])

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name in self._order:
            out.add(name, self.tensors[name].copy(), head=name in self._head)
        out.version = self.version
        return out


class Var:
    """One tape node: a float64 array, its parents, and a vjp closure."""

    __slots__ = ("tape", "idx", "value", "parents", "vjp", "op", "param_name")

    def __init__(self, tape, value, parents=(), vjp=None, op="leaf", param_name=None):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.op = op
        self.param_name = param_name
        tape._register(self)

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)


class Tape:
    """Append-only record of one forward pass.

    Replaying backward never mutates node values, so backward may run
    any number of times while the underlying parameters are unchanged.
    """

    def __init__(self, params: ParamStore | None = None):
        self.nodes: list[Var] = []
        self.params = params
        self.param_version = params.version if params is not None else None
        self._param_leaves: dict[str, Var] = {}
        self.severity_logits: Var | None = None
        self.axis_logits: Var | None = None

    def _register(self, var: Var) -> None:
        var.idx = len(self.nodes)
        self.nodes.append(var)

    def constant(self, value) -> Var:
        return Var(self, np.asarray(value, dtype=np.float64))

    def param(self, name: str) -> Var:
        """Leaf node tied to a named parameter of the bound store."""
        if self.params is None:
            raise InvalidHandle("tape has no parameter store")
        if name in self._param_leaves:
            return self._param_leaves[name]
        leaf = Var(self, self.params.tensors[name], op="param", param_name=name)
        self._param_leaves[name] = leaf
        return leaf

    def check_live(self) -> None:
        if self.params is not None and self.params.version != self.param_version:
            raise StaleTapeError(
                "parameters were updated after this tape was recorded"
            )


def _check_handle(tape: Tape, node: Var) -> None:
    if node.tape is not tape:
        raise InvalidHandle("node does not belong to this tape")


def _same_tape(a: Var, b: Var) -> Tape:
    if a.tape is not b.tape:
        raise InvalidHandle("operands live on different tapes")
    return a.tape


def _backward_adjoints(tape, root, upstream, allowed=None):
    """Reverse sweep from `root`; returns adjoints indexed by node id.

    `allowed`, when given, is a per-node boolean mask; nodes outside it
    are skipped. The mask must be closed under descendants of the
    leaves of interest, which makes skipping exact rather than an
    approximation.
    """
    adj: list[np.ndarray | None] = [None] * (root.idx + 1)
    seed = np.empty(root.value.shape, dtype=np.float64)
    seed[...] = upstream
    adj[root.idx] = seed
    for i in range(root.idx, -1, -1):
        a = adj[i]
        if a is None:
            continue
        node = tape.nodes[i]
        if node.vjp is None:
            continue
        if allowed is not None and not allowed[i]:
            continue
        for parent, g in zip(node.parents, node.vjp(a)):
            if g is None:
                continue
            if adj[parent.idx] is None:
                adj[parent.idx] = g
            else:
                np.add(adj[parent.idx], g, out=adj[parent.idx])
    return adj


def backward_total(tape: Tape, loss: Var, upstream: float = 1.0) -> None:
    """Accumulate d(upstream * loss)/dtheta into the store's grad buffers.

    The caller is responsible for zeroing the buffers between unrelated
    backward passes.
    """
    _check_handle(tape, loss)
    tape.check_live()
    adj = _backward_adjoints(tape, loss, upstream)
    for name, leaf in tape._param_leaves.items():
        g = adj[leaf.idx]
        if g is not None:
            np.add(tape.params.grads[name], g, out=tape.params.grads[name])


def head_grad(tape: Tape, class_loss: Var, params: ParamStore) -> np.ndarray:
    """Flat gradient of `class_loss` over the severity-head subset only.

    Never touches the main gradient buffers. The backward sweep is
    pruned to nodes that depend on head parameters, which is exact
    because the dependent set is closed under descendants.
    """
    _check_handle(tape, class_loss)
    if params is not tape.params:
        raise InvalidHandle("parameter store does not back this tape")
    tape.check_live()
    head_names = params.head_names
    if not head_names:
        raise InvalidHandle("no parameters are flagged as severity-head")

    allowed = [False] * (class_loss.idx + 1)
    for i in range(class_loss.idx + 1):
        node = tape.nodes[i]
        if node.param_name is not None and params.is_head(node.param_name):
            allowed[i] = True
        else:
            allowed[i] = any(p.idx <= class_loss.idx and allowed[p.idx]
                             for p in node.parents)
    adj = _backward_adjoints(tape, class_loss, 1.0, allowed=allowed)

    pieces = []
    for name in head_names:
        leaf = tape._param_leaves.get(name)
        g = adj[leaf.idx] if leaf is not None and leaf.idx <= class_loss.idx else None
        if g is None:
            pieces.append(np.zeros(params.tensors[name].size))
        else:
            pieces.append(g.ravel())
    return np.concatenate(pieces)


# ---------------------------------------------------------------------------
# elementwise / scalar ops


def add(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    def vjp(up):
        return up.copy(), up.copy()
    return Var(tape, a.value + b.value, (a, b), vjp, op="add")


def sub(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    def vjp(up):
        return up.copy(), -up
    return Var(tape, a.value - b.value, (a, b), vjp, op="sub")


def mul(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    av, bv = a.value, b.value
    def vjp(up):
        return up * bv, up * av
    return Var(tape, av * bv, (a, b), vjp, op="mul")


def neg(a: Var) -> Var:
    def vjp(up):
        return (-up,)
    return Var(a.tape, -a.value, (a,), vjp, op="neg")


def scale(a: Var, c: float) -> Var:
    c = float(c)
    def vjp(up):
        return (up * c,)
    return Var(a.tape, a.value * c, (a,), vjp, op="scale")


def add_const(a: Var, c: float) -> Var:
    def vjp(up):
        return (up.copy(),)
    return Var(a.tape, a.value + float(c), (a,), vjp, op="add_const")


def rsub_const(c: float, a: Var) -> Var:
    """c - a."""
    def vjp(up):
        return (-up,)
    return Var(a.tape, float(c) - a.value, (a,), vjp, op="rsub_const")


def mul_const(a: Var, arr) -> Var:
    """Elementwise product with a constant array (no gradient through it)."""
    arr = np.asarray(arr, dtype=np.float64)
    def vjp(up):
        return (up * arr,)
    return Var(a.tape, a.value * arr, (a,), vjp, op="mul_const")


def powc(a: Var, p: float) -> Var:
    """a ** p for a >= 0; p == 0 has identically zero derivative."""
    p = float(p)
    av = a.value
    def vjp(up):
        if p == 0.0:
            return (np.zeros_like(up),)
        return (up * p * np.power(av, p - 1.0),)
    return Var(a.tape, np.power(av, p), (a,), vjp, op="powc")


def exp(a: Var) -> Var:
    out = np.exp(a.value)
    def vjp(up):
        return (up * out,)
    return Var(a.tape, out, (a,), vjp, op="exp")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(a: Var) -> Var:
    """log(1 + exp(a)), overflow-safe."""
    av = a.value
    def vjp(up):
        return (up * _sigmoid(av),)
    return Var(a.tape, np.logaddexp(0.0, av), (a,), vjp, op="softplus")


# ---------------------------------------------------------------------------
# linear algebra / shape ops


def matmul(x: Var, w: Var) -> Var:
    """(B,I) @ (I,O) -> (B,O)."""
    tape = _same_tape(x, w)
    xv, wv = x.value, w.value
    out = np.einsum("bi,io->bo", xv, wv)
    def vjp(up):
        dx = np.einsum("bo,io->bi", up, wv)
        dw = np.einsum("bi,bo->io", xv, up)
        return dx, dw
    return Var(tape, out, (x, w), vjp, op="matmul")


def add_rowvec(x: Var, b: Var) -> Var:
    """(B,O) + (O,) broadcast over rows."""
    tape = _same_tape(x, b)
    def vjp(up):
        return up.copy(), up.sum(axis=0)
    return Var(tape, x.value + b.value[None, :], (x, b), vjp, op="add_rowvec")


def relu(a: Var) -> Var:
    mask = a.value > 0.0
    def vjp(up):
        return (up * mask,)
    return Var(a.tape, np.maximum(a.value, 0.0), (a,), vjp, op="relu")


def flatten(x: Var) -> Var:
    shape = x.value.shape
    out = x.value.reshape(shape[0], -1)
    def vjp(up):
        return (up.reshape(shape).copy(),)
    return Var(x.tape, out, (x,), vjp, op="flatten")


def concat_cols(a: Var, b: Var) -> Var:
    tape = _same_tape(a, b)
    n1 = a.value.shape[1]
    out = np.concatenate([a.value, b.value], axis=1)
    def vjp(up):
        return up[:, :n1].copy(), up[:, n1:].copy()
    return Var(tape, out, (a, b), vjp, op="concat_cols")


def _windows(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Read-only sliding view (B,C,kh,kw,H-kh+1,W-kw+1)."""
    B, C, H, W = x.shape
    sb, sc, sh, sw = x.strides
    return np.lib.stride_tricks.as_strided(
        x,
        shape=(B, C, kh, kw, H - kh + 1, W - kw + 1),
        strides=(sb, sc, sh, sw, sh, sw),
        writeable=False,
    )


def conv3x3(x: Var, w: Var) -> Var:
    """Valid 3x3 convolution: (B,C,H,W) x (O,C,3,3) -> (B,O,H-2,W-2)."""
    tape = _same_tape(x, w)
    xv, wv = x.value, w.value
    if xv.shape[1] != wv.shape[1]:
        raise ConfigurationError("conv input channels do not match kernel")
    if xv.shape[2] < 3 or xv.shape[3] < 3:
        raise ConfigurationError("conv input smaller than 3x3 kernel")
    win = _windows(xv, 3, 3)
    out = np.einsum("bcuvhw,ocuv->bohw", win, wv)
    def vjp(up):
        dw = np.einsum("bcuvhw,bohw->ocuv", win, up)
        padded = np.pad(up, ((0, 0), (0, 0), (2, 2), (2, 2)))
        wf = wv[:, :, ::-1, ::-1]
        dx = np.einsum("bouvhw,ocuv->bchw", _windows(padded, 3, 3), wf)
        return dx, dw
    return Var(tape, out, (x, w), vjp, op="conv3x3")


def add_chan_bias(x: Var, b: Var) -> Var:
    """(B,C,H,W) + (C,) broadcast over batch and space."""
    tape = _same_tape(x, b)
    def vjp(up):
        return up.copy(), up.sum(axis=(0, 2, 3))
    return Var(tape, x.value + b.value[None, :, None, None], (x, b), vjp,
               op="add_chan_bias")


def maxpool2(x: Var) -> Var:
    """2x2 max pooling, stride 2; odd trailing rows/cols are dropped."""
    xv = x.value
    B, C, H, W = xv.shape
    h, w = H // 2, W // 2
    if h < 1 or w < 1:
        raise ConfigurationError("maxpool input smaller than 2x2")
    blocks = xv[:, :, : 2 * h, : 2 * w].reshape(B, C, h, 2, w, 2)
    flat = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(B, C, h, w, 4)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    def vjp(up):
        dflat = np.zeros_like(flat)
        np.put_along_axis(dflat, arg[..., None], up[..., None], axis=-1)
        dx = np.zeros_like(xv)
        dx[:, :, : 2 * h, : 2 * w] = (
            dflat.reshape(B, C, h, w, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(B, C, 2 * h, 2 * w)
        )
        return (dx,)
    return Var(x.tape, out, (x,), vjp, op="maxpool2")


# ---------------------------------------------------------------------------
# reductions / indexing


def logsumexp_rows(x: Var) -> Var:
    """(B,K) -> (B,), numerically stabilized by max subtraction."""
    xv = x.value
    m = xv.max(axis=1)
    e = np.exp(xv - m[:, None])
    s = e.sum(axis=1)
    sm = e / s[:, None]
    def vjp(up):
        return (sm * up[:, None],)
    return Var(x.tape, m + np.log(s), (x,), vjp, op="logsumexp_rows")


def sub_colvec(x: Var, s: Var) -> Var:
    """(B,K) - (B,) broadcast over columns."""
    tape = _same_tape(x, s)
    def vjp(up):
        return up.copy(), -up.sum(axis=1)
    return Var(tape, x.value - s.value[:, None], (x, s), vjp, op="sub_colvec")


def gather_rows(x: Var, idx) -> Var:
    """(B,K)[arange(B), idx] -> (B,). idx is a constant integer vector."""
    idx = np.asarray(idx, dtype=np.intp)
    B, K = x.value.shape
    rows = np.arange(B)
    def vjp(up):
        dx = np.zeros((B, K))
        dx[rows, idx] = up
        return (dx,)
    return Var(x.tape, x.value[rows, idx].copy(), (x,), vjp, op="gather_rows")


def rowsum(x: Var) -> Var:
    """(B,K) -> (B,)."""
    shape = x.value.shape
    def vjp(up):
        return (np.broadcast_to(up[:, None], shape).copy(),)
    return Var(x.tape, x.value.sum(axis=1), (x,), vjp, op="rowsum")


def sum_all(x: Var) -> Var:
    """Full reduction to a scalar (shape ())."""
    shape = x.value.shape
    def vjp(up):
        out = np.empty(shape)
        out[...] = up
        return (out,)
    return Var(x.tape, np.asarray(x.value.sum()), (x,), vjp, op="sum_all")

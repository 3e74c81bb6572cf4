"""Tape-based reverse-mode autodiff over dense complex tensors.

All values are complex128 numpy arrays, including quantities that happen to
be real (they simply carry zero imaginary parts). Gradient convention: for a
real scalar loss L and a complex leaf z = x + iy, the stored gradient is

    grad(z) = dL/dx + 1j * dL/dy

so a real optimizer can update the two real components of any complex
parameter independently, and real-valued parameters carry real gradients.
Equivalently, for a perturbation dz the first-order change of the loss is
Re(sum(conj(grad) * dz)); every adjoint rule below is derived from that
pairing.

The graph is dynamic: ops executed inside a ``with Tape():`` block append
records to that tape, and ``backward`` replays the records in reverse. Ops
executed with no active tape run eagerly and produce untracked outputs,
which is the intended fast path for evaluation loops.

A tape is single-writer: concurrent forward passes need one tape per
worker thread (the active-tape stack is thread-local).
"""

from __future__ import annotations

import itertools
import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ArityError, AutodiffError, LabelError, ShapeError

_COMPLEX = np.complex128
_ids = itertools.count()

__all__ = [
    "Tensor", "Tape", "tensor", "parameter", "backward",
    "add", "sub", "mul", "mul_const", "add_const", "scalar_mul",
    "matvec", "matmul", "transpose", "reshape", "conj",
    "real_part", "imag_part", "absval", "sumall", "square_norm", "spow",
    "weighted_sum", "collapse_rows", "take_rows", "slice_vec",
    "stack_scalars", "broadcast_rows", "relu", "tanh", "softmax",
    "cross_entropy",
]


class Tensor:
    """A dense complex128 array plus gradient bookkeeping.

    Leaves are created with ``tensor``/``parameter``; everything else comes
    out of ops. ``grad`` is populated on tracked leaves by ``backward`` and
    accumulates across calls until ``zero_grad``.
    """

    __slots__ = ("values", "grad", "tracked", "node_id", "_tape", "_index")

    def __init__(self, values, tracked: bool = False):
        arr = np.asarray(values, dtype=_COMPLEX)
        if arr.ndim and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)   # 0-d arrays are left alone
        self.values = arr
        self.grad: np.ndarray | None = None
        self.tracked = tracked
        self.node_id = next(_ids)
        self._tape: "Tape | None" = None   # tape holding the op that made this node
        self._index = -1                    # record index within that tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def is_leaf(self) -> bool:
        return self._tape is None

    def item(self) -> complex:
        if self.values.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return complex(self.values.reshape(-1)[0])

    def real_item(self) -> float:
        return self.item().real

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = "leaf" if self.is_leaf else "node"
        return f"Tensor({tag}, shape={self.shape}, tracked={self.tracked})"

    # Light operator sugar; the module-level functions are the real API.
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_const(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_const(self, -other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            if other.shape == ():
                return scalar_mul(other, self)
            if self.shape == ():
                return scalar_mul(self, other)
            return mul(self, other)
        return mul_const(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul_const(self, -1.0)


def tensor(values, tracked: bool = False) -> Tensor:
    """Wrap array-like data as a (by default untracked) leaf."""
    return Tensor(values, tracked=tracked)


def parameter(values) -> Tensor:
    """Create a trainable leaf: tracked, with persistent ``grad``."""
    return Tensor(values, tracked=True)


_stack = threading.local()


def _tape_stack() -> list:
    stk = getattr(_stack, "tapes", None)
    if stk is None:
        stk = []
        _stack.tapes = stk
    return stk


class Tape:
    """Ordered record of ops for one forward pass."""

    def __init__(self):
        # each record: (out, parents, vjp) where vjp(g_out) returns one
        # gradient contribution per parent (None for skip)
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stk = _tape_stack()
        if not stk or stk[-1] is not self:
            raise AutodiffError("tape stack corrupted: exiting a tape that is not active")
        stk.pop()

    def __len__(self) -> int:
        return len(self._records)

    def _record(self, out: Tensor, parents: tuple[Tensor, ...], vjp: Callable) -> None:
        out._tape = self
        out._index = len(self._records)
        self._records.append((out, parents, vjp))


def _active_tape() -> Tape | None:
    stk = _tape_stack()
    return stk[-1] if stk else None


def _make(values: np.ndarray, parents: tuple[Tensor, ...], vjp: Callable) -> Tensor:
    """Create an op output, recording it if any parent is tracked and a tape
    is active. With no active tape the result is untracked (eager mode)."""
    out = Tensor(values)
    if any(p.tracked for p in parents):
        tape = _active_tape()
        if tape is not None:
            out.tracked = True
            tape._record(out, parents, vjp)
    return out


def backward(scalar: Tensor, populate_leaves: bool = True) -> dict[Tensor, np.ndarray]:
    """Reverse sweep from a real 0-d node.

    Returns a map {tracked leaf -> gradient array} for every leaf reached.
    When ``populate_leaves`` is true (default) the same gradients are also
    accumulated into each leaf's ``grad``; calling backward twice without
    resetting therefore accumulates.
    """
    if not isinstance(scalar, Tensor):
        raise AutodiffError("backward expects a Tensor")
    if scalar.shape != ():
        raise AutodiffError(f"backward needs a 0-d scalar, got shape {scalar.shape}")
    if abs(scalar.values.imag) > 1e-12:
        raise AutodiffError(
            f"backward needs a real scalar; imaginary part is {scalar.values.imag:.3e}"
        )
    if scalar._tape is None:
        if scalar.tracked:
            # Gradient of a bare leaf with respect to itself.
            g = np.ones((), dtype=_COMPLEX)
            if populate_leaves:
                if scalar.grad is None:
                    scalar.grad = np.zeros((), dtype=_COMPLEX)
                scalar.grad = scalar.grad + g
            return {scalar: g}
        raise AutodiffError("backward target was not produced on an active tape")

    tape = scalar._tape
    grads: dict[int, np.ndarray] = {scalar.node_id: np.ones((), dtype=_COMPLEX)}
    leaf_sums: dict[int, tuple[Tensor, np.ndarray]] = {}

    for out, parents, vjp in reversed(tape._records[: scalar._index + 1]):
        g = grads.pop(out.node_id, None)
        if g is None:
            continue
        contribs = vjp(g)
        for p, c in zip(parents, contribs):
            if c is None or not p.tracked:
                continue
            if p.is_leaf:
                if p.node_id in leaf_sums:
                    leaf_sums[p.node_id] = (p, leaf_sums[p.node_id][1] + c)
                else:
                    leaf_sums[p.node_id] = (p, np.array(c, dtype=_COMPLEX))
            else:
                prev = grads.get(p.node_id)
                # never mutate a stored buffer in place: other edges may alias it
                grads[p.node_id] = c if prev is None else prev + c

    result: dict[Tensor, np.ndarray] = {}
    for p, total in leaf_sums.values():
        if populate_leaves:
            if p.grad is None:
                p.grad = np.zeros(p.shape, dtype=_COMPLEX)
            p.grad = p.grad + total
        result[p] = total
    return result


# ---------------------------------------------------------------------------
# helpers

def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def _canonical_sum(products: np.ndarray) -> np.ndarray:
    """Sum ``products`` over axis 0 in a canonical, order-independent way.

    The addends for each output element are sorted (lexicographically by
    real then imaginary part, numpy's complex ordering) before reduction,
    so permuting the inputs along axis 0 leaves the result bit-for-bit
    unchanged. Used wherever the contract promises exact permutation
    invariance of a linear combination.
    """
    k = products.shape[0]
    if k == 1:
        return products[0].copy()
    moved = np.moveaxis(products, 0, -1)
    ordered = np.sort(moved, axis=-1)
    return np.add.reduce(ordered, axis=-1)


# ---------------------------------------------------------------------------
# elementwise and scalar ops

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "add")
    return _make(a.values + b.values, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape(a, b, "sub")
    return _make(a.values - b.values, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    _check_same_shape(a, b, "mul")
    av, bv = a.values, b.values
    return _make(av * bv, (a, b), lambda g: (np.conj(bv) * g, np.conj(av) * g))


def mul_const(a: Tensor, c) -> Tensor:
    """Multiply by a constant scalar or a constant same-shape array."""
    carr = np.asarray(c, dtype=_COMPLEX)
    if carr.shape not in ((), a.shape):
        raise ShapeError(f"mul_const: constant shape {carr.shape} does not match {a.shape}")
    cc = np.conj(carr)
    return _make(a.values * carr, (a,), lambda g: (cc * g,))


def add_const(a: Tensor, c) -> Tensor:
    carr = np.asarray(c, dtype=_COMPLEX)
    if carr.shape not in ((), a.shape):
        raise ShapeError(f"add_const: constant shape {carr.shape} does not match {a.shape}")
    return _make(a.values + carr, (a,), lambda g: (g,))


def scalar_mul(s: Tensor, t: Tensor) -> Tensor:
    """Scalar node times tensor node (the only sanctioned broadcast)."""
    if s.shape != ():
        raise ShapeError(f"scalar_mul: first operand must be 0-d, got {s.shape}")
    sv, tv = s.values, t.values

    def vjp(g):
        gs = np.sum(np.conj(tv) * g)
        return (np.asarray(gs, dtype=_COMPLEX), np.conj(sv) * g)

    return _make(sv * tv, (s, t), vjp)


def conj(a: Tensor) -> Tensor:
    return _make(np.conj(a.values), (a,), lambda g: (np.conj(g),))


def real_part(a: Tensor) -> Tensor:
    """Real part, as a real-valued tensor."""
    return _make(a.values.real.astype(_COMPLEX), (a,),
                 lambda g: (g.real.astype(_COMPLEX),))


def imag_part(a: Tensor) -> Tensor:
    return _make(a.values.imag.astype(_COMPLEX), (a,),
                 lambda g: (1j * g.real.astype(_COMPLEX),))


def absval(a: Tensor) -> Tensor:
    """Elementwise magnitude |z|. Subgradient 0 at exact zeros."""
    av = a.values
    mags = np.abs(av)

    def vjp(g):
        phase = np.divide(av, mags, out=np.zeros_like(av), where=mags > 0)
        return (g.real * phase,)

    return _make(mags.astype(_COMPLEX), (a,), vjp)


def sumall(a: Tensor) -> Tensor:
    """Sum of all entries, as a 0-d tensor.

    The reduction is canonical (value-sorted), so the result is invariant
    under any permutation of the entries, bit for bit.
    """
    shape = a.shape
    flat = a.values.reshape(-1)
    val = flat[0] if flat.size == 1 else np.add.reduce(np.sort(flat))
    return _make(np.asarray(val, dtype=_COMPLEX), (a,),
                 lambda g: (np.full(shape, complex(g), dtype=_COMPLEX),))


def square_norm(a: Tensor) -> Tensor:
    """sum(|z_i|^2) as a real 0-d tensor."""
    av = a.values
    val = float(np.vdot(av, av).real)
    return _make(np.asarray(val, dtype=_COMPLEX), (a,),
                 lambda g: (2.0 * complex(g).real * av,))


def spow(s: Tensor, p: float) -> Tensor:
    """Real scalar power s**p for a positive real 0-d node."""
    if s.shape != ():
        raise ShapeError(f"spow: operand must be 0-d, got {s.shape}")
    base = float(s.values.real)
    if base <= 0.0:
        raise AutodiffError(f"spow requires a positive base, got {base:.3e}")
    val = base ** p
    dval = p * base ** (p - 1.0)
    return _make(np.asarray(val, dtype=_COMPLEX), (s,),
                 lambda g: (np.asarray(complex(g).real * dval, dtype=_COMPLEX),))


# ---------------------------------------------------------------------------
# linear algebra

def matvec(m: Tensor, v: Tensor) -> Tensor:
    """Matrix (r, c) times vector (c,)."""
    if m.values.ndim != 2 or v.values.ndim != 1:
        raise ShapeError(f"matvec: need 2-d and 1-d operands, got {m.shape} and {v.shape}")
    if m.shape[1] != v.shape[0]:
        raise ShapeError(f"matvec: inner dimensions differ, {m.shape} vs {v.shape}")
    mv, vv = m.values, v.values

    def vjp(g):
        return (np.outer(g, np.conj(vv)), np.conj(mv).T @ g)

    return _make(mv @ vv, (m, v), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ShapeError(f"matmul: need 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} vs {b.shape}")
    av, bv = a.values, b.values

    def vjp(g):
        return (g @ np.conj(bv).T, np.conj(av).T @ g)

    return _make(av @ bv, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    if a.values.ndim != 2:
        raise ShapeError(f"transpose: need a 2-d operand, got {a.shape}")
    return _make(a.values.T.copy(), (a,), lambda g: (g.T.copy(),))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    old = a.shape
    try:
        values = a.values.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot view {old} as {shape}") from e
    return _make(values.copy(), (a,), lambda g: (g.reshape(old).copy(),))


def weighted_sum(coeffs: Tensor, terms: Sequence[Tensor]) -> Tensor:
    """sum_j coeffs[j] * terms[j] over a list of same-shape tensors.

    The reduction over j is canonical (value-sorted), so jointly permuting
    coefficients and terms leaves the output bit-for-bit unchanged.
    """
    terms = list(terms)
    if not terms:
        raise ArityError("weighted_sum: empty term list")
    if coeffs.values.ndim != 1 or coeffs.shape[0] != len(terms):
        raise ShapeError(
            f"weighted_sum: got {len(terms)} terms but coefficient shape {coeffs.shape}"
        )
    shape = terms[0].shape
    for t in terms[1:]:
        _check_same_shape(terms[0], t, "weighted_sum")
    cv = coeffs.values
    stack = np.stack([t.values.reshape(-1) for t in terms])  # (k, flat)
    out = _canonical_sum(cv[:, None] * stack).reshape(shape)

    def vjp(g):
        gf = g.reshape(-1)
        gc = np.conj(stack) @ gf
        contribs = [np.asarray(gc, dtype=_COMPLEX)]
        contribs.extend((np.conj(cv[j]) * gf).reshape(shape) for j in range(len(terms)))
        return tuple(contribs)

    return _make(out, (coeffs, *terms), vjp)


def collapse_rows(coeffs: Tensor, rows: Tensor) -> Tensor:
    """sum_j coeffs[j] * rows[j, :] for a (k, m) tensor; canonical reduction
    over j, same permutation guarantee as ``weighted_sum``."""
    if coeffs.values.ndim != 1 or rows.values.ndim != 2:
        raise ShapeError(f"collapse_rows: need (k,) and (k, m), got {coeffs.shape} and {rows.shape}")
    if coeffs.shape[0] != rows.shape[0]:
        raise ShapeError(f"collapse_rows: row counts differ, {coeffs.shape} vs {rows.shape}")
    cv, rv = coeffs.values, rows.values
    out = _canonical_sum(cv[:, None] * rv)

    def vjp(g):
        return (np.conj(rv) @ g, np.conj(cv)[:, None] * g[None, :])

    return _make(out, (coeffs, rows), vjp)


def take_rows(a: Tensor, indices) -> Tensor:
    """Gather rows (2-d) or entries (1-d) by integer index, with repeats."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("take_rows: indices must be one-dimensional")
    if a.values.ndim not in (1, 2):
        raise ShapeError(f"take_rows: operand must be 1-d or 2-d, got {a.shape}")
    n = a.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ShapeError(f"take_rows: index out of range for first axis of length {n}")
    av = a.values
    shape = a.shape

    def vjp(g):
        buf = np.zeros(shape, dtype=_COMPLEX)
        np.add.at(buf, idx, g)
        return (buf,)

    return _make(av[idx].copy(), (a,), vjp)


def slice_vec(a: Tensor, start: int, stop: int) -> Tensor:
    if a.values.ndim != 1:
        raise ShapeError(f"slice_vec: operand must be 1-d, got {a.shape}")
    n = a.shape[0]
    if not (0 <= start <= stop <= n):
        raise ShapeError(f"slice_vec: bad range [{start}:{stop}] for length {n}")

    def vjp(g):
        buf = np.zeros(n, dtype=_COMPLEX)
        buf[start:stop] = g
        return (buf,)

    return _make(a.values[start:stop].copy(), (a,), vjp)


def stack_scalars(scalars: Sequence[Tensor]) -> Tensor:
    """Stack 0-d nodes into a vector."""
    scalars = list(scalars)
    if not scalars:
        raise ArityError("stack_scalars: empty input")
    for s in scalars:
        if s.shape != ():
            raise ShapeError(f"stack_scalars: all inputs must be 0-d, got {s.shape}")
    values = np.array([s.values for s in scalars], dtype=_COMPLEX)

    def vjp(g):
        return tuple(np.asarray(g[j], dtype=_COMPLEX) for j in range(len(scalars)))

    return _make(values, tuple(scalars), vjp)


def broadcast_rows(v: Tensor, k: int) -> Tensor:
    """Tile a vector (m,) into k identical rows (k, m)."""
    if v.values.ndim != 1:
        raise ShapeError(f"broadcast_rows: operand must be 1-d, got {v.shape}")
    if k < 1:
        raise ArityError("broadcast_rows: need k >= 1")
    out = np.tile(v.values, (k, 1))
    return _make(out, (v,), lambda g: (g.sum(axis=0),))


# ---------------------------------------------------------------------------
# nonlinearities and loss

def relu(a: Tensor) -> Tensor:
    """Zero out entries with non-positive real part (meant for real data)."""
    mask = (a.values.real > 0).astype(np.float64)
    return _make(a.values * mask, (a,), lambda g: (g * mask,))


def tanh(a: Tensor) -> Tensor:
    w = np.tanh(a.values)
    dconj = np.conj(1.0 - w * w)
    return _make(w, (a,), lambda g: (dconj * g,))


def softmax(a: Tensor) -> Tensor:
    """Softmax over a real-valued vector."""
    if a.values.ndim != 1:
        raise ShapeError(f"softmax: operand must be 1-d, got {a.shape}")
    x = a.values.real
    ex = np.exp(x - x.max())
    y = ex / ex.sum()

    def vjp(g):
        gr = g.real
        inner = float((gr * y).sum())
        return ((y * (gr - inner)).astype(_COMPLEX),)

    return _make(y.astype(_COMPLEX), (a,), vjp)


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Softmax cross-entropy of a real logit vector against an index label."""
    if logits.values.ndim != 1:
        raise ShapeError(f"cross_entropy: logits must be 1-d, got {logits.shape}")
    n = logits.shape[0]
    if not (0 <= label < n):
        raise LabelError(f"label {label} outside [0, {n})")
    x = logits.values.real
    m = x.max()
    lse = m + np.log(np.exp(x - m).sum())
    loss = lse - x[label]
    probs = np.exp(x - lse)

    def vjp(g):
        gr = complex(g).real
        gx = probs.copy()
        gx[label] -= 1.0
        return ((gr * gx).astype(_COMPLEX),)

    return _make(np.asarray(loss, dtype=_COMPLEX), (logits,), vjp)

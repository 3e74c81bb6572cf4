"""Differentiable statevector simulation.

A ``Statevector`` wraps the qubit count and a complex amplitude tensor; the
functions here are autodiff ops. Gradients flow through both the state and
the gate angles. Register layout is little-endian: qubit 0 is the least
significant bit of the basis index. Registers are capped at 14 qubits; this
is a desk-scale simulator and the cap keeps any single state under a
quarter-million amplitudes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tensor
from .errors import (
    CapacityError,
    DegenerateStateError,
    QubitIndexError,
    ShapeError,
    WiringError,
)

MAX_QUBITS = 14

__all__ = [
    "MAX_QUBITS", "Statevector", "AnsatzAngles", "zero_state",
    "apply_ry", "apply_crx", "apply_ansatz14", "ansatz_rows",
    "pauli_expectations",
]


@dataclass
class Statevector:
    """q qubits' worth of amplitudes, little-endian basis order."""

    q: int
    amps: Tensor

    def __post_init__(self):
        if not (1 <= self.q <= MAX_QUBITS):
            raise CapacityError(f"q={self.q} outside supported range 1..{MAX_QUBITS}")
        if self.amps.shape != (1 << self.q,):
            raise ShapeError(
                f"statevector for q={self.q} needs shape ({1 << self.q},), got {self.amps.shape}"
            )

    @property
    def dim(self) -> int:
        return 1 << self.q

    def norm_sq(self) -> float:
        v = self.amps.values
        return float(np.vdot(v, v).real)


@dataclass
class AnsatzAngles:
    """Angle bundle for the entangling template: 4 * layers * q real values."""

    theta: Tensor
    q: int
    layers: int

    def __post_init__(self):
        want = kernels.angle_count(self.q, self.layers)
        if self.theta.shape != (want,):
            raise ShapeError(
                f"template on q={self.q} with {self.layers} layer(s) needs "
                f"{want} angles, got shape {self.theta.shape}"
            )
        if np.any(self.theta.values.imag != 0.0):
            raise ShapeError("ansatz angles must be real (zero imaginary parts)")


def zero_state(q: int) -> Statevector:
    """|0...0> on q qubits."""
    if not (1 <= q <= MAX_QUBITS):
        raise CapacityError(f"q={q} outside supported range 1..{MAX_QUBITS}")
    amps = np.zeros(1 << q, dtype=np.complex128)
    amps[0] = 1.0
    return Statevector(q, ad.tensor(amps))


def _check_qubit(q: int, k: int, name: str = "qubit") -> None:
    if not (0 <= k < q):
        raise QubitIndexError(f"{name} {k} outside register of {q} qubits")


def _angle_operand(angle) -> tuple[Tensor | None, float | np.ndarray]:
    """Accept a plain real number or a 0-d tensor node as a gate angle."""
    if isinstance(angle, Tensor):
        if angle.shape != ():
            raise ShapeError(f"gate angle must be 0-d, got shape {angle.shape}")
        return angle, float(angle.values.real)
    return None, float(angle)


def apply_ry(state: Statevector, qubit: int, angle) -> Statevector:
    """RY(angle) on one qubit. ``angle`` is a float or a 0-d tensor."""
    _check_qubit(state.q, qubit)
    node, th = _angle_operand(angle)
    q = state.q
    sv = state.amps.values
    out = kernels.ry_rows(sv.reshape(1, -1), q, qubit, th).reshape(-1)

    if node is None:
        out_t = ad._make(out, (state.amps,), lambda g: (
            kernels.ry_rows(g.reshape(1, -1), q, qubit, -th).reshape(-1),
        ))
    else:
        def vjp(g):
            g2 = g.reshape(1, -1)
            g_state = kernels.ry_rows(g2, q, qubit, -th).reshape(-1)
            d = kernels.dry_rows(sv.reshape(1, -1), q, qubit, th).reshape(-1)
            g_ang = np.asarray(np.vdot(g, d).real, dtype=np.complex128)
            return (g_state, g_ang)

        out_t = ad._make(out, (state.amps, node), vjp)
    return Statevector(q, out_t)


def apply_crx(state: Statevector, control: int, target: int, angle) -> Statevector:
    """Controlled-RX(angle): RX on ``target`` where ``control`` is set."""
    _check_qubit(state.q, control, "control")
    _check_qubit(state.q, target, "target")
    if control == target:
        raise WiringError(f"control and target coincide on qubit {control}")
    node, th = _angle_operand(angle)
    q = state.q
    sv = state.amps.values
    out = kernels.crx_rows(sv.reshape(1, -1), q, control, target, th).reshape(-1)

    if node is None:
        out_t = ad._make(out, (state.amps,), lambda g: (
            kernels.crx_rows(g.reshape(1, -1), q, control, target, -th).reshape(-1),
        ))
    else:
        def vjp(g):
            g2 = g.reshape(1, -1)
            g_state = kernels.crx_rows(g2, q, control, target, -th).reshape(-1)
            d = kernels.dcrx_rows(sv.reshape(1, -1), q, control, target, th).reshape(-1)
            g_ang = np.asarray(np.vdot(g, d).real, dtype=np.complex128)
            return (g_state, g_ang)

        out_t = ad._make(out, (state.amps, node), vjp)
    return Statevector(q, out_t)


def ansatz_rows(states: Tensor, angles: Tensor, q: int, layers: int) -> Tensor:
    """Fused template application over a batch.

    ``states``: (k, 2**q) tensor of statevector rows; ``angles``: (k, L)
    per-row angle matrix with L = 4 * layers * q. One tape node covers the
    whole gate sequence; the backward pass re-derives intermediate states by
    un-applying gates (adjoint sweep) instead of storing them.
    """
    if q < 2:
        raise WiringError("the entangling template needs q >= 2")
    if states.values.ndim != 2 or states.shape[1] != (1 << q):
        raise ShapeError(f"ansatz_rows: states must be (k, {1 << q}), got {states.shape}")
    want = kernels.angle_count(q, layers)
    if angles.values.ndim != 2 or angles.shape != (states.shape[0], want):
        raise ShapeError(
            f"ansatz_rows: angles must be ({states.shape[0]}, {want}), got {angles.shape}"
        )
    th = angles.values.real.astype(np.float64)
    out = kernels.ansatz_rows_forward(states.values, q, layers, th)

    def vjp(g):
        g_state, g_ang = kernels.ansatz_rows_vjp(out, q, layers, th, g)
        return (g_state, g_ang.astype(np.complex128))

    return ad._make(out, (states, angles), vjp)


def apply_ansatz14(state: Statevector, angles, layers: int | None = None) -> Statevector:
    """Apply the entangling template to a single state.

    ``angles`` is an ``AnsatzAngles`` bundle, or a flat (4*layers*q,) tensor
    together with an explicit ``layers`` argument.
    """
    if isinstance(angles, AnsatzAngles):
        if angles.q != state.q:
            raise ShapeError(f"angle bundle is for q={angles.q}, state has q={state.q}")
        theta, layers = angles.theta, angles.layers
    else:
        if layers is None:
            raise ShapeError("layers must be given when passing a flat angle tensor")
        theta = angles
    if state.q < 2:
        raise WiringError("the entangling template needs q >= 2")
    want = kernels.angle_count(state.q, layers)
    if theta.shape != (want,):
        raise ShapeError(f"expected {want} angles for q={state.q}, layers={layers}, "
                         f"got shape {theta.shape}")
    rows = ad.reshape(state.amps, (1, state.dim))
    arows = ad.reshape(theta, (1, want))
    out = ansatz_rows(rows, arows, state.q, layers)
    return Statevector(state.q, ad.reshape(out, (state.dim,)))


def pauli_expectations(state: Statevector) -> Tensor:
    """Readout features: [<X_0>..<X_{q-1}>, <Y_0>.., <Z_0>..] of the
    normalized input, a real (3q,) tensor.

    Differentiated with the full quotient rule (the internal normalization
    by <psi|psi> is part of the op), so gradients are exact even when the
    caller passes a not-quite-normalized state.
    """
    q = state.q
    psi = state.amps.values
    norm_sq = float(np.vdot(psi, psi).real)
    if norm_sq <= 1e-12:
        raise DegenerateStateError(
            f"cannot read out a state with squared norm {norm_sq:.3e}"
        )
    feats = kernels.pauli_expectations_raw(psi, q)

    def vjp(g):
        gr = g.real
        acc = np.zeros_like(psi)
        for k in range(q):
            for row, axis in ((k, "x"), (q + k, "y"), (2 * q + k, "z")):
                w = float(gr[row])
                if w == 0.0:
                    continue
                pv = kernels.pauli_apply(psi, q, axis, k)
                acc += w * (2.0 / norm_sq) * (pv - feats[row] * psi)
        return (acc,)

    return ad._make(feats.astype(np.complex128), (state.amps,), vjp)

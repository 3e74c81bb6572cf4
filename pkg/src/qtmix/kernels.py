"""Raw statevector gate kernels.

Everything here works on batches of statevectors laid out as (k, 2**q)
complex128 arrays, row-major, little-endian qubit order: qubit 0 is the
least significant bit of the basis index. Gates are applied with strided
views; no 2**q x 2**q matrix is ever materialized. The tape ops in
``circuits`` wrap these functions; tests compare them against dense
Kronecker oracles.

Gate conventions (theta real):

    RY(theta)  = [[cos(theta/2), -sin(theta/2)],
                  [sin(theta/2),  cos(theta/2)]]
    RX(theta)  = [[cos(theta/2), -1j*sin(theta/2)],
                  [-1j*sin(theta/2), cos(theta/2)]]
    CRX(theta) = RX(theta) on the target, on the subspace where the
                 control bit is 1; identity elsewhere.
"""

from __future__ import annotations

import numpy as np

_C = np.complex128


def _bit_views(arr: np.ndarray, q: int, qubit: int):
    """Split (k, 2**q) into the two half-spaces of one bit.

    Returns views (a0, a1) of shape (k, 2**(q-1-qubit), 2**qubit): a0 holds
    amplitudes with the bit clear, a1 with it set.
    """
    k = arr.shape[0]
    hi = 1 << (q - 1 - qubit)
    lo = 1 << qubit
    v = arr.reshape(k, hi, 2, lo)
    return v[:, :, 0, :], v[:, :, 1, :]


def _theta_cs(theta, ndim_tail: int):
    """cos/sin of theta/2, shaped to broadcast over a batch with
    ``ndim_tail`` trailing axes. theta is a scalar or a (k,) array."""
    th = np.asarray(theta, dtype=np.float64)
    c = np.cos(th / 2.0)
    s = np.sin(th / 2.0)
    if th.ndim == 1:
        shape = (th.shape[0],) + (1,) * ndim_tail
        c = c.reshape(shape)
        s = s.reshape(shape)
    return c, s


def ry_rows(arr: np.ndarray, q: int, qubit: int, theta) -> np.ndarray:
    """Apply RY(theta) on ``qubit`` to every row. theta: scalar or (k,)."""
    a0, a1 = _bit_views(arr, q, qubit)
    c, s = _theta_cs(theta, a0.ndim - 1)
    out = np.empty_like(arr)
    o0, o1 = _bit_views(out, q, qubit)
    o0[...] = c * a0 - s * a1
    o1[...] = s * a0 + c * a1
    return out


def dry_rows(arr: np.ndarray, q: int, qubit: int, theta) -> np.ndarray:
    """Apply d RY(theta) / d theta to every row."""
    a0, a1 = _bit_views(arr, q, qubit)
    c, s = _theta_cs(theta, a0.ndim - 1)
    out = np.empty_like(arr)
    o0, o1 = _bit_views(out, q, qubit)
    o0[...] = 0.5 * (-s * a0 - c * a1)
    o1[...] = 0.5 * (c * a0 - s * a1)
    return out


def _pair_views(arr: np.ndarray, q: int, control: int, target: int):
    """Views of the control=1 subspace split by the target bit.

    Returns (s0, s1): amplitudes with control set and target clear/set,
    each of shape (k, A, B, C) for the appropriate strides.
    """
    k = arr.shape[0]
    hi, lo = max(control, target), min(control, target)
    a = 1 << (q - 1 - hi)
    b = 1 << (hi - 1 - lo)
    c = 1 << lo
    v = arr.reshape(k, a, 2, b, 2, c)
    if control == hi:
        return v[:, :, 1, :, 0, :], v[:, :, 1, :, 1, :]
    return v[:, :, 0, :, 1, :], v[:, :, 1, :, 1, :]


def crx_rows(arr: np.ndarray, q: int, control: int, target: int, theta) -> np.ndarray:
    """Apply CRX(theta) with the given control/target to every row."""
    s0, s1 = _pair_views(arr, q, control, target)
    c, s = _theta_cs(theta, s0.ndim - 1)
    out = arr.copy()
    o0, o1 = _pair_views(out, q, control, target)
    o0[...] = c * s0 - 1j * s * s1
    o1[...] = -1j * s * s0 + c * s1
    return out


def dcrx_rows(arr: np.ndarray, q: int, control: int, target: int, theta) -> np.ndarray:
    """Apply d CRX(theta) / d theta to every row (zero on the control=0
    subspace)."""
    s0, s1 = _pair_views(arr, q, control, target)
    c, s = _theta_cs(theta, s0.ndim - 1)
    out = np.zeros_like(arr)
    o0, o1 = _pair_views(out, q, control, target)
    o0[...] = 0.5 * (-s * s0 - 1j * c * s1)
    o1[...] = 0.5 * (-1j * c * s0 - s * s1)
    return out


# ---------------------------------------------------------------------------
# hardware-efficient entangling template ("ansatz 14" in the usual circuit
# catalogs): per layer, RY on every qubit, a CRX ring downward, RY on every
# qubit again, and a CRX ring upward. 4 * layers * q angles in total.

def ansatz_sequence(q: int, layers: int) -> list[tuple]:
    """Flat gate list [(kind, wires, angle_index), ...] defining the
    template. This is the single source of truth for the gate order and the
    angle layout; everything else (forward, adjoint, dense oracle) walks it.

    Per layer, angles are consumed in four blocks of q:
      block 0: RY on qubit i, i ascending
      block 1: CRX ring A, control i -> target (i+1) mod q, applied for
               i = q-1 down to 0; angle index = block offset + i
      block 2: RY on qubit i, i ascending
      block 3: CRX ring B, control i -> target (i-1) mod q, applied for
               i = 0 up to q-1; angle index = block offset + i
    """
    seq: list[tuple] = []
    base = 0
    for _ in range(layers):
        for i in range(q):
            seq.append(("ry", i, base + i))
        base += q
        for i in range(q - 1, -1, -1):
            seq.append(("crx", (i, (i + 1) % q), base + i))
        base += q
        for i in range(q):
            seq.append(("ry", i, base + i))
        base += q
        for i in range(q):
            seq.append(("crx", (i, (i - 1) % q), base + i))
        base += q
    return seq


def angle_count(q: int, layers: int) -> int:
    return 4 * layers * q


def _col(angles: np.ndarray, idx: int):
    """Angle(s) for one gate: column of a (k, L) matrix or entry of (L,)."""
    if angles.ndim == 2:
        return angles[:, idx]
    return angles[idx]


def ansatz_rows_forward(arr: np.ndarray, q: int, layers: int, angles: np.ndarray) -> np.ndarray:
    """Run the template over a (k, 2**q) batch.

    ``angles``: (k, 4*layers*q) for per-row angles, or (4*layers*q,) shared.
    """
    out = arr
    for kind, wires, idx in ansatz_sequence(q, layers):
        th = _col(angles, idx)
        if kind == "ry":
            out = ry_rows(out, q, wires, th)
        else:
            out = crx_rows(out, q, wires[0], wires[1], th)
    return out


def ansatz_rows_vjp(out_arr: np.ndarray, q: int, layers: int, angles: np.ndarray,
                    g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint sweep for the template.

    Given the forward *output* batch and the output gradient, un-applies the
    gates one by one (they are unitary, so the pre-gate state is recovered
    exactly instead of being stored) and accumulates per-angle gradients:

        dL/dtheta_t = Re( sum_i conj(g_i) * (dG_t/dtheta applied to the
                          pre-gate state)_i )

    Returns (g_input_rows, g_angles) with g_angles real-valued, shaped like
    ``angles``.
    """
    psi = out_arr
    g_ang = np.zeros(angles.shape, dtype=np.float64)
    for kind, wires, idx in reversed(ansatz_sequence(q, layers)):
        th = _col(angles, idx)
        if kind == "ry":
            psi = ry_rows(psi, q, wires, -th)
            d = dry_rows(psi, q, wires, th)
            upd = (np.conj(g) * d).sum(axis=1).real
            g = ry_rows(g, q, wires, -th)
        else:
            ctl, tgt = wires
            psi = crx_rows(psi, q, ctl, tgt, -th)
            d = dcrx_rows(psi, q, ctl, tgt, th)
            upd = (np.conj(g) * d).sum(axis=1).real
            g = crx_rows(g, q, ctl, tgt, -th)
        if angles.ndim == 2:
            g_ang[:, idx] = upd
        else:
            g_ang[idx] = upd.sum()
    return g, g_ang


# ---------------------------------------------------------------------------
# Pauli action and expectations

def pauli_apply(vec: np.ndarray, q: int, axis: str, qubit: int) -> np.ndarray:
    """Apply a single-qubit Pauli to a (2**q,) vector."""
    arr = vec.reshape(1, -1)
    a0, a1 = _bit_views(arr, q, qubit)
    out = np.empty_like(arr)
    o0, o1 = _bit_views(out, q, qubit)
    if axis == "x":
        o0[...] = a1
        o1[...] = a0
    elif axis == "y":
        o0[...] = -1j * a1
        o1[...] = 1j * a0
    elif axis == "z":
        o0[...] = a0
        o1[...] = -a1
    else:
        raise ValueError(f"unknown Pauli axis {axis!r}")
    return out.reshape(-1)


def pauli_expectations_raw(vec: np.ndarray, q: int) -> np.ndarray:
    """All 3q expectations [X_0..X_{q-1}, Y_0.., Z_0..] of vec / ||vec||,
    as float64. Caller guarantees the norm is usable."""
    norm_sq = float(np.vdot(vec, vec).real)
    arr = vec.reshape(1, -1)
    out = np.empty(3 * q, dtype=np.float64)
    for k in range(q):
        a0, a1 = _bit_views(arr, q, k)
        cross = complex(np.vdot(a0, a1))       # sum conj(a0) * a1
        out[k] = 2.0 * cross.real
        out[q + k] = 2.0 * cross.imag
        out[2 * q + k] = float(np.vdot(a0, a0).real - np.vdot(a1, a1).real)
    return out / norm_sq

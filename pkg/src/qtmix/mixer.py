"""The quantum token mixer.

Per window: the raw complex mixing coefficients are masked and
l1-normalized, each surviving token contributes one template unitary, and
the mixing operator

    M = sum_j b_j * U_j

is applied as a sum of statevector evolutions (M itself is never
materialized). A degree-d polynomial sum_k c_k M^k is evaluated on |0...0>
by power accumulation: exactly d applications of M, accumulating the
partial powers with the polynomial coefficients. The squared norm of the
resulting (sub-normalized) state is recorded as ``pre_norm`` before the
state is renormalized, pushed through a trainable feed-forward template,
and read out as per-qubit X/Y/Z expectations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tensor
from .circuits import AnsatzAngles, Statevector, ansatz_rows, apply_ansatz14, pauli_expectations, zero_state
from .errors import (
    ArityError,
    CollapsedStateError,
    DegenerateCoefficientError,
    EmptyWindowError,
    ShapeError,
)

COLLAPSE_THRESHOLD = 1e-12

__all__ = [
    "COLLAPSE_THRESHOLD", "MixerParams", "MixerOutput",
    "l1_normalize", "apply_m", "apply_polynomial", "mix_window",
]


@dataclass
class MixerParams:
    """Trainable mixer state: complex mixing coefficients (one per window
    position), complex polynomial coefficients (degree+1 of them), and the
    real feed-forward template angles."""

    lcu_coeffs: Tensor          # (n,) complex
    poly_coeffs: Tensor         # (degree+1,) complex
    ff_angles: AnsatzAngles

    @property
    def window(self) -> int:
        return self.lcu_coeffs.shape[0]

    @property
    def degree(self) -> int:
        return self.poly_coeffs.shape[0] - 1


@dataclass
class MixerOutput:
    features: Tensor            # (3q,) real readout
    pre_norm: Tensor            # 0-d real, squared norm before renormalizing
    state: Statevector          # final normalized, feed-forwarded state
    lcu_weights: Tensor         # (n,) coefficients actually used in the sum


def _mask_array(mask, n: int) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    if m.shape != (n,):
        raise ShapeError(f"mask must have shape ({n},), got {m.shape}")
    return m


def l1_normalize(coeffs: Tensor, mask) -> Tensor:
    """Mask, then scale so the magnitudes sum to one.

    Masked entries are forced to exactly zero before normalization, so they
    receive exactly zero mixing weight. Raises if everything is masked or
    the surviving total magnitude vanishes.
    """
    if coeffs.values.ndim != 1:
        raise ShapeError(f"coefficients must be 1-d, got {coeffs.shape}")
    n = coeffs.shape[0]
    m = _mask_array(mask, n)
    if not m.any():
        raise EmptyWindowError("every position of the window is masked")
    masked = ad.mul_const(coeffs, m.astype(np.float64))
    total = ad.sumall(ad.absval(masked))
    if float(total.values.real) <= 1e-12:
        raise DegenerateCoefficientError(
            f"surviving coefficient magnitude {float(total.values.real):.3e} is too small"
        )
    return ad.scalar_mul(ad.spow(total, -1.0), masked)


def _check_token_angles(token_angles: Tensor, n: int, q: int, layers: int) -> None:
    want = kernels.angle_count(q, layers)
    if token_angles.values.ndim != 2 or token_angles.shape != (n, want):
        raise ShapeError(
            f"token angles must be ({n}, {want}) for q={q}, layers={layers}, "
            f"got {token_angles.shape}"
        )


def _apply_m_rows(amps: Tensor, weights: Tensor, token_angles: Tensor,
                  q: int, layers: int) -> Tensor:
    """One application of the mixing operator to a (2**q,) amplitude tensor.

    ``weights``/``token_angles`` are already restricted to active tokens.
    All token unitaries run as one batched template application.
    """
    k = weights.shape[0]
    rows = ad.broadcast_rows(amps, k)
    evolved = ansatz_rows(rows, token_angles, q, layers)
    return ad.collapse_rows(weights, evolved)


def apply_m(state: Statevector, b_norm: Tensor, token_angles: Tensor,
            layers: int, active=None) -> Statevector:
    """Apply M = sum_j b_norm[j] U_j to a state.

    ``token_angles`` has one row of template angles per token. ``active``
    optionally lists the token indices to keep; dropped tokens must carry
    exactly zero weight (the caller masks them), so skipping them changes
    nothing but cost.
    """
    n = b_norm.shape[0]
    _check_token_angles(token_angles, n, state.q, layers)
    if active is not None:
        idx = np.asarray(active, dtype=np.int64)
        if idx.size == 0:
            raise EmptyWindowError("no active tokens to mix")
        weights = ad.take_rows(b_norm, idx)
        angles = ad.take_rows(token_angles, idx)
    else:
        weights, angles = b_norm, token_angles
    out = _apply_m_rows(state.amps, weights, angles, state.q, layers)
    return Statevector(state.q, out)


def apply_polynomial(b_norm: Tensor, token_angles: Tensor, poly_coeffs: Tensor,
                     q: int, layers: int, active=None) -> Statevector:
    """Evaluate sum_k c_k M^k |0...0> with exactly ``degree`` applications
    of M, accumulating the running powers."""
    if poly_coeffs.values.ndim != 1 or poly_coeffs.shape[0] < 1:
        raise ShapeError(f"polynomial coefficients must be a non-empty vector, got {poly_coeffs.shape}")
    degree = poly_coeffs.shape[0] - 1
    state = zero_state(q)
    powers = [state.amps]
    for _ in range(degree):
        state = apply_m(state, b_norm, token_angles, layers, active=active)
        powers.append(state.amps)
    acc = ad.weighted_sum(poly_coeffs, powers)
    return Statevector(q, acc)


def mix_window(token_angles: Tensor, params: MixerParams, mask, *, q: int,
               embed_layers: int, window_id=None, normalize_lcu: bool = True) -> MixerOutput:
    """Full mixer pipeline for one window.

    token_angles: (n, 4*embed_layers*q) tensor of per-token template angles.
    mask: length-n booleans, True where a real token sits.
    normalize_lcu: when False (ablation), the masked raw coefficients are
    used without l1 normalization.
    """
    n = params.window
    _check_token_angles(token_angles, n, q, embed_layers)
    m = _mask_array(mask, n)
    if not m.any():
        raise EmptyWindowError(
            f"window {window_id!r}: every position is masked" if window_id is not None
            else "every position of the window is masked")

    if normalize_lcu:
        weights = l1_normalize(params.lcu_coeffs, m)
    else:
        weights = ad.mul_const(params.lcu_coeffs, m.astype(np.float64))

    active = np.flatnonzero(m) if not m.all() else None
    poly_state = apply_polynomial(weights, token_angles, params.poly_coeffs,
                                  q, embed_layers, active=active)
    pre_norm = ad.square_norm(poly_state.amps)
    if float(pre_norm.values.real) < COLLAPSE_THRESHOLD:
        where = f"window {window_id!r}" if window_id is not None else "window"
        raise CollapsedStateError(
            f"{where}: polynomial output collapsed (squared norm "
            f"{float(pre_norm.values.real):.3e} < {COLLAPSE_THRESHOLD})"
        )
    normalized = Statevector(q, ad.scalar_mul(ad.spow(pre_norm, -0.5), poly_state.amps))
    final = apply_ansatz14(normalized, params.ff_angles)
    features = pauli_expectations(final)
    return MixerOutput(features=features, pre_norm=pre_norm, state=final,
                       lcu_weights=weights)

"""Shared test utilities: finite-difference gradient checking.

The probe loss for an op with output T is L = Re(sum(w * T)) for a frozen
random complex weight w. Its building blocks (mul, sumall, real_part) have
closed-form gradient tests of their own in test_autodiff.py, so using them
as the reducer here is not circular.
"""

from __future__ import annotations

import numpy as np

from qtmix import autodiff as ad


def rand_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def probe_loss(out, weight):
    """Real scalar probe: Re(sum(weight * out))."""
    w = ad.tensor(np.asarray(weight, dtype=np.complex128))
    return ad.real_part(ad.sumall(ad.mul(out, w)))


def fd_gradients(fn, leaves, weight, h=1e-6, complex_leaves=None):
    """Central-difference gradients of Re(sum(weight * fn(leaves))).

    ``fn`` maps a list of leaf Tensors to an output Tensor. Each leaf is
    perturbed per real coordinate; leaves listed in ``complex_leaves`` (by
    position) get their imaginary coordinates perturbed too. Returns one
    complex gradient array per leaf (imag part zero for real-only leaves).
    """
    if complex_leaves is None:
        complex_leaves = set(range(len(leaves)))

    def loss_value():
        fresh = [ad.tensor(l.values) for l in leaves]
        out = fn(fresh)
        return float(probe_loss(out, weight).values.real)

    grads = []
    for li, leaf in enumerate(leaves):
        g = np.zeros(leaf.shape, dtype=np.complex128)
        flat = leaf.values.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_value()
            flat[i] = orig - h
            lm = loss_value()
            flat[i] = orig
            gflat[i] = (lp - lm) / (2 * h)
            if li in complex_leaves:
                flat[i] = orig + 1j * h
                lp = loss_value()
                flat[i] = orig - 1j * h
                lm = loss_value()
                flat[i] = orig
                gflat[i] += 1j * (lp - lm) / (2 * h)
        grads.append(g)
    return grads


def check_op_gradients(fn, leaves, rng, atol=2e-6, rtol=1e-6, complex_leaves=None):
    """Compare tape gradients of the probe loss against central differences
    for every leaf. Returns the worst absolute error seen."""
    if complex_leaves is None:
        complex_leaves = set(range(len(leaves)))
    with ad.Tape():
        tracked = [ad.parameter(l.values) for l in leaves]
        out = fn(tracked)
        weight = rand_complex(rng, out.shape)
        loss = probe_loss(out, weight)
        ad.backward(loss)
    fd = fd_gradients(fn, leaves, weight, complex_leaves=complex_leaves)
    worst = 0.0
    for li, (t, f) in enumerate(zip(tracked, fd)):
        a = t.grad if t.grad is not None else np.zeros(t.shape, dtype=np.complex128)
        if li not in complex_leaves:
            # real-valued leaf: only the real coordinate was probed
            a, f = a.real, f.real
        err = np.abs(a - f)
        tol = atol + rtol * np.abs(f)
        assert np.all(err <= tol), f"gradient mismatch: max err {err.max():.3e}"
        worst = max(worst, float(err.max()) if err.size else 0.0)
    return worst

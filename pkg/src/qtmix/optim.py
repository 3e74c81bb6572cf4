"""AdamW with decoupled weight decay, plus the cosine learning-rate ramp.

Every parameter tensor stores complex128 values. The optimizer works on
the float64 view of that storage, so each complex entry is treated as an
independent (real, imaginary) pair; for real-constrained parameters the
imaginary half has zero gradient and zero value and stays exactly zero.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .config import OptimizerConfig

# mixing coefficients live on the l1 sphere after normalization; decaying
# them toward zero fights the normalizer for no benefit
DEFAULT_NO_DECAY = ("lcu_coeffs",)


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """Cosine ramp from lr_max (step 0) down to lr_min (last step)."""
    if step < 0:
        raise ValueError(f"step must be >= 0, got {step}")
    span = max(total_steps - 1, 1)
    frac = min(step, span) / span
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + np.cos(np.pi * frac))


class AdamW:
    def __init__(self, named_params: dict[str, Tensor], cfg: OptimizerConfig,
                 no_decay: tuple = DEFAULT_NO_DECAY):
        self.params = dict(named_params)
        self.cfg = cfg
        self.no_decay = frozenset(no_decay)
        self.t = 0
        self.m = {}
        self.v = {}
        for name, tns in self.params.items():
            view = tns.values.view(np.float64)
            self.m[name] = np.zeros_like(view)
            self.v[name] = np.zeros_like(view)

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        """One update. ``grads`` maps parameter names to complex arrays in
        the convention d(loss)/d(real) + i * d(loss)/d(imag); names absent
        from the dict contribute zero gradient (weight decay still runs)."""
        cfg = self.cfg
        self.t += 1
        c1 = 1.0 - cfg.beta1 ** self.t
        c2 = 1.0 - cfg.beta2 ** self.t
        for name, tns in self.params.items():
            g = grads.get(name)
            if g is None:
                gv = np.zeros_like(self.m[name])
            else:
                garr = np.ascontiguousarray(g, dtype=np.complex128)
                if garr.shape != tns.shape:
                    raise ValueError(
                        f"gradient for '{name}' has shape {garr.shape}, "
                        f"parameter has {tns.shape}")
                gv = garr.view(np.float64)
            m, v = self.m[name], self.v[name]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * gv
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * gv * gv
            theta = tns.values.view(np.float64)
            update = (m / c1) / (np.sqrt(v / c2) + cfg.eps)
            if cfg.weight_decay > 0.0 and name not in self.no_decay:
                update = update + cfg.weight_decay * theta
            theta -= lr * update

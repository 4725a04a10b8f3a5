"""Threshold (VTEAM-style) memristor model.

The internal state ``w`` lives in [0, 1]; ``w = 1`` is the low-resistance
(logic 1) state. Resistance is linear in ``w`` and the state only moves while
the device voltage is past one of the two thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

LOGIC_HIGH = 2.0 / 3.0
LOGIC_LOW = 1.0 / 3.0


@dataclass(frozen=True)
class MemristorModelParams:
    v_on: float = 0.971
    v_off: float = -0.7
    k_on: float | None = None  # 1/s; None means calibrate from the drive voltages
    k_off: float | None = None
    alpha: float = 10.0

    def check(self) -> list[str]:
        problems = []
        if not self.v_on > 0:
            problems.append("v_on must be > 0")
        if not self.v_off < 0:
            problems.append("v_off must be < 0")
        if self.k_on is not None and not self.k_on > 0:
            problems.append("k_on must be > 0")
        if self.k_off is not None and not self.k_off > 0:
            problems.append("k_off must be > 0")
        if not self.alpha >= 1:
            problems.append("alpha must be >= 1")
        return problems

    @property
    def calibrated(self) -> bool:
        return self.k_on is not None and self.k_off is not None


def calibrate_rates(model: MemristorModelParams, v_set: float, v_reset: float,
                    cycle_time: float, fraction: float = 0.5) -> MemristorModelParams:
    """Fill in missing ``k_on``/``k_off``.

    Under a constant drive the state equation has a constant right-hand side,
    so a full 0->1 sweep at ``v_set`` takes ``1 / dwdt(v_set)``. The rates are
    chosen so that sweep (and the 1->0 sweep at ``v_reset``) lasts
    ``fraction * cycle_time``.
    """
    if v_set <= model.v_on or v_reset >= model.v_off:
        raise ValueError("drive voltages must exceed the switching thresholds to calibrate")
    duration = fraction * cycle_time
    k_on = model.k_on
    k_off = model.k_off
    if k_on is None:
        k_on = 1.0 / (duration * ((v_set - model.v_on) / model.v_on) ** model.alpha)
    if k_off is None:
        k_off = 1.0 / (duration * ((v_reset - model.v_off) / model.v_off) ** model.alpha)
    return replace(model, k_on=k_on, k_off=k_off)


def dwdt(v, model: MemristorModelParams):
    """State derivative for device voltage ``v`` (scalar or array).

    Positive ``v`` drives ``w`` towards 1. Zero inside the threshold window.
    """
    if not model.calibrated:
        raise ValueError("model rates are not calibrated")
    v = np.asarray(v, dtype=float)
    over_on = np.maximum(v - model.v_on, 0.0) / model.v_on
    over_off = np.maximum(model.v_off - v, 0.0) / -model.v_off
    out = model.k_on * over_on ** model.alpha - model.k_off * over_off ** model.alpha
    return out if out.ndim else float(out)


def resistance(w, r_on: float, r_off: float):
    return r_off + w * (r_on - r_off)


def threshold_logic(w: float) -> int | None:
    """Read a state as logic: 1, 0, or ``None`` for the undefined middle band."""
    if w >= LOGIC_HIGH:
        return 1
    if w <= LOGIC_LOW:
        return 0
    return None

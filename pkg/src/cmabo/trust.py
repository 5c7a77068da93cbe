"""Success/failure-driven scale factor for trust-region style local regions."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class TrustScaleState:
    length: float = 0.8
    succ_count: int = 0
    fail_count: int = 0
    tau_succ: int = 3
    tau_fail: int = 4
    length_min: float = 2.0**-7
    length_max: float = 1.6
    needs_restart: bool = False


def failure_tolerance(d: int, batch: int = 1) -> int:
    return math.ceil(max(4.0 / batch, d / batch))


def init_scale(
    d: int,
    batch: int = 1,
    length_init: float = 0.8,
    length_min: float = 2.0**-7,
    length_max: float = 1.6,
    tau_succ: int = 3,
) -> TrustScaleState:
    if d < 1 or batch < 1:
        raise ValueError(f"need d >= 1 and batch >= 1, got d={d}, batch={batch}")
    return TrustScaleState(
        length=length_init,
        tau_succ=tau_succ,
        tau_fail=failure_tolerance(d, batch),
        length_min=length_min,
        length_max=length_max,
    )


def record(state: TrustScaleState, improved: bool) -> TrustScaleState:
    """Feed one success/failure outcome; doubles or halves L at the thresholds."""
    if state.needs_restart:
        raise RuntimeError("trust scale collapsed below its minimum; restart before recording")
    if improved:
        succ = state.succ_count + 1
        if succ >= state.tau_succ:
            return replace(state, length=min(2.0 * state.length, state.length_max), succ_count=0, fail_count=0)
        return replace(state, succ_count=succ, fail_count=0)
    fail = state.fail_count + 1
    if fail >= state.tau_fail:
        length = state.length / 2.0
        return replace(state, length=length, succ_count=0, fail_count=0,
                       needs_restart=length < state.length_min)
    return replace(state, succ_count=0, fail_count=fail)


def is_improvement(value: float, best: float, rel_tol: float = 1e-3) -> bool:
    """Strict improvement over ``best`` by more than ``rel_tol * |best|``."""
    return value < best - rel_tol * abs(best)

"""Adam update and the step learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from src.common.errors import ShapeError
from src.model.pointnet import ModelParams

LR_SCHEDULE: Dict[int, float] = {0: 1e-4, 15: 1e-5, 20: 1e-6}


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: ModelParams,
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam step; returns new params and a new state.

    The inputs are not modified, so a reader holding ``params`` keeps a
    consistent parameter set while the update is computed.
    """

    step = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_arrays: Dict[str, np.ndarray] = {}
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}
    for name in params.names():
        value = params[name]
        grad = np.asarray(grads[name], dtype=np.float64)
        if grad.shape != value.shape:
            raise ShapeError(
                f"Gradiente de {name} con forma {grad.shape}, se esperaba {value.shape}", layer=name
            )
        m = b1 * state.m.get(name, np.zeros_like(value)) + (1.0 - b1) * grad
        v = b2 * state.v.get(name, np.zeros_like(value)) + (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1**step)
        v_hat = v / (1.0 - b2**step)
        new_arrays[name] = value - lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name], new_v[name] = m, v
    return ModelParams(new_arrays), AdamState(b1, b2, state.eps, step, new_m, new_v)


def lr_at(epoch: int, schedule: Mapping[int, float] = LR_SCHEDULE) -> float:
    """Rate of the last schedule entry whose start epoch is <= ``epoch`` (0-based)."""

    starts = sorted(int(k) for k in schedule)
    if not starts:
        raise ValueError("El calendario de tasas de aprendizaje está vacío")
    current = starts[0]
    for start in starts:
        if start <= epoch:
            current = start
    return float(schedule[current])


def parse_schedule(text: str) -> Dict[int, float]:
    """``"0:1e-4,15:1e-5,20:1e-6"`` -> {0: 1e-4, 15: 1e-5, 20: 1e-6}."""

    schedule: Dict[int, float] = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            epoch, rate = item.split(":")
            schedule[int(epoch)] = float(rate)
        except ValueError as exc:
            raise ValueError(f"Entrada de calendario inválida: '{item}' (formato época:tasa)") from exc
    if not schedule:
        raise ValueError("El calendario de tasas de aprendizaje está vacío")
    return schedule

"""Point-set encoder with two linear heads, written directly in numpy.

Per-point MLP of four ReLU layers with shared weights; the four intermediate
features are concatenated (cascade), pooled over points with max and average,
and the pooled vector is mapped linearly to per-joint x and y logits.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.common.errors import ShapeError, StaleCacheError
from src.events.types import DEFAULT_HEIGHT, DEFAULT_JOINTS, DEFAULT_WIDTH, RasterizedPoints

FULL_WIDTHS = (64, 128, 256, 512)
DESK_SCALE = 0.25

_versions = itertools.count(1)


class ModelConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    in_channels: int = 5
    mlp_widths: Optional[Tuple[int, int, int, int]] = None
    width_scale: float = Field(DESK_SCALE, gt=0, le=1)
    num_joints: int = Field(DEFAULT_JOINTS, ge=1)
    width: int = Field(DEFAULT_WIDTH, ge=1)
    height: int = Field(DEFAULT_HEIGHT, ge=1)

    @field_validator("in_channels")
    @classmethod
    def _check_channels(cls, value: int) -> int:
        if value not in (3, 4, 5):
            raise ValueError("in_channels debe ser 3, 4 o 5")
        return value

    @field_validator("mlp_widths")
    @classmethod
    def _check_widths(cls, value):
        if value is not None and any(w <= 0 for w in value):
            raise ValueError("Los anchos del MLP deben ser positivos")
        return value

    @property
    def widths(self) -> Tuple[int, ...]:
        if self.mlp_widths is not None:
            return tuple(self.mlp_widths)
        return tuple(max(1, int(round(w * self.width_scale))) for w in FULL_WIDTHS)

    @property
    def cascade_width(self) -> int:
        return sum(self.widths)

    @property
    def layer_shapes(self) -> List[Tuple[int, int]]:
        dims = [self.in_channels, *self.widths]
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class ModelParams:
    """Named parameter arrays in declaration order.

    ``version`` changes whenever a new parameter set is produced, which lets
    :func:`backward` reject caches built from other parameters.
    """

    arrays: Dict[str, np.ndarray]
    version: int = field(default_factory=lambda: next(_versions))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def names(self) -> List[str]:
        return list(self.arrays)

    def size(self) -> int:
        return int(sum(a.size for a in self.arrays.values()))

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()})

    def touch(self) -> None:
        """Mark in-place edits so that older caches become stale."""

        self.version = next(_versions)


def param_names(cfg: ModelConfig) -> List[str]:
    names = []
    for i in range(len(cfg.widths)):
        names += [f"mlp{i}.weight", f"mlp{i}.bias"]
    return names + ["head_x.weight", "head_x.bias", "head_y.weight", "head_y.bias"]


def param_shapes(cfg: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    shapes: Dict[str, Tuple[int, ...]] = {}
    for i, (fan_in, fan_out) in enumerate(cfg.layer_shapes):
        shapes[f"mlp{i}.weight"] = (fan_in, fan_out)
        shapes[f"mlp{i}.bias"] = (fan_out,)
    pooled = 2 * cfg.cascade_width
    shapes["head_x.weight"] = (pooled, cfg.num_joints * cfg.width)
    shapes["head_x.bias"] = (cfg.num_joints * cfg.width,)
    shapes["head_y.weight"] = (pooled, cfg.num_joints * cfg.height)
    shapes["head_y.bias"] = (cfg.num_joints * cfg.height,)
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """He-normal MLP weights, fan-in scaled heads, zero biases."""

    rng = np.random.Generator(np.random.Philox(seed))
    arrays: Dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".bias"):
            arrays[name] = np.zeros(shape)
        elif name.startswith("mlp"):
            arrays[name] = rng.standard_normal(shape) * np.sqrt(2.0 / shape[0])
        else:
            arrays[name] = rng.standard_normal(shape) * np.sqrt(1.0 / shape[0])
    return ModelParams(arrays)


def point_features(
    points: RasterizedPoints,
    in_channels: int,
    width: int = DEFAULT_WIDTH,
    height: int = DEFAULT_HEIGHT,
    raw: bool = False,
) -> np.ndarray:
    """Model input (N, C): x/W, y/H, t_avg, p_acc/e_max, e_cnt/e_max.

    ``raw`` feeds the stored channels unscaled. Channels outside the point
    set's channel set are zero.
    """

    view = points.feature_view()
    if not raw and len(view):
        e_max = max(float(np.abs(points.e_cnt).max()), 1.0)
        view[:, 0] /= width
        view[:, 1] /= height
        view[:, 3] /= e_max
        view[:, 4] /= e_max
    return view[:, :in_channels]


@dataclass
class ForwardCache:
    params: ModelParams
    version: int
    inputs: np.ndarray
    order: np.ndarray
    pre_activations: List[np.ndarray]
    activations: List[np.ndarray]
    argmax: np.ndarray
    pooled: np.ndarray


class ModelCost(NamedTuple):
    params: int
    macs: int
    point_macs: int
    head_macs: int


def canonical_order(points: np.ndarray) -> np.ndarray:
    """Lexicographic row order (column 0 first); equal rows are interchangeable."""

    return np.lexsort(points.T[::-1])


def forward(
    points: np.ndarray, params: ModelParams, cfg: ModelConfig
) -> Tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Logits (J, W) and (J, H) for one point set of shape (N, C).

    Rows are re-sorted into canonical order before the MLP, so the average
    pool always sums in the same order and the output is bitwise invariant to
    any permutation of the input rows. Max-pool ties go to the lowest
    canonical index.
    """

    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != cfg.in_channels:
        raise ShapeError(
            f"Entrada con forma {X.shape}; se esperaba (N, {cfg.in_channels})", layer="input"
        )
    if X.shape[0] < 1:
        raise ShapeError("El conjunto de puntos está vacío", layer="input")

    order = canonical_order(X)
    h = X[order]
    activations = [h]
    pre_activations = []
    for i in range(len(cfg.widths)):
        weight, bias = params[f"mlp{i}.weight"], params[f"mlp{i}.bias"]
        if weight.shape[0] != h.shape[1] or bias.shape != (weight.shape[1],):
            raise ShapeError(
                f"mlp{i}: pesos {weight.shape} no encajan con entrada de {h.shape[1]} canales",
                layer=f"mlp{i}",
            )
        z = h @ weight + bias
        h = np.maximum(z, 0.0)
        pre_activations.append(z)
        activations.append(h)

    cascade = np.concatenate(activations[1:], axis=1)
    columns = np.arange(cascade.shape[1])
    argmax = np.argmax(cascade, axis=0)
    pooled = np.concatenate([cascade[argmax, columns], cascade.sum(axis=0) / cascade.shape[0]])

    logits = []
    for head, length in (("head_x", cfg.width), ("head_y", cfg.height)):
        weight, bias = params[f"{head}.weight"], params[f"{head}.bias"]
        if weight.shape != (pooled.size, cfg.num_joints * length):
            raise ShapeError(
                f"{head}: pesos {weight.shape}, se esperaba {(pooled.size, cfg.num_joints * length)}",
                layer=head,
            )
        logits.append((pooled @ weight + bias).reshape(cfg.num_joints, length))

    cache = ForwardCache(
        params=params,
        version=params.version,
        inputs=activations[0],
        order=order,
        pre_activations=pre_activations,
        activations=activations,
        argmax=argmax,
        pooled=pooled,
    )
    return logits[0], logits[1], cache


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def kl_loss(
    logits_x: np.ndarray,
    logits_y: np.ndarray,
    target_x: np.ndarray,
    target_y: np.ndarray,
    mask: Optional[np.ndarray] = None,
    batch_size: int = 1,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """KL(target || softmax(logits)) summed over joints and axes.

    Returns the loss divided by ``batch_size`` and its gradients with respect
    to both logit matrices. Masked joints contribute nothing.
    """

    mask = np.ones(logits_x.shape[0], dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    loss = 0.0
    grads = []
    for logits, target in ((logits_x, target_x), (logits_y, target_y)):
        log_p = log_softmax(logits)
        positive = target > 0
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(positive, target * (np.log(np.where(positive, target, 1.0)) - log_p), 0.0)
        loss += float(terms[mask].sum())
        grads.append((np.exp(log_p) - target) * mask[:, None] / batch_size)
    return loss / batch_size, grads[0], grads[1]


def backward(
    cache: ForwardCache,
    grad_x: np.ndarray,
    grad_y: np.ndarray,
    params: Optional[ModelParams] = None,
) -> Dict[str, np.ndarray]:
    """Gradients of every parameter given upstream logit gradients."""

    if cache.params.version != cache.version or (
        params is not None and params.version != cache.version
    ):
        raise StaleCacheError("La caché del forward no corresponde a los parámetros actuales")
    params = cache.params

    grads: Dict[str, np.ndarray] = {}
    pooled = cache.pooled
    gx = np.asarray(grad_x, dtype=np.float64).reshape(-1)
    gy = np.asarray(grad_y, dtype=np.float64).reshape(-1)
    grads["head_x.weight"] = np.outer(pooled, gx)
    grads["head_x.bias"] = gx.copy()
    grads["head_y.weight"] = np.outer(pooled, gy)
    grads["head_y.bias"] = gy.copy()

    d_pooled = params["head_x.weight"] @ gx + params["head_y.weight"] @ gy
    width = pooled.size // 2
    n = cache.inputs.shape[0]
    d_cascade = np.repeat((d_pooled[width:] / n)[None, :], n, axis=0)
    d_cascade[cache.argmax, np.arange(width)] += d_pooled[:width]

    bounds = np.cumsum([0, *[z.shape[1] for z in cache.pre_activations]])
    d_upper = None
    for i in reversed(range(len(cache.pre_activations))):
        dh = d_cascade[:, bounds[i] : bounds[i + 1]]
        if d_upper is not None:
            dh = dh + d_upper
        dz = dh * (cache.pre_activations[i] > 0)
        grads[f"mlp{i}.weight"] = cache.activations[i].T @ dz
        grads[f"mlp{i}.bias"] = dz.sum(axis=0)
        d_upper = dz @ params[f"mlp{i}.weight"].T

    return {name: grads[name] for name in params.names()}


def count_params_macs(cfg: ModelConfig, n_points: int = 2048) -> ModelCost:
    """Closed-form parameter and multiply-accumulate counts.

    MACs count weight multiplications only: ``n_points`` times the per-point
    MLP term plus the two heads. Bias additions are not counted.
    """

    params = sum(int(np.prod(shape)) for shape in param_shapes(cfg).values())
    point_macs = n_points * sum(fan_in * fan_out for fan_in, fan_out in cfg.layer_shapes)
    head_macs = 2 * cfg.cascade_width * cfg.num_joints * (cfg.width + cfg.height)
    return ModelCost(params, point_macs + head_macs, point_macs, head_macs)

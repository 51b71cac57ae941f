"""Alternating optimisation of regression matrices, encoders and binary codes.

One outer iteration:

1. closed-form update of M1, M2 from the current codes H;
2. one pass over a shuffled partition of the training set; for each batch,
   ``T2`` gradient steps on the encoder(s) driven by the output-layer gradients;
3. discrete update of H from the score matrix
   ``Q = alpha2 * S (tanh U + tanh V) + sqrt(b1) Y M1 - sqrt(b2) R M2``,
   with the class-structure term accumulated over every batch of the pass.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, NamedTuple

import numpy as np

from . import encoder as enc
from .dataio import (
    BatchGraph,
    Dataset,
    DualLabels,
    build_batch_graph,
    build_dual_labels,
    class_sizes,
    sample_epoch_batches,
)
from .errors import ConfigError, NumericalAbort
from .numerics import SeededRng, column_topk_indices, make_rng, matmul, tanh_elem
from .objective import LossBreakdown, RegressionPair, breakdown, grad_U, grad_V, loss_P, loss_Q

logger = logging.getLogger(__name__)

MODES = ("dsah1", "dsah2")
VARIANTS = ("full", "A", "B", "C", "D")
RIDGE_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    c: int = 12
    m: int = 64
    T1: int = 50
    T2: int = 3
    lr: float = 1e-3
    alpha1: float = 1e-2
    alpha2: float = 1e3
    beta1: float = 1e2
    beta2: float = 10.0
    mode: str = "dsah1"
    variant: str = "full"
    seed: int = 0
    hidden: tuple[int, ...] = (256,)
    weight_decay: float = enc.DEFAULT_WEIGHT_DECAY

    def validate(self) -> "TrainConfig":
        if self.c < 1 or self.m < 1 or self.T1 < 1 or self.T2 < 1:
            raise ConfigError("c, m, T1 and T2 must all be at least 1")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        for name in ("alpha1", "alpha2", "beta1", "beta2", "weight_decay"):
            if not getattr(self, name) >= 0:
                raise ConfigError(f"{name} must be nonnegative, got {getattr(self, name)}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden widths must be positive")
        return self

    def layer_dims(self, d: int) -> tuple[int, ...]:
        return (d, *self.hidden, self.c)

    # key = value text form, one field per line
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "hidden":
                value = ",".join(str(h) for h in value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            default = getattr(cls, key)
            try:
                if key == "hidden":
                    if isinstance(raw, (tuple, list)):
                        kwargs[key] = tuple(int(h) for h in raw)
                    else:
                        kwargs[key] = tuple(int(t) for t in str(raw).split(",") if t.strip())
                elif isinstance(default, str):
                    kwargs[key] = str(raw).strip()
                elif isinstance(default, int) and not isinstance(default, bool):
                    kwargs[key] = int(raw)
                else:
                    kwargs[key] = float(raw)
            except ValueError:
                raise ConfigError(f"bad value for {key}: {raw!r}") from None
        return cls(**kwargs)

    @classmethod
    def parse(cls, text: str, overrides: dict | None = None) -> "TrainConfig":
        values = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"config line {lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_mapping(values)


class VariantSwitches(NamedTuple):
    beta1: float
    beta2: float
    update_M: bool
    balanced: bool


def apply_variant(config: TrainConfig) -> VariantSwitches:
    """Effective loss switches for an ablation variant.

    A drops the regression term, B keeps only the intra-class labels,
    C keeps only the inter-class labels, D drops the balance constraint.
    """
    v = config.variant
    if v == "full":
        return VariantSwitches(config.beta1, config.beta2, True, True)
    if v == "A":
        return VariantSwitches(0.0, 0.0, False, True)
    if v == "B":
        return VariantSwitches(config.beta1, 0.0, True, True)
    if v == "C":
        return VariantSwitches(0.0, config.beta2, True, True)
    if v == "D":
        return VariantSwitches(config.beta1, config.beta2, True, False)
    raise ConfigError(f"unknown variant {v!r}")


class Projections(NamedTuple):
    Y_pinv: np.ndarray
    R_pinv: np.ndarray


def _normal_pinv(A: np.ndarray) -> np.ndarray:
    """(A'A)^-1 A', with a ridge of 1e-8 when A'A is singular."""
    gram = A.T @ A
    if np.linalg.matrix_rank(gram) < gram.shape[0]:
        gram = gram + RIDGE_EPS * np.eye(gram.shape[0])
    return np.linalg.solve(gram, A.T)


def precompute_projections(duals: DualLabels) -> Projections:
    return Projections(_normal_pinv(duals.Y), _normal_pinv(duals.R))


@dataclass
class TrainState:
    H: np.ndarray
    reg: RegressionPair
    theta1: enc.EncoderParams
    theta2: enc.EncoderParams
    duals: DualLabels
    projections: Projections
    config: TrainConfig
    rng: SeededRng = field(repr=False)
    kappa_sizes: np.ndarray = field(repr=False)
    U_cache: np.ndarray | None = None
    V_cache: np.ndarray | None = None
    history: list[LossBreakdown] = field(default_factory=list)

    @property
    def shared(self) -> bool:
        return self.config.mode == "dsah2"

    @property
    def encoder(self) -> enc.EncoderParams:
        return self.theta1


def balanced_random_codes(n: int, c: int, rng: SeededRng) -> np.ndarray:
    H = -np.ones((n, c), dtype=np.int8)
    for j in range(c):
        H[rng.permutation(n)[: n // 2], j] = 1
    return H


def _check_dataset(dataset: Dataset, config: TrainConfig) -> None:
    if dataset.n == 0:
        raise ConfigError("training set is empty")
    if apply_variant(config).balanced and dataset.n % 2:
        raise ConfigError(
            f"the balance constraint needs an even number of training samples, got n={dataset.n}; "
            "drop one sample or use variant D"
        )


def init_state(dataset: Dataset, config: TrainConfig) -> TrainState:
    config.validate()
    _check_dataset(dataset, config)
    if config.m > dataset.n:
        warnings.warn(f"batch size {config.m} exceeds n={dataset.n}; using m={dataset.n}")
        config = replace(config, m=dataset.n)
    switches = apply_variant(config)
    rng = make_rng(config.seed)
    H = balanced_random_codes(dataset.n, config.c, rng)
    dims = config.layer_dims(dataset.d)
    theta1 = enc.init_params(dims, rng)
    theta2 = theta1 if config.mode == "dsah2" else enc.init_params(dims, rng)
    duals = build_dual_labels(dataset, switches.beta1, switches.beta2)
    return TrainState(
        H=H,
        reg=RegressionPair.zeros(dataset.k, config.c),
        theta1=theta1,
        theta2=theta2,
        duals=duals,
        projections=precompute_projections(duals),
        config=config,
        rng=rng,
        kappa_sizes=class_sizes(dataset),
    )


def update_M(H, duals: DualLabels, projections: Projections) -> RegressionPair:
    H = np.asarray(H, dtype=np.float64)
    M1 = np.sqrt(duals.beta1) * matmul(projections.Y_pinv, H)
    M2 = np.sqrt(duals.beta2) * matmul(projections.R_pinv, H)
    return RegressionPair(M1, M2)


def inner_network_update(
    state: TrainState, graph: BatchGraph, batch_features, config: TrainConfig | None = None
) -> TrainState:
    """``T2`` alternating gradient steps on theta1 (through U) and theta2 (through V)."""
    cfg = config or state.config
    H = state.H.astype(np.float64)
    a1, a2 = cfg.alpha1, cfg.alpha2
    V = enc.forward(state.theta2, batch_features).outputs
    for _ in range(cfg.T2):
        trace = enc.forward(state.theta1, batch_features)
        U = trace.outputs
        gU = grad_U(U, V, H, graph, a1, a2)
        state.theta1 = enc.sgd_step(
            state.theta1, enc.backward(state.theta1, trace, gU), cfg.lr, cfg.weight_decay
        )
        if state.shared:
            state.theta2 = state.theta1
        trace = enc.forward(state.theta2, batch_features)
        V = trace.outputs
        gV = grad_V(U, V, H, graph, a1, a2)
        state.theta2 = enc.sgd_step(
            state.theta2, enc.backward(state.theta2, trace, gV), cfg.lr, cfg.weight_decay
        )
        if state.shared:
            state.theta1 = state.theta2
    state.U_cache = enc.forward(state.theta1, batch_features).outputs
    state.V_cache = enc.forward(state.theta2, batch_features).outputs
    loss = a1 * loss_P(state.U_cache, state.V_cache, graph) + a2 * loss_Q(
        H, state.U_cache, state.V_cache, graph
    )
    if not np.isfinite(loss):
        raise NumericalAbort(
            f"non-finite batch loss {loss}; lower the learning rate (lr={cfg.lr})"
        )
    return state


def code_scores(class_term, duals: DualLabels, reg: RegressionPair, alpha2: float) -> np.ndarray:
    """The score matrix Q; ``class_term`` is sum over batches of S (tanh U + tanh V)."""
    return (
        alpha2 * np.asarray(class_term, dtype=np.float64)
        + np.sqrt(duals.beta1) * matmul(duals.Y, reg.M1)
        - np.sqrt(duals.beta2) * matmul(duals.R, reg.M2)
    )


def update_H(Q, balanced: bool = True) -> np.ndarray:
    """Maximise tr(H'Q) over sign matrices, column-balanced unless told otherwise.

    Balanced: the n/2 largest entries of each column get +1 (ties to the smaller
    row index). Unbalanced: H = sign(Q) with sign(0) = +1.
    """
    Q = np.asarray(Q, dtype=np.float64)
    n, c = Q.shape
    if not balanced:
        return enc.sign_codes(Q)
    if n % 2:
        raise ConfigError(f"balanced code update needs even n, got {n}")
    H = -np.ones((n, c), dtype=np.int8)
    for j in range(c):
        H[column_topk_indices(Q, j, n // 2), j] = 1
    return H


def train(
    dataset: Dataset,
    config: TrainConfig,
    callback: Callable[[int, TrainState], None] | None = None,
) -> TrainState:
    state = init_state(dataset, config)
    cfg = state.config
    switches = apply_variant(cfg)
    for outer in range(cfg.T1):
        if switches.update_M:
            state.reg = update_M(state.H, state.duals, state.projections)
        class_term = np.zeros((dataset.n, cfg.c))
        seen = []
        for batch in sample_epoch_batches(dataset.n, cfg.m, state.rng):
            graph = build_batch_graph(dataset, batch, state.kappa_sizes)
            inner_network_update(state, graph, dataset.features[batch], cfg)
            class_term += matmul(graph.S, tanh_elem(state.U_cache) + tanh_elem(state.V_cache))
            seen.append((graph, state.U_cache, state.V_cache))
        Q = code_scores(class_term, state.duals, state.reg, cfg.alpha2)
        state.H = update_H(Q, balanced=switches.balanced)
        Hf = state.H.astype(np.float64)
        p = sum(loss_P(U, V, g) for g, U, V in seen)
        q = sum(loss_Q(Hf, U, V, g) for g, U, V in seen)
        record = breakdown(Hf, state.duals, state.reg, p, q, cfg.alpha1, cfg.alpha2)
        state.history.append(record)
        logger.debug("outer %d: %s", outer + 1, record.as_row())
        if callback is not None:
            callback(outer, state)
    return state


def write_history(path, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "r_intra", "r_inter", "p", "q", "j_total"])
        for i, rec in enumerate(history, start=1):
            row = rec.as_row()
            writer.writerow([i] + [repr(row[k]) for k in ("r_intra", "r_inter", "p", "q", "j_total")])


def config_dict(config: TrainConfig) -> dict:
    out = asdict(config)
    out["hidden"] = list(config.hidden)
    return out

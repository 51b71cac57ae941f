"""Loss terms of the hashing objective and their output-layer gradients.

J = (r_intra - r_inter) + alpha1 * P + alpha2 * Q, where

* r_intra = ||sqrt(b1) H - Y M1||^2 and r_inter = ||sqrt(b2) H - R M2||^2
  (dual semantic regression; the inter-class term enters negatively),
* P = sum_ij W_ij ||u_i - v_j||^2 (distance-similarity product over a batch),
* Q = sum_ij S_ij (||h_i - tanh(u_j)||^2 + ||h_i - tanh(v_j)||^2) with the
  balance weight 1/|kappa(i)| already folded into S.

The gradients returned by :func:`grad_U` and :func:`grad_V` are the exact
derivatives of ``alpha1 * P + alpha2 * Q`` as implemented here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import BatchGraph, DualLabels
from .errors import DimensionError
from .numerics import as_matrix, check_finite, hadamard, matmul, tanh_elem


@dataclass(frozen=True)
class RegressionPair:
    M1: np.ndarray
    M2: np.ndarray

    @classmethod
    def zeros(cls, k: int, c: int) -> "RegressionPair":
        return cls(np.zeros((k, c)), np.zeros((k, c)))


@dataclass(frozen=True)
class LossBreakdown:
    r_intra: float
    r_inter: float
    p: float
    q: float
    alpha1: float
    alpha2: float

    @property
    def j_total(self) -> float:
        return (self.r_intra - self.r_inter) + self.alpha1 * self.p + self.alpha2 * self.q

    def as_row(self) -> dict:
        return {
            "r_intra": self.r_intra,
            "r_inter": self.r_inter,
            "p": self.p,
            "q": self.q,
            "j_total": self.j_total,
        }


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise DimensionError(msg)


def loss_R(H, duals: DualLabels, reg: RegressionPair) -> tuple[float, float]:
    """Return ``(r_intra, r_inter)``; the objective uses ``r_intra - r_inter``."""
    H = as_matrix(H)
    n, c = H.shape
    k = duals.Y.shape[1]
    _need(duals.Y.shape == (n, k) and duals.R.shape == (n, k), "label matrices must be n x k")
    _need(reg.M1.shape == (k, c) and reg.M2.shape == (k, c), "regression matrices must be k x c")
    intra = np.sqrt(duals.beta1) * H - matmul(duals.Y, reg.M1)
    inter = np.sqrt(duals.beta2) * H - matmul(duals.R, reg.M2)
    return float(np.sum(intra * intra)), float(np.sum(inter * inter))


def _check_batch(U, V, graph: BatchGraph) -> tuple[np.ndarray, np.ndarray]:
    U = as_matrix(U)
    V = as_matrix(V)
    _need(U.shape == V.shape, f"U {U.shape} and V {V.shape} differ")
    _need(U.shape[0] == graph.m, f"U has {U.shape[0]} rows, batch has {graph.m}")
    return U, V


def loss_P(U, V, graph: BatchGraph) -> float:
    """Pairwise form: sum over (i, j) of W_ij * ||u_i - v_j||^2."""
    U, V = _check_batch(U, V, graph)
    diff = U[:, None, :] - V[None, :, :]
    return float(np.sum(graph.W * np.sum(diff * diff, axis=2)))


def loss_P_trace(U, V, graph: BatchGraph) -> float:
    """Trace form tr(U'DU + V'DV - 2 U'WV); equals :func:`loss_P` for symmetric W."""
    U, V = _check_batch(U, V, graph)
    D = np.diag(graph.D)
    return float(
        np.trace(matmul(U.T, matmul(D, U)))
        + np.trace(matmul(V.T, matmul(D, V)))
        - 2.0 * np.trace(matmul(U.T, matmul(graph.W, V)))
    )


def _weighted_sq_dist(S: np.ndarray, H: np.ndarray, T: np.ndarray) -> float:
    sq = (
        np.sum(H * H, axis=1)[:, None]
        + np.sum(T * T, axis=1)[None, :]
        - 2.0 * matmul(H, T.T)
    )
    return float(np.sum(S * np.maximum(sq, 0.0)))


def loss_Q(H, U, V, graph: BatchGraph) -> float:
    H = as_matrix(H)
    U, V = _check_batch(U, V, graph)
    _need(graph.S.shape == (H.shape[0], graph.m), f"S is {graph.S.shape}, expected {(H.shape[0], graph.m)}")
    _need(H.shape[1] == U.shape[1], "code length of H and U differ")
    return _weighted_sq_dist(graph.S, H, tanh_elem(U)) + _weighted_sq_dist(graph.S, H, tanh_elem(V))


def loss_one_to_one(H_batch, U) -> float:
    """Class-unrelated quantization: sum_i ||h_i - u_i||^2 (comparison baseline)."""
    H_batch = as_matrix(H_batch)
    U = as_matrix(U)
    _need(H_batch.shape == U.shape, f"H {H_batch.shape} and U {U.shape} differ")
    diff = H_batch - U
    return float(np.sum(diff * diff))


def _grad(X, Y, H, graph: BatchGraph, alpha1: float, alpha2: float) -> np.ndarray:
    # d/dX of alpha1*P + alpha2*Q with X the first-slot embedding and Y the other
    H = as_matrix(H)
    _need(graph.S.shape == (H.shape[0], graph.m), "S must be n x m")
    _need(H.shape[1] == X.shape[1], "code length of H and the embeddings differ")
    grad = np.zeros_like(X)
    if alpha1:
        grad += 2.0 * alpha1 * (graph.D[:, None] * X - matmul(graph.W, Y))
    if alpha2:
        T = tanh_elem(X)
        mass = graph.S.sum(axis=0)[:, None]
        pull = mass * T - matmul(graph.S.T, H)
        grad += 2.0 * alpha2 * hadamard(pull, 1.0 - T * T)
    return check_finite(grad, "embedding gradient")


def grad_U(U, V, H, graph: BatchGraph, alpha1: float, alpha2: float) -> np.ndarray:
    U, V = _check_batch(U, V, graph)
    return _grad(U, V, H, graph, alpha1, alpha2)


def grad_V(U, V, H, graph: BatchGraph, alpha1: float, alpha2: float) -> np.ndarray:
    U, V = _check_batch(U, V, graph)
    # W is symmetric, so the P term mirrors grad_U with the roles swapped
    return _grad(V, U, H, graph, alpha1, alpha2)


def breakdown(
    H, duals: DualLabels, reg: RegressionPair, p: float, q: float, alpha1: float, alpha2: float
) -> LossBreakdown:
    r_intra, r_inter = loss_R(H, duals, reg)
    return LossBreakdown(r_intra, r_inter, float(p), float(q), float(alpha1), float(alpha2))

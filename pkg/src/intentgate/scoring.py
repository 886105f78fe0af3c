"""Uncertainty scoring.

The primary scorer learns a dictionary of unit-norm atoms from in-scope
training embeddings and scores a query by the squared residual of its best
non-negative reconstruction from the K most similar atoms. High residual
means the query sits outside the region the dictionary explains, which is
exactly the population we want to escalate. Entropy and energy scores over
the classifier output are provided as alternatives.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

ATOM_NORM_TOL = 1e-6


# ---------------------------------------------------------------------------
# Non-negative least squares (Lawson-Hanson active set)


def nnls(A: np.ndarray, b: np.ndarray, max_iter: Optional[int] = None) -> np.ndarray:
    """Solve min_{w >= 0} ||A w - b||_2^2 by the Lawson-Hanson active-set method.

    Subproblems on the passive set are solved with lstsq, so rank-deficient
    and wide A are handled. Terminates at the KKT point: the objective
    gradient vanishes on the passive set and is non-negative elsewhere. A
    relative-progress check guards against floating-point cycling.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.ndim != 1 or A.shape[0] != b.size:
        raise DataError("nnls: A must be (m, n) and b must be (m,)")
    m, n = A.shape
    if max_iter is None:
        max_iter = 3 * n + 30

    tol = 10 * np.finfo(float).eps * max(m, n) * max(1.0, float(np.abs(b).max(initial=1.0)))
    w = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    grad = A.T @ b  # descent direction at w = 0 (negative gradient up to a factor 2)
    objective = float(b @ b)

    def passive_solution():
        s = np.zeros(n)
        if passive.any():
            s[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
        return s

    inner = 0
    for _ in range(max_iter):
        if not ((~passive).any() and np.any(grad[~passive] > tol)):
            break
        candidates = np.where(~passive, grad, -np.inf)
        passive[int(np.argmax(candidates))] = True
        s = passive_solution()
        capped = False
        while np.any(s[passive] <= 0.0):
            inner += 1
            if inner > max_iter:
                capped = True
                break
            # Step from w toward s as far as feasibility allows.
            blocking = passive & (s <= 0.0) & (w > s)
            if blocking.any():
                step = float((w[blocking] / (w[blocking] - s[blocking])).min())
            else:
                step = 1.0
            w = w + step * (s - w)
            w[~passive] = 0.0
            passive &= w > tol
            w[~passive] = 0.0
            s = passive_solution()
        if not capped:
            w = s
        resid = b - A @ w
        new_objective = float(resid @ resid)
        grad = A.T @ resid
        if capped or new_objective > (1.0 - 1e-14) * objective:
            objective = new_objective
            break
        objective = new_objective
    return np.maximum(w, 0.0)


def kkt_residual_gradient(A: np.ndarray, b: np.ndarray, w: np.ndarray):
    """Stationarity diagnostics for ||A w - b||^2 at w >= 0.

    Returns (max |grad| over coordinates with w > 0,
             max violation of grad >= 0 over coordinates with w == 0).
    """
    g = 2.0 * (A.T @ (A @ w - b))
    active = w > 0
    max_active = float(np.abs(g[active]).max(initial=0.0))
    max_inactive = float(np.maximum(-g[~active], 0.0).max(initial=0.0))
    return max_active, max_inactive


# ---------------------------------------------------------------------------
# Dictionary learning


@dataclass(eq=False)
class NnkDictionary:
    """Learned atom matrix for reconstruction-error scoring."""

    atoms: np.ndarray  # (M, d), unit rows
    neighbors_K: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.atoms = np.asarray(self.atoms, dtype=float)
        if self.atoms.ndim != 2 or self.atoms.shape[0] < 1:
            raise DataError("atoms must be an (M, d) matrix with M >= 1")
        if not (1 <= self.neighbors_K <= self.atoms.shape[0]):
            raise DataError("neighbors_K must satisfy 1 <= K <= M")
        norms = np.linalg.norm(self.atoms, axis=1)
        if np.any(np.abs(norms - 1.0) > ATOM_NORM_TOL):
            raise DataError("every atom must be unit-norm")

    @property
    def n_atoms(self) -> int:
        return int(self.atoms.shape[0])

    @property
    def dim(self) -> int:
        return int(self.atoms.shape[1])


@dataclass(eq=False)
class NnkCode:
    """Sparse non-negative code of one query: selected atoms, weights, residual."""

    atom_indices: np.ndarray
    weights: np.ndarray
    residual: float


def nnk_code(dictionary: NnkDictionary, x, neighbors_K: Optional[int] = None) -> NnkCode:
    """Code a unit query against the K atoms with the highest inner product.

    The restricted problem min_{w >= 0} ||x - A_S w||^2 is solved to
    stationarity; the residual is the squared norm of what the selected
    atoms cannot explain. Ties in atom selection break by atom index.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (dictionary.dim,):
        raise DataError(f"query dim {x.shape} does not match dictionary dim {dictionary.dim}")
    K = dictionary.neighbors_K if neighbors_K is None else neighbors_K
    if not (1 <= K <= dictionary.n_atoms):
        raise DataError("neighbors_K must satisfy 1 <= K <= M")
    sims = dictionary.atoms @ x
    selected = np.argsort(-sims, kind="stable")[:K]
    A = dictionary.atoms[selected].T  # (d, K)
    w = nnls(A, x)
    r = x - A @ w
    residual = max(float(r @ r), 0.0)
    return NnkCode(selected, w, residual)


def _farthest_point_init(X: np.ndarray, n_atoms: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy farthest-point seeding; the seed picks the first atom."""
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    min_d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    while len(chosen) < n_atoms:
        idx = int(np.argmax(min_d2))
        chosen.append(idx)
        min_d2 = np.minimum(min_d2, np.sum((X - X[idx]) ** 2, axis=1))
    return X[chosen].copy()


def _code_all(atoms: np.ndarray, X: np.ndarray, K: int):
    dictionary = NnkDictionary(atoms, K)
    codes = [nnk_code(dictionary, x) for x in X]
    residuals = np.array([c.residual for c in codes])
    return codes, residuals


def _update_atoms(atoms: np.ndarray, codes, residuals: np.ndarray, X: np.ndarray) -> np.ndarray:
    """One dictionary update: weighted means for used atoms, reseeding for dead ones."""
    M, d = atoms.shape
    accum = np.zeros((M, d))
    used = np.zeros(M, dtype=bool)
    for x, code in zip(X, codes):
        live = code.weights > 0
        for j, wj in zip(code.atom_indices[live], code.weights[live]):
            accum[j] += wj * x
            used[j] = True
    new_atoms = atoms.copy()
    for j in range(M):
        if used[j]:
            norm = float(np.linalg.norm(accum[j]))
            if norm > 1e-12:
                new_atoms[j] = accum[j] / norm
    dead = np.flatnonzero(~used)
    if dead.size:
        worst = np.argsort(-residuals, kind="stable")
        for slot, j in enumerate(dead):
            new_atoms[j] = X[worst[slot % len(worst)]]
    return new_atoms


def fit_nnk(
    embeddings,
    n_atoms: int,
    neighbors_K: int = 10,
    iterations: int = 20,
    seed: int = 0,
) -> NnkDictionary:
    """Learn a dictionary that minimizes the coding residual of the training set.

    Alternates coding with a weighted-mean atom update (atoms re-normalized
    after every update, dead atoms reseeded to the worst-reconstructed
    points). An update is kept only if the recomputed mean residual does not
    increase, so the logged per-iteration mean residual is non-increasing;
    a rejected update ends the fit early.
    """
    X = np.asarray(embeddings, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("embeddings must be a non-empty (n, d) array")
    norms = np.linalg.norm(X, axis=1)
    if np.any(np.abs(norms - 1.0) > ATOM_NORM_TOL):
        raise DataError("training embeddings must be unit-norm")
    n = X.shape[0]
    if not (1 <= n_atoms <= n):
        raise DataError(f"n_atoms must satisfy 1 <= M <= {n}")
    if not (1 <= neighbors_K <= n_atoms):
        raise DataError("neighbors_K must satisfy 1 <= K <= M")
    if iterations < 1:
        raise DataError("iterations must be >= 1")

    rng = np.random.default_rng(seed)
    atoms = _farthest_point_init(X, n_atoms, rng)
    codes, residuals = _code_all(atoms, X, neighbors_K)
    history = [float(residuals.mean())]
    logger.debug("fit_nnk init: mean residual %.6g", history[0])

    for t in range(iterations):
        candidate = _update_atoms(atoms, codes, residuals, X)
        cand_codes, cand_residuals = _code_all(candidate, X, neighbors_K)
        cand_mean = float(cand_residuals.mean())
        if cand_mean <= history[-1] + 1e-12:
            atoms, codes, residuals = candidate, cand_codes, cand_residuals
            history.append(cand_mean)
            logger.debug("fit_nnk iter %d: mean residual %.6g", t + 1, cand_mean)
        else:
            logger.debug(
                "fit_nnk iter %d: update rejected (%.6g > %.6g), stopping",
                t + 1, cand_mean, history[-1],
            )
            break

    meta = {
        "iterations_requested": iterations,
        "iterations_run": len(history) - 1,
        "seed": seed,
        "final_mean_error": history[-1],
        "error_history": history,
        "n_train": n,
    }
    return NnkDictionary(atoms, neighbors_K, meta)


def default_n_atoms(n_train: int, n_classes: int, per_class: int = 20) -> int:
    return min(n_train, per_class * n_classes)


# ---------------------------------------------------------------------------
# Scores


@dataclass(frozen=True)
class UncertaintyScore:
    """A scalar where larger means the prediction is less trustworthy.

    nnk and entropy are non-negative; energy (-logsumexp of the logits) can
    take any real value but keeps the same monotone ordering.
    """

    value: float
    method: str


def nnk_score(dictionary: NnkDictionary, embedding) -> UncertaintyScore:
    return UncertaintyScore(nnk_code(dictionary, embedding).residual, "nnk")


def entropy_score(probabilities) -> UncertaintyScore:
    p = np.asarray(probabilities, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise DataError("probabilities must be a non-empty vector")
    if np.any(p < -1e-12):
        raise DataError("probabilities must be non-negative")
    if abs(float(p.sum()) - 1.0) > 1e-6:
        raise DataError("probabilities must sum to 1")
    p = np.clip(p, 0.0, 1.0)
    nonzero = p > 0
    value = float(-(p[nonzero] * np.log(p[nonzero])).sum())
    return UncertaintyScore(max(value, 0.0), "entropy")


def energy_score(logits) -> UncertaintyScore:
    z = np.asarray(logits, dtype=float)
    if z.ndim != 1 or z.size == 0:
        raise DataError("logits must be a non-empty vector")
    m = float(z.max())
    value = -(m + float(np.log(np.exp(z - m).sum())))
    return UncertaintyScore(value, "energy")


SCORE_METHODS = ("nnk", "entropy", "energy")


def score(
    method: str,
    *,
    dictionary: Optional[NnkDictionary] = None,
    embedding=None,
    probabilities=None,
    logits=None,
) -> UncertaintyScore:
    """Dispatch to the named scorer, checking it got the input it needs."""
    if method == "nnk":
        if dictionary is None or embedding is None:
            raise DataError("nnk scoring needs a dictionary and an embedding")
        return nnk_score(dictionary, embedding)
    if method == "entropy":
        if probabilities is None:
            raise DataError("entropy scoring needs a probability vector")
        return entropy_score(probabilities)
    if method == "energy":
        if logits is None:
            raise DataError("energy scoring needs a logit vector")
        return energy_score(logits)
    raise DataError(f"unknown scoring method: {method!r}")


# ---------------------------------------------------------------------------
# Dictionary file format


def save_dictionary(dictionary: NnkDictionary, path) -> None:
    payload = {
        "dim": dictionary.dim,
        "K": dictionary.neighbors_K,
        "atoms": dictionary.atoms.tolist(),
        "meta": dictionary.meta,
    }
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_dictionary(path) -> NnkDictionary:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    try:
        dictionary = NnkDictionary(
            np.asarray(data["atoms"], dtype=float), int(data["K"]), data.get("meta", {})
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed dictionary file: {exc}") from exc
    if dictionary.dim != int(data.get("dim", dictionary.dim)):
        raise DataError("dictionary file dim field disagrees with the atom matrix")
    return dictionary

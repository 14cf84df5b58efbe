"""Two-stage ranking: Q1 threshold filter, then logistic-regression weighted scoring of Q2-Q7."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    ConvergenceError,
    DegenerateLabelsError,
    LoadError,
    NormalizationError,
    SchemaError,
)
from .rubric import FEATURE_KEYS

DEFAULT_THRESHOLD = 0.6
DEFAULT_RIDGE = 1e-3
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 500

# Means are averages of small integers, so a value printed as 0.6 may be
# stored a few ulps below it.
_THRESHOLD_SLACK = 1e-12
_TIE_DECIMALS = 12


def q1_filter(table, threshold: float = DEFAULT_THRESHOLD) -> set[str]:
    """Works whose mean Q1 score is at least ``threshold`` (inclusive)."""
    if not 0.0 <= threshold <= 1.0:
        raise ConfigurationError(f"threshold must lie in [0, 1], got {threshold}")
    return {w for w in table.works if table.entries[(w, "Q1")] >= threshold - _THRESHOLD_SLACK}


@dataclass(frozen=True)
class FeatureRow:
    work_id: str
    features: Mapping[str, float]
    label: int

    def __post_init__(self):
        missing = set(FEATURE_KEYS) - set(self.features)
        if missing:
            raise SchemaError(f"{self.work_id}: missing features {sorted(missing)}")
        for k in FEATURE_KEYS:
            if not 0.0 <= self.features[k] <= 1.0:
                raise SchemaError(f"{self.work_id}: feature {k}={self.features[k]} outside [0, 1]")
        if self.label not in (0, 1):
            raise SchemaError(f"{self.work_id}: label must be 0 or 1")


def feature_rows(table, control_ids: Iterable[str]) -> list[FeatureRow]:
    """One row per work in the table, labelled 1 for positive controls and 0 otherwise."""
    controls = set(control_ids)
    return [FeatureRow(w, table.row(w, FEATURE_KEYS), int(w in controls)) for w in table.works]


# -- logistic regression -----------------------------------------------------


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LogisticFit(NamedTuple):
    intercept: float
    coef: np.ndarray
    iterations: int
    grad_norm: float


def _objective(theta, X, y, penalty):
    z = X @ theta
    # y*log(p) + (1-y)*log(1-p), written to avoid overflow
    ll = -np.sum(y * np.logaddexp(0.0, -z) + (1 - y) * np.logaddexp(0.0, z))
    return ll - 0.5 * float(theta @ (penalty * theta))


def fit_logistic_arrays(
    X: np.ndarray,
    y: np.ndarray,
    ridge_lambda: float = DEFAULT_RIDGE,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> LogisticFit:
    """Ridge-penalised maximum likelihood by damped IRLS.

    Maximises ``sum(log-likelihood) - ridge_lambda/2 * ||coef||^2``; the
    intercept is not penalised.  Each Newton step is halved until the
    objective improves.  A singular system falls back to a gradient step.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise SchemaError("X must be 2-D with one row per label")
    if ridge_lambda < 0:
        raise ConfigurationError("ridge_lambda must be non-negative")
    if not np.isin(y, (0, 1)).all():
        raise SchemaError("labels must be 0 or 1")
    if y.min() == y.max():
        raise DegenerateLabelsError("all labels are identical; the likelihood has no maximum")

    A = np.hstack([np.ones((len(X), 1)), X])
    penalty = np.r_[0.0, np.full(X.shape[1], ridge_lambda)]
    theta = np.zeros(A.shape[1])
    obj = _objective(theta, A, y, penalty)

    for it in range(1, max_iter + 1):
        p = _sigmoid(A @ theta)
        grad = A.T @ (y - p) - penalty * theta
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return LogisticFit(float(theta[0]), theta[1:].copy(), it - 1, gnorm)
        w = p * (1 - p)
        H = (A.T * w) @ A + np.diag(penalty)
        try:
            step = np.linalg.solve(H, grad)
            if not np.all(np.isfinite(step)) or step @ grad <= 0:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = grad
        t = 1.0
        while True:
            cand = theta + t * step
            cand_obj = _objective(cand, A, y, penalty)
            if cand_obj >= obj or t < 1e-12:
                break
            t *= 0.5
        if cand_obj < obj:
            break
        theta, obj = cand, cand_obj

    p = _sigmoid(A @ theta)
    grad = A.T @ (y - p) - penalty * theta
    gnorm = float(np.linalg.norm(grad))
    if gnorm <= tol:
        return LogisticFit(float(theta[0]), theta[1:].copy(), max_iter, gnorm)
    raise ConvergenceError(
        f"no convergence: gradient norm {gnorm:.3g} > {tol:g}",
        last_iterate=theta.copy(),
        iterations=max_iter,
        grad_norm=gnorm,
    )


def normalize_weights(beta: Mapping[str, float]) -> dict[str, float]:
    """Scale coefficients so they sum to one.  Signs are kept; weights may be negative."""
    total = math.fsum(beta.values())
    if abs(total) <= 1e-12:
        raise NormalizationError("coefficients sum to zero and cannot be normalised")
    return {k: v / total for k, v in beta.items()}


@dataclass
class WeightVector:
    beta0: float
    beta: dict[str, float]
    weights: dict[str, float]
    ridge_lambda: float
    iterations: int = 0
    grad_norm: float = 0.0
    n_positive: int = 0
    n_negative: int = 0

    def to_dict(self) -> dict:
        return {
            "beta0": self.beta0,
            "beta": self.beta,
            "weights": self.weights,
            "ridge_lambda": self.ridge_lambda,
            "fit": {
                "iterations": self.iterations,
                "grad_norm": self.grad_norm,
                "n_positive": self.n_positive,
                "n_negative": self.n_negative,
            },
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "WeightVector":
        fit = data.get("fit", {})
        return cls(
            float(data["beta0"]),
            {k: float(v) for k, v in data["beta"].items()},
            {k: float(v) for k, v in data["weights"].items()},
            float(data["ridge_lambda"]),
            int(fit.get("iterations", 0)),
            float(fit.get("grad_norm", 0.0)),
            int(fit.get("n_positive", 0)),
            int(fit.get("n_negative", 0)),
        )


def fit_logistic(
    rows: Sequence[FeatureRow],
    ridge_lambda: float = DEFAULT_RIDGE,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
) -> WeightVector:
    """Fit P(control | Q2..Q7) and derive normalised question weights."""
    X = np.array([[r.features[k] for k in FEATURE_KEYS] for r in rows], dtype=float).reshape(-1, len(FEATURE_KEYS))
    y = np.array([r.label for r in rows], dtype=float)
    if len(rows) == 0:
        raise DegenerateLabelsError("no training rows")
    fit = fit_logistic_arrays(X, y, ridge_lambda, max_iter, tol)
    beta = {k: float(b) for k, b in zip(FEATURE_KEYS, fit.coef)}
    return WeightVector(
        fit.intercept,
        beta,
        normalize_weights(beta),
        ridge_lambda,
        fit.iterations,
        fit.grad_norm,
        int(y.sum()),
        int(len(y) - y.sum()),
    )


def save_weights(weights: WeightVector, path: str | Path) -> None:
    Path(path).write_text(json.dumps(weights.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_weights(path: str | Path) -> WeightVector:
    try:
        return WeightVector.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (ValueError, KeyError, TypeError) as exc:
        raise LoadError(f"{path}: bad weight file: {exc}") from exc


# -- scoring and ranking -----------------------------------------------------


def weighted_score(features: Mapping[str, float], weights: Mapping[str, float]) -> float:
    if set(features) != set(weights):
        raise SchemaError(f"feature keys {sorted(features)} do not match weight keys {sorted(weights)}")
    return math.fsum(weights[k] * features[k] for k in sorted(weights))


@dataclass(frozen=True)
class RankedEntry:
    work_id: str
    score: float
    rank: int
    tie_group: int
    is_control: bool = False


@dataclass
class RankedList:
    entries: list[RankedEntry]
    q1_threshold: float | None = None
    control_positions: list[int] = field(default_factory=list)
    tie_group_sizes: dict[int, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def work_ids(self) -> list[str]:
        return [e.work_id for e in self.entries]

    @property
    def tied_pairs(self) -> int:
        """Number of unordered work pairs sharing a score."""
        return sum(n * (n - 1) // 2 for n in self.tie_group_sizes.values())

    @property
    def top_tie_size(self) -> int:
        return self.tie_group_sizes.get(1, 0)


def rank(
    passed: Iterable[str],
    features: Mapping[str, Mapping[str, float]],
    weights: WeightVector | Mapping[str, float],
    control_ids: Iterable[str] = (),
    q1_threshold: float | None = None,
) -> RankedList:
    """Order passed works by weighted score, highest first, ties broken by work id.

    Works whose scores agree to 12 decimals share a tie group.
    """
    w = weights.weights if isinstance(weights, WeightVector) else dict(weights)
    controls = set(control_ids)
    scored = []
    for work_id in set(passed):
        if work_id not in features:
            raise SchemaError(f"no features for passed work {work_id}")
        feats = {k: features[work_id][k] for k in features[work_id] if k in w or k in FEATURE_KEYS}
        s = weighted_score(feats, w)
        scored.append((round(s, _TIE_DECIMALS), work_id, s))
    scored.sort(key=lambda t: (-t[0], t[1]))

    entries = []
    sizes: dict[int, int] = {}
    group = 0
    prev = None
    for position, (key, work_id, s) in enumerate(scored, 1):
        if key != prev:
            group += 1
            prev = key
        sizes[group] = sizes.get(group, 0) + 1
        entries.append(RankedEntry(work_id, s, position, group, work_id in controls))
    return RankedList(
        entries,
        q1_threshold,
        [e.rank for e in entries if e.is_control],
        sizes,
    )


RANKED_HEADER = ["rank", "work_id", "score", "tie_group", "is_control"]


def save_ranked(ranked: RankedList, path: str | Path) -> int:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RANKED_HEADER)
        for e in ranked.entries:
            writer.writerow([e.rank, e.work_id, repr(e.score), e.tie_group, int(e.is_control)])
    return len(ranked.entries)


def load_ranked(path: str | Path, q1_threshold: float | None = None) -> RankedList:
    entries = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RANKED_HEADER:
            raise LoadError(f"{path}: expected header {','.join(RANKED_HEADER)}", line=1)
        for lineno, row in enumerate(reader, 2):
            try:
                entries.append(RankedEntry(row[1], float(row[2]), int(row[0]), int(row[3]), row[4] == "1"))
            except (ValueError, IndexError) as exc:
                raise LoadError(str(exc), line=lineno) from exc
    sizes: dict[int, int] = {}
    for e in entries:
        sizes[e.tie_group] = sizes.get(e.tie_group, 0) + 1
    return RankedList(entries, q1_threshold, [e.rank for e in entries if e.is_control], sizes)


def passed_set_difference(a: set[str], b: set[str]) -> float:
    """Share of the union on which two passed sets disagree."""
    union = a | b
    return len(a ^ b) / len(union) if union else 0.0

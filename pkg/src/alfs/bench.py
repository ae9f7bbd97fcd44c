"""Evaluation harness: select, reveal labels, classify, report curves.

The protocol follows the joint-selection evaluation recipe: a method sees
only the unlabeled training matrix and picks samples (and possibly
features); labels are then revealed for the selected samples only, a fixed
deterministic 1-NN classifier is trained on them, and test accuracy is
recorded per budget over repeated trials. Curves come in two styles: over
sample budgets (classifying in the full feature space) or over feature
budgets with a fixed sample budget (classifying in the selected subspace).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .baselines import RcurConfig, random_sampling, rcur, variance_feature_select
from .data import Dataset, SelectionRequest
from .selection import SelectionResult, rank_and_select, reconstruction_error
from .solver import RegularizationParams, SolverConfig, solve

THREADS_ENV_VAR = "ALFS_THREADS"
GRID_DEFAULT = (0.1, 1.0, 10.0, 100.0)

SAMPLE_AXIS_METHODS = ("alfs", "random", "rcur")
FEATURE_AXIS_METHODS = (
    "alfs",
    "rcur",
    "variance+random",
    "variance+alfs",
    "variance+rcur",
)


class BenchMethodError(RuntimeError):
    """Every cell of a benchmark run failed; partial curve attached."""

    def __init__(self, message: str, partial: Optional["AccuracyCurve"] = None):
        super().__init__(message)
        self.partial = partial


class GridSearchError(RuntimeError):
    """All grid combinations failed; per-combination diagnostics attached."""

    def __init__(self, message: str, failures: list[tuple["RegularizationParams", str]]):
        super().__init__(message)
        self.failures = failures


@dataclass(frozen=True)
class BenchSpec:
    """One benchmark run: a method, budgets, repeats, and the fixed classifier.

    Repeat t uses seed ``seed + t``, so extending ``repeats`` never
    reshuffles earlier trials. ``feature_budgets`` empty means a curve over
    sample budgets in the full feature space; non-empty means a curve over
    feature budgets (then ``sample_budgets`` must hold exactly one value).
    """

    method: str
    sample_budgets: tuple[int, ...]
    feature_budgets: tuple[int, ...] = ()
    repeats: int = 10
    seed: int = 0
    classifier: str = "1nn"
    knn_k: int = 1
    alfs_params: RegularizationParams = field(default_factory=RegularizationParams)
    alfs_grid: Optional[tuple[float, ...]] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    rcur_rank: Optional[int] = None

    def __post_init__(self) -> None:
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.classifier != "1nn":
            raise ValueError(f"unknown classifier {self.classifier!r}")
        if not self.sample_budgets:
            raise ValueError("sample_budgets must not be empty")
        if self.feature_budgets and len(self.sample_budgets) != 1:
            raise ValueError(
                "a feature-budget curve needs exactly one sample budget"
            )
        axis_methods = (
            FEATURE_AXIS_METHODS if self.feature_budgets else SAMPLE_AXIS_METHODS
        )
        if self.method not in axis_methods:
            raise ValueError(
                f"method {self.method!r} not valid for this curve style; "
                f"expected one of {axis_methods}"
            )


@dataclass(frozen=True)
class AccuracyCurve:
    """Mean accuracy per budget plus every per-repeat value.

    ``per_repeat[i][t]`` is the accuracy of repeat t at budget i (None for a
    failed cell); means average the non-None entries.
    """

    method: str
    budget_axis: str
    budgets: tuple[int, ...]
    mean_accuracy: tuple[float, ...]
    per_repeat: tuple[tuple[Optional[float], ...], ...]
    failures: tuple[tuple[int, int, str], ...] = ()


def knn_classify(
    train: Dataset,
    test: Dataset,
    k: int = 1,
) -> tuple[tuple, Optional[float]]:
    """Majority vote among the k nearest training columns (Euclidean).

    Distance ties break by ascending training index; vote ties go to the
    label appearing earliest in the ordered neighbor list. Returns the
    predictions and the accuracy (None when the test set is unlabeled).
    """
    if train.labels is None:
        raise ValueError("training set has no labels")
    if train.n_features != test.n_features:
        raise ValueError("train and test feature dimensions differ")
    n_train = train.n_samples
    if not 1 <= k <= n_train:
        raise ValueError(f"k={k} outside 1..{n_train}")
    # full difference tensor: exact symmetry keeps genuine distance ties exact
    diff = test.matrix.T[:, None, :] - train.matrix.T[None, :, :]
    d2 = (diff * diff).sum(axis=2)
    predictions = []
    for row in d2:
        order = np.argsort(row, kind="stable")[:k]
        votes: dict = {}
        for idx in order:
            lab = train.labels[int(idx)]
            votes[lab] = votes.get(lab, 0) + 1
        best_count = max(votes.values())
        for idx in order:  # first label (in neighbor order) reaching the max
            lab = train.labels[int(idx)]
            if votes[lab] == best_count:
                predictions.append(lab)
                break
    predictions = tuple(predictions)
    if test.labels is None:
        return predictions, None
    hits = sum(1 for p, y in zip(predictions, test.labels) if p == y)
    return predictions, hits / test.n_samples


def _auto_rcur_rank(matrix: np.ndarray) -> int:
    rank = int(np.linalg.matrix_rank(matrix))
    if rank < 2:
        raise ValueError("matrix rank < 2: randomized CUR needs k < rank")
    return min(max(1, min(matrix.shape) // 2), rank - 1)


class _MethodRunner:
    """Per-run selector with a cache for the deterministic solves."""

    def __init__(
        self,
        unlabeled: Dataset,
        spec: BenchSpec,
        params: Optional[RegularizationParams] = None,
    ):
        self.unlabeled = unlabeled
        self.spec = spec
        self.params = params if params is not None else spec.alfs_params
        self._alfs_cache: dict[Optional[tuple[int, ...]], np.ndarray] = {}

    def _alfs_w(self, features: Optional[tuple[int, ...]] = None) -> np.ndarray:
        if features not in self._alfs_cache:
            ds = (
                self.unlabeled
                if features is None
                else self.unlabeled.restrict(features=list(features))
            )
            w, _ = solve(ds, self.params, self.spec.solver)
            self._alfs_cache[features] = w
        return self._alfs_cache[features]

    def select(
        self, m: int, r: Optional[int], seed: int
    ) -> tuple[tuple[int, ...], Optional[tuple[int, ...]]]:
        """Sample indices (size m) and feature indices (size r or None)."""
        ds = self.unlabeled
        n, d = ds.n_samples, ds.n_features
        method = self.spec.method

        if method == "random":
            return random_sampling(n, m, seed), None

        if method == "alfs":
            w = self._alfs_w()
            sel = rank_and_select(w, SelectionRequest(m, r if r else d))
            return sel.selected_samples, sel.selected_features if r else None

        if method == "rcur":
            k = self.spec.rcur_rank or _auto_rcur_rank(ds.matrix)
            cfg = RcurConfig(
                k=k, m=m, r=r if r else d, seed=seed, exact_counts=True
            )
            result = rcur(ds, cfg)
            return result.column_indices, result.row_indices if r else None

        if method.startswith("variance+"):
            if r is None:
                raise ValueError(f"{method!r} needs a feature budget")
            feats = variance_feature_select(ds, r)
            reduced = ds.restrict(features=list(feats))
            sampler = method.split("+", 1)[1]
            if sampler == "random":
                samples = random_sampling(n, m, seed)
            elif sampler == "alfs":
                w = self._alfs_w(feats)
                samples = rank_and_select(
                    w, SelectionRequest(m, reduced.n_features)
                ).selected_samples
            elif sampler == "rcur":
                k = self.spec.rcur_rank or _auto_rcur_rank(reduced.matrix)
                result = rcur(
                    reduced,
                    RcurConfig(
                        k=k,
                        m=m,
                        r=reduced.n_features,
                        seed=seed,
                        exact_counts=True,
                    ),
                )
                samples = result.column_indices
            else:
                raise ValueError(f"unknown sampler in method {method!r}")
            return samples, feats

        raise ValueError(f"unknown method {method!r}")


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV_VAR, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_cells(fn: Callable, cells: list) -> list:
    workers = _thread_count()
    if workers == 1 or len(cells) <= 1:
        return [fn(c) for c in cells]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, cells))  # ordered, deterministic reduction


def run_curve(train: Dataset, test: Dataset, spec: BenchSpec) -> AccuracyCurve:
    """Accuracy curve of one method over budgets with repeated trials.

    The method sees only the unlabeled training matrix; labels are revealed
    for selected samples only. Cells that fail keep the rest of the curve
    alive and are reported in ``failures``; if every cell fails a
    :class:`BenchMethodError` is raised.
    """
    if train.labels is None:
        raise ValueError("training set has no labels to reveal")
    if test.labels is None:
        raise ValueError("test set has no labels to score against")
    n, d = train.n_samples, train.n_features
    for m in spec.sample_budgets:
        if not 1 <= m <= n:
            raise ValueError(f"sample budget {m} outside 1..{n}")
    for r in spec.feature_budgets:
        if not 1 <= r <= d:
            raise ValueError(f"feature budget {r} outside 1..{d}")

    feature_axis = bool(spec.feature_budgets)
    budgets = spec.feature_budgets if feature_axis else spec.sample_budgets
    fixed_m = spec.sample_budgets[0]

    unlabeled = train.without_labels()
    params = spec.alfs_params
    if spec.alfs_grid is not None and "alfs" in spec.method:
        # one grid search per curve: labels of the protocol's revealed
        # samples score the candidates, the winner drives every cell
        protocol = GridProtocol(
            m=fixed_m,
            r=max(spec.feature_budgets) if feature_axis else None,
            seed=spec.seed,
            knn_k=spec.knn_k,
        )
        params = grid_search(
            train,
            protocol,
            grid=spec.alfs_grid,
            gamma=spec.alfs_params.gamma,
            base_params=spec.alfs_params,
            solver_cfg=spec.solver,
        ).best_params
    runner = _MethodRunner(unlabeled, spec, params)

    def run_cell(cell: tuple[int, int]):
        budget, t = cell
        seed = spec.seed + t
        m = fixed_m if feature_axis else budget
        r = budget if feature_axis else None
        samples, feats = runner.select(m, r, seed)
        labeled = train.restrict(samples=list(samples))
        test_view = test
        if feature_axis:
            labeled = labeled.restrict(features=list(feats))
            test_view = test.restrict(features=list(feats))
        _, acc = knn_classify(labeled, test_view, spec.knn_k)
        return acc

    cells = [(budget, t) for budget in budgets for t in range(spec.repeats)]
    per_repeat: dict[int, list[Optional[float]]] = {b: [] for b in budgets}
    failures: list[tuple[int, int, str]] = []

    def safe(cell):
        try:
            return run_cell(cell)
        except Exception as exc:  # cell failures must not kill the curve
            return exc

    outcomes = _map_cells(safe, cells)
    for (budget, t), outcome in zip(cells, outcomes):
        if isinstance(outcome, Exception):
            failures.append((budget, t, f"{type(outcome).__name__}: {outcome}"))
            per_repeat[budget].append(None)
        else:
            per_repeat[budget].append(outcome)

    means = []
    for b in budgets:
        vals = [v for v in per_repeat[b] if v is not None]
        if not vals:
            curve = AccuracyCurve(
                method=spec.method,
                budget_axis="features" if feature_axis else "samples",
                budgets=tuple(budgets),
                mean_accuracy=(),
                per_repeat=tuple(tuple(per_repeat[bb]) for bb in budgets),
                failures=tuple(failures),
            )
            raise BenchMethodError(
                f"method {spec.method!r} failed for every repeat at budget {b}: "
                f"{failures[:3]}",
                partial=curve,
            )
        means.append(sum(vals) / len(vals))

    return AccuracyCurve(
        method=spec.method,
        budget_axis="features" if feature_axis else "samples",
        budgets=tuple(budgets),
        mean_accuracy=tuple(means),
        per_repeat=tuple(tuple(per_repeat[b]) for b in budgets),
        failures=tuple(failures),
    )


def write_curves_csv(curves: Sequence[AccuracyCurve], path: str | Path) -> None:
    """Emit one row per (method, budget, repeat); failed cells leave the
    accuracy field empty."""
    path = Path(path)
    lines = ["method,budget,repeat,accuracy"]
    for curve in curves:
        for i, budget in enumerate(curve.budgets):
            for t, acc in enumerate(curve.per_repeat[i]):
                value = "" if acc is None else repr(acc)
                lines.append(f"{curve.method},{budget},{t},{value}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class GridProtocol:
    """How grid candidates are scored.

    With labels available and a revealed set of at least
    ``min_labeled_for_holdout`` samples, a seeded 20% holdout of the revealed
    labels is classified and accuracy is the score. Otherwise the score is
    the negated reconstruction error of the selected subsets (fully
    unsupervised).
    """

    m: int
    r: Optional[int] = None
    holdout_fraction: float = 0.2
    min_labeled_for_holdout: int = 10
    seed: int = 0
    knn_k: int = 1


@dataclass
class GridSearchResult:
    best_params: RegularizationParams
    best_score: float
    scores: list[tuple[RegularizationParams, Optional[float]]]
    n_solver_calls: int
    failures: list[tuple[RegularizationParams, str]]


def _default_grid_score(
    train: Dataset,
    protocol: GridProtocol,
    sel: SelectionResult,
) -> float:
    samples = list(sel.selected_samples)
    features = (
        list(sel.selected_features)
        if protocol.r is not None
        else list(range(train.n_features))
    )
    if train.labels is not None and len(samples) >= protocol.min_labeled_for_holdout:
        rng = np.random.default_rng(protocol.seed)
        perm = rng.permutation(len(samples))
        n_hold = max(1, int(round(protocol.holdout_fraction * len(samples))))
        hold = [samples[i] for i in perm[:n_hold]]
        fit = [samples[i] for i in perm[n_hold:]]
        fit_ds = train.restrict(samples=fit, features=features)
        hold_ds = train.restrict(samples=hold, features=features)
        _, acc = knn_classify(fit_ds, hold_ds, protocol.knn_k)
        assert acc is not None
        return acc
    return -reconstruction_error(train.without_labels(), samples, features)


def grid_search(
    train: Dataset,
    protocol: GridProtocol,
    grid: Sequence[float] = GRID_DEFAULT,
    gamma: float = 1.0,
    base_params: RegularizationParams = RegularizationParams(),
    solver_cfg: SolverConfig = SolverConfig(),
    score_fn: Optional[Callable[[Dataset, RegularizationParams, SelectionResult], float]] = None,
) -> GridSearchResult:
    """Best (alpha, beta, eta) over the grid with gamma held fixed.

    Iterates alpha-major (alpha outermost, then beta, then eta); ties keep
    the first-encountered combination. One solver invocation per
    combination, counted in the result. ``score_fn`` overrides the scoring
    protocol (higher is better).
    """
    if not grid:
        raise ValueError("grid must not be empty")
    unlabeled = train.without_labels()
    req_r = protocol.r if protocol.r is not None else unlabeled.n_features
    best: Optional[tuple[RegularizationParams, float]] = None
    scores: list[tuple[RegularizationParams, Optional[float]]] = []
    failures: list[tuple[RegularizationParams, str]] = []
    n_calls = 0
    for alpha in grid:
        for beta in grid:
            for eta in grid:
                params = replace(
                    base_params, alpha=alpha, beta=beta, gamma=gamma, eta=eta
                )
                try:
                    w, _ = solve(unlabeled, params, solver_cfg)
                    n_calls += 1
                    sel = rank_and_select(w, SelectionRequest(protocol.m, req_r))
                    if score_fn is not None:
                        score = score_fn(train, params, sel)
                    else:
                        score = _default_grid_score(train, protocol, sel)
                except Exception as exc:
                    n_calls += 1
                    failures.append((params, f"{type(exc).__name__}: {exc}"))
                    scores.append((params, None))
                    continue
                scores.append((params, score))
                if best is None or score > best[1]:
                    best = (params, score)
    if best is None:
        raise GridSearchError(
            f"all {len(scores)} grid combinations failed", failures
        )
    return GridSearchResult(
        best_params=best[0],
        best_score=best[1],
        scores=scores,
        n_solver_calls=n_calls,
        failures=failures,
    )

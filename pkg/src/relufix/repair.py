"""Greedy repair search over free-weight combinations.

Level k of the search tries all size-k selections of parameters that do not
contain a subset already known non-viable. Per selection an ascending
threshold ladder is run and abandoned at the first non-SAT verdict. Every
SAT model is substituted back into the network, re-verified against all
target properties, and scored by weighted accuracy; the best score wins.
A selection is marked non-viable only when its weakest query (threshold 1)
is UNSAT, so timeouts never prune the tree.

Exhaustive enumeration is combinatorial: level k holds C(n, k) selections,
and summing over all levels grows as O(n^(n/2)), which is why the pruning
marks and the top-k pair assembly exist at all.
"""

from __future__ import annotations

import itertools
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

from .datagen import Dataset
from .encoder import (
    RobustnessProperty,
    SoftConstraintSet,
    encode_repair,
    verify_property,
)
from .evaluator import weighted_accuracy
from .network import Network, WeightId, enumerate_weight_ids, substitute
from .smtio import SolverConfig, Status, run_solver
from .trainer import TrainConfig, TrainingError, train

import numpy as np


@dataclass
class RepairConfig:
    max_combination_size: int = 1
    trial_timeout_s: float = 600.0
    global_timeout_s: float = math.inf
    thresholds: tuple[int, ...] = (1,)
    weight_layers: tuple[int, ...] | None = None
    weight_kinds: tuple[str, ...] | None = None
    top_k_for_greedy: int | None = None
    workers: int = 1
    allow_satisfied: bool = False
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if list(self.thresholds) != sorted(set(self.thresholds)):
            raise ValueError("thresholds must be strictly ascending")
        if self.max_combination_size < 1:
            raise ValueError("max_combination_size must be >= 1")


@dataclass
class TrialRecord:
    selection: tuple[WeightId, ...]
    threshold: int
    status: str  # Status value or "SKIPPED"
    weight_values: dict | None = None
    accuracy: float | None = None
    solver_time_s: float = 0.0
    skipped: bool = False

    @property
    def size(self) -> int:
        return len(self.selection)


@dataclass
class SearchState:
    unsat_marks: set = field(default_factory=set)  # of frozenset[WeightId]
    best: TrialRecord | None = None
    elapsed_s: float = 0.0
    trials: list = field(default_factory=list)
    already_safe: bool = False


def _selection_key(selection: Sequence[WeightId]):
    return tuple(sorted(selection, key=lambda w: (w.layer, 0 if w.kind == "weight" else 1, w.row, w.col)))


def build_eligible_combinations(
    state: SearchState,
    size: int,
    all_ids: Sequence[WeightId],
    top_k_for_greedy: int | None = None,
) -> list[tuple[WeightId, ...]]:
    """All size-subsets whose sub-selections are not marked UNSAT.

    With ``top_k_for_greedy`` and size 2, pairs are assembled only from the
    free weights of the top-k singleton SAT trials.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    pool = list(all_ids)
    if top_k_for_greedy is not None and size == 2:
        sat_singletons = [
            t for t in state.trials if t.size == 1 and t.status == Status.SAT.value
        ]
        sat_singletons.sort(key=lambda t: -(t.accuracy if t.accuracy is not None else -1.0))
        pool = [t.selection[0] for t in sat_singletons[:top_k_for_greedy]]
    combos = []
    for combo in itertools.combinations(pool, size):
        key = frozenset(combo)
        if any(mark <= key for mark in state.unsat_marks):
            continue
        combos.append(_selection_key(combo))
    return combos


def run_trial(
    net: Network,
    selection: Sequence[WeightId],
    props: Sequence[RobustnessProperty],
    soft: SoftConstraintSet | None,
    threshold: int,
    dataset: Dataset | None = None,
    solver: SolverConfig | None = None,
    timeout_s: float | None = None,
) -> TrialRecord:
    """One solver invocation for one selection and threshold.

    A SAT answer is only reported as SAT if the substituted network
    re-verifies every property; accuracy is the weighted accuracy of that
    substituted network. Solver failures are recorded, never raised.
    """
    selection = _selection_key(selection)
    script = encode_repair(net, selection, props, soft, threshold=threshold)
    try:
        verdict = run_solver(script, solver, timeout_s=timeout_s, tag=f"repair_t{threshold}")
    except Exception:  # spawn/parse problems stay inside the record
        return TrialRecord(selection, threshold, Status.ERROR.value, solver_time_s=0.0)

    record = TrialRecord(
        selection, threshold, verdict.status.value, solver_time_s=verdict.wall_time_s
    )
    if verdict.status is not Status.SAT:
        return record

    values = {wid: verdict.model[name] for (wid, name) in _named_selection(net, selection)}
    candidate = substitute(net, values)
    try:
        for prop in props:
            check = verify_property(candidate, prop, solver)
            if check.holds is not True:
                record.status = Status.ERROR.value
                return record
    except Exception:
        record.status = Status.ERROR.value
        return record
    record.weight_values = values
    if dataset is not None:
        record.accuracy = weighted_accuracy(candidate, dataset).weighted
    return record


def _named_selection(net: Network, selection: Sequence[WeightId]):
    from .encoder import weight_var_name

    return [(wid, weight_var_name(wid, net)) for wid in selection]


def threshold_ladder(
    net: Network,
    selection: Sequence[WeightId],
    props: Sequence[RobustnessProperty],
    soft: SoftConstraintSet | None,
    thresholds: Sequence[int],
    dataset: Dataset | None = None,
    solver: SolverConfig | None = None,
    timeout_s: float | None = None,
) -> list[TrialRecord]:
    """Ascending thresholds; after the first non-SAT the remaining rungs are
    emitted as skipped records without touching the solver."""
    records = []
    failed = False
    for k in thresholds:
        if failed:
            records.append(
                TrialRecord(_selection_key(selection), k, "SKIPPED", skipped=True)
            )
            continue
        rec = run_trial(net, selection, props, soft, k, dataset, solver, timeout_s)
        records.append(rec)
        if rec.status != Status.SAT.value:
            failed = True
    return records


def _better(a: TrialRecord, b: TrialRecord | None) -> bool:
    """Accuracy first; ties prefer fewer free weights, then lower threshold."""
    if b is None:
        return True
    ka = (-(a.accuracy if a.accuracy is not None else -1.0), a.size, a.threshold)
    kb = (-(b.accuracy if b.accuracy is not None else -1.0), b.size, b.threshold)
    return ka < kb


def greedy_repair(
    net: Network,
    props: Sequence[RobustnessProperty],
    soft: SoftConstraintSet | None,
    dataset: Dataset,
    cfg: RepairConfig,
) -> SearchState:
    """Level-wise greedy search for the most similar repaired network.

    Properties already satisfied are filtered out up front; if nothing is
    violated the original network is returned as the identity result
    (unless ``allow_satisfied`` keeps them in, the XOR-A sanity case).
    """
    state = SearchState()
    start = time.monotonic()

    def out_of_time() -> bool:
        state.elapsed_s = time.monotonic() - start
        return state.elapsed_s >= cfg.global_timeout_s

    if out_of_time():
        return state

    if cfg.allow_satisfied:
        targets = list(props)
    else:
        targets = [p for p in props if verify_property(net, p, cfg.solver).holds is not True]
        if not targets:
            state.best = TrialRecord(
                selection=(),
                threshold=0,
                status=Status.SAT.value,
                weight_values={},
                accuracy=weighted_accuracy(net, dataset).weighted,
            )
            state.already_safe = True
            state.elapsed_s = time.monotonic() - start
            return state

    all_ids = enumerate_weight_ids(net, layers=cfg.weight_layers, kinds=cfg.weight_kinds)
    max_size = min(cfg.max_combination_size, len(all_ids))

    for size in range(1, max_size + 1):
        if out_of_time():
            break
        combos = build_eligible_combinations(state, size, all_ids, cfg.top_k_for_greedy)

        def ladder(selection):
            return threshold_ladder(
                net, selection, targets, soft, cfg.thresholds,
                dataset, cfg.solver, cfg.trial_timeout_s,
            )

        stop = False
        if cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                for records in pool.map(ladder, combos):
                    _absorb(state, records, size)
                    if out_of_time():
                        stop = True
                        break
        else:
            for selection in combos:
                _absorb(state, ladder(selection), size)
                if out_of_time():
                    stop = True
                    break
        if stop:
            break
    state.elapsed_s = time.monotonic() - start
    return state


def _absorb(state: SearchState, records: list[TrialRecord], size: int) -> None:
    state.trials.extend(records)
    # threshold-1 UNSAT proves no soft-constraint level can succeed for this
    # selection; timeouts and failures at higher rungs prove nothing
    for rec in records:
        if rec.threshold == 1 and rec.status == Status.UNSAT.value:
            state.unsat_marks.add(frozenset(rec.selection))
        if rec.status == Status.SAT.value and _better(rec, state.best):
            state.best = rec


# ---------------------------------------------------------------------------
# naive gradient baseline


@dataclass
class BaselineResult:
    net: Network
    iterations: int
    repaired: bool
    log: list  # of per-iteration dicts


def naive_baseline(
    net0: Network,
    props: Sequence[RobustnessProperty],
    dataset: Dataset,
    train_cfg: TrainConfig,
    max_iters: int = 20,
    n_spec: int = 200,
    n_train: int = 200,
    seed: int = 0,
    solver: SolverConfig | None = None,
) -> BaselineResult:
    """Verify, then retrain on fresh specification points until safe.

    Each round appends, per violated property, ``n_spec`` uniform points
    from inside its ball labeled with the target class, plus ``n_train``
    points resampled from the original training set, then retrains.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    rng = np.random.default_rng(seed)
    from .datagen import LabeledPoint

    net = net0
    extra: list[LabeledPoint] = []
    log = []
    for iteration in range(1, max_iters + 1):
        violated = []
        for prop in props:
            check = verify_property(net, prop, solver)
            if check.holds is not True:
                violated.append(prop)
        log.append({"iteration": iteration, "violated": [p.name for p in violated]})
        if not violated:
            return BaselineResult(net, iteration, True, log)

        for prop in violated:
            extra.extend(
                LabeledPoint(pt, prop.target_class)
                for pt in _sample_ball(prop, n_spec, rng)
            )
        idx = rng.integers(0, len(dataset.train), size=n_train)
        extra.extend(dataset.train[i] for i in idx)
        try:
            net = train(net, dataset.train + extra, replace(train_cfg, seed=int(rng.integers(2**31))))
        except TrainingError as exc:
            log.append({"iteration": iteration, "aborted": str(exc)})
            return BaselineResult(net, iteration, False, log)
    return BaselineResult(net, max_iters, False, log)


def _sample_ball(prop: RobustnessProperty, n: int, rng) -> list[tuple[float, ...]]:
    """Uniform points inside the property ball (rejection from the box)."""
    center = np.asarray(prop.center)
    out = []
    while len(out) < n:
        cand = rng.uniform(-prop.delta, prop.delta, size=(n, len(prop.center)))
        if prop.norm == "l1":
            cand = cand[np.abs(cand).sum(axis=1) <= prop.delta]
        for row in cand:
            out.append(tuple(map(float, center + row)))
            if len(out) == n:
                break
    return out

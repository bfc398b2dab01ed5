"""One interaction round per user: recommend, collect biased feedback, update.

The engine is synchronous: every slate and every feedback draw in a step is
computed against the state snapshot at the start of the step, and the updated
matrix is written in a single pass afterwards. Randomness is counter-split
per (step, user), so results are identical whether users are processed
serially or in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .catalog import ItemCatalog, ModelParams, SocialGraph, UserStates
from .errors import InvalidRequest, NumericalError
from .metrics import MetricSettings, MetricsRecord, compute_metrics_record

FEEDBACK_DOT_CLAMP = 1.0 - 1e-9


class StreamSplitter:
    """Derives an independent random stream for every (step, user) pair.

    Built on seed-sequence hashing of (master, step, user), so per-user work
    can be reordered or parallelized without changing a single draw.
    """

    def __init__(self, master_seed: int):
        if master_seed < 0:
            raise InvalidRequest("master seed must be a non-negative integer")
        self.master_seed = int(master_seed)

    def user_stream(self, t: int, i: int) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(entropy=(self.master_seed, t, i))
        )


def _as_splitter(rng) -> StreamSplitter:
    if isinstance(rng, StreamSplitter):
        return rng
    return StreamSplitter(int(rng))


def social_representation(states, graph: SocialGraph, i: int,
                          gamma: float) -> np.ndarray:
    """Blend of the user's own vector and the mean of its neighbors' vectors.

    Returns u_i itself when gamma is 1 (the graph is not read at all) or when
    the user has no neighbors.
    """
    matrix = states.user_matrix if isinstance(states, UserStates) else np.asarray(states, dtype=float)
    u = matrix[:, i]
    if gamma == 1.0:
        return u.copy()
    if graph.isolated[i]:
        return u.copy()
    neighbors = graph.neighbor_lists[i]
    mean = matrix[:, neighbors].mean(axis=1)
    return gamma * u + (1.0 - gamma) * mean


def recommendation_distribution(s: np.ndarray, catalog: ItemCatalog,
                                alpha: float) -> np.ndarray:
    """Softmax over alpha * (item score), computed with max-subtraction."""
    if alpha < 0:
        raise InvalidRequest("alpha must be >= 0")
    with np.errstate(invalid="ignore"):
        scores = alpha * (catalog.item_vectors.T @ np.asarray(s, dtype=float))
    if not np.all(np.isfinite(scores)):
        raise NumericalError("non-finite recommendation scores")
    return _softmax(scores)


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=0, keepdims=True) if scores.ndim > 1 \
        else scores - scores.max()
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True) if scores.ndim > 1 else e / e.sum()


def sample_without_replacement(p: np.ndarray, h: int,
                               rng: np.random.Generator) -> np.ndarray:
    """Draw h distinct indices with sequential draw-and-renormalize semantics.

    Implemented as an exponential race: item j gets key E_j / p_j and the h
    smallest keys win, which is distributionally identical to drawing one
    item at a time and renormalizing the remainder. If fewer than h items
    have positive probability, the shortfall is padded uniformly from the
    zero-probability items (callers can detect this case by counting
    positive entries).
    """
    p = np.asarray(p, dtype=float)
    m = p.size
    if h > m:
        raise InvalidRequest(f"cannot draw {h} distinct items from {m}")
    keys = rng.exponential(size=m)
    with np.errstate(divide="ignore"):
        keys = keys / p
    positive = p > 0
    n_pos = int(positive.sum())
    if n_pos >= h:
        idx = np.argpartition(keys, h - 1)[:h]
        return idx[np.argsort(keys[idx], kind="stable")]
    winners = np.flatnonzero(positive)
    winners = winners[np.argsort(keys[winners], kind="stable")]
    zeros = np.flatnonzero(~positive)
    pad = rng.choice(zeros, size=h - n_pos, replace=False)
    return np.concatenate([winners, pad])


def feedback_probabilities(u: np.ndarray, v: np.ndarray, beta: float,
                           epsilon: float, clamp: bool = True) -> tuple[float, float]:
    """Positive/negative feedback probabilities for one user-item pair.

    The raw pair always sums to exactly 1; with ``clamp`` (the default) each
    side is clipped to [0, 1] and the pair renormalized so the two-outcome
    draw stays well defined when the leniency shift pushes one side out of
    range near |score| -> 1.
    """
    d = float(np.dot(u, v))
    pos, neg = _feedback_pair(np.array([d]), beta, epsilon, clamp)
    return float(pos[0]), float(neg[0])


def _feedback_pair(dots: np.ndarray, beta: float, epsilon: float,
                   clamp: bool = True) -> tuple[np.ndarray, np.ndarray]:
    d = np.clip(dots, -FEEDBACK_DOT_CLAMP, FEEDBACK_DOT_CLAMP)
    # p_pos = (1+d)^b / ((1+d)^b + (1-d)^b) computed as 1/(1+r) with
    # r = ((1-d)/(1+d))^b; the ratio form cannot produce inf/inf.
    with np.errstate(over="ignore"):
        r = ((1.0 - d) / (1.0 + d)) ** beta
    base = 1.0 / (1.0 + r)
    p_pos = base + epsilon / 2.0
    p_neg = (1.0 - base) - epsilon / 2.0
    if not clamp:
        return p_pos, p_neg
    p_pos = np.clip(p_pos, 0.0, 1.0)
    p_neg = np.clip(p_neg, 0.0, 1.0)
    total = p_pos + p_neg
    return p_pos / total, p_neg / total


def draw_feedback(rng: np.random.Generator, p_pos: float) -> int:
    """+1 with probability p_pos, else -1."""
    if not 0.0 <= p_pos <= 1.0:
        raise InvalidRequest(f"p_pos must lie in [0, 1], got {p_pos}")
    return 1 if rng.random() < p_pos else -1


def update_user(u: np.ndarray, slate_items: Sequence[int],
                signs: Sequence[float], catalog: ItemCatalog,
                eta: float, h: int) -> np.ndarray:
    """u + (eta/h) * sum of signed item vectors; no renormalization."""
    items = np.asarray(slate_items, dtype=int)
    w = np.asarray(signs, dtype=float)
    if items.size != h or w.size != h:
        raise InvalidRequest(f"expected {h} items and signs")
    return np.asarray(u, dtype=float) + (eta / h) * (catalog.item_vectors[:, items] @ w)


@dataclass
class RecommendationSlate:
    """Ordered list of h distinct items shown to one user in one step."""

    user: int
    items: np.ndarray
    probabilities_used: np.ndarray | None = None
    padded: bool = False


@dataclass(frozen=True)
class FeedbackRecord:
    user: int
    item: int
    sign: int
    p_pos_used: float


@dataclass
class StepLog:
    """Everything drawn during one step: slates, signs, and the p_pos used.

    Signs and probabilities are stored as (n, h) arrays; ``feedback``
    materializes the per-user FeedbackRecord lists on demand.
    """

    t: int
    slates: list[RecommendationSlate]
    slate_items: np.ndarray        # (n, h) int
    signs: np.ndarray              # (n, h) int8
    p_pos: np.ndarray              # (n, h) float

    @property
    def feedback(self) -> list[list[FeedbackRecord]]:
        return [self.feedback_records(i) for i in range(len(self.slates))]

    def feedback_records(self, i: int) -> list[FeedbackRecord]:
        return [
            FeedbackRecord(i, int(item), int(sign), float(pp))
            for item, sign, pp in zip(self.slate_items[i], self.signs[i], self.p_pos[i])
        ]


class StrategyHooks:
    """Override points for mitigation strategies; the base class is a no-op.

    ``candidate_count`` widens the sampled pool (for re-ranking hooks);
    every other hook returns None to fall through to the default behavior.
    Hooks must be pure given the state snapshot handed to ``begin_step``.
    """

    candidate_count: int | None = None

    def begin_step(self, user_matrix: np.ndarray, catalog: ItemCatalog,
                   graph: SocialGraph, params: ModelParams) -> None:
        pass

    def user_alphas(self, user_matrix: np.ndarray,
                    params: ModelParams) -> np.ndarray | None:
        return None

    def social_matrix(self, user_matrix: np.ndarray, graph: SocialGraph,
                      params: ModelParams) -> np.ndarray | None:
        return None

    def rerank(self, u: np.ndarray, candidate_items: np.ndarray,
               catalog: ItemCatalog, h: int) -> np.ndarray | None:
        return None

    def update_weights(self, signs: np.ndarray) -> np.ndarray:
        return signs.astype(np.float64)


def _social_matrix(user_matrix: np.ndarray, graph: SocialGraph,
                   gamma: float) -> np.ndarray:
    if gamma == 1.0:
        return user_matrix
    neighbor_means = (graph.influence_matrix @ user_matrix.T).T
    return gamma * user_matrix + (1.0 - gamma) * neighbor_means


def simulate_step(states: UserStates, catalog: ItemCatalog, graph: SocialGraph,
                  params: ModelParams, rng, hooks: StrategyHooks | None = None,
                  record_probabilities: bool = True) -> tuple[UserStates, StepLog]:
    """Run one synchronous interaction round for every user.

    All slates and feedback are computed against U(t); U(t+1) is assembled
    only after every user is processed. The provided ``rng`` is a master seed
    or StreamSplitter; each user consumes exactly one (step, user) stream.
    """
    splitter = _as_splitter(rng)
    hooks = hooks if hooks is not None else StrategyHooks()
    U = states.user_matrix
    c, n = U.shape
    m, h = catalog.m, params.h
    if h > m:
        raise InvalidRequest(f"list length h={h} exceeds item count m={m}")
    t = states.t

    hooks.begin_step(U, catalog, graph, params)

    alphas = hooks.user_alphas(U, params)
    if alphas is None:
        alphas = np.full(n, params.alpha)

    social = hooks.social_matrix(U, graph, params)
    if social is None:
        social = _social_matrix(U, graph, params.gamma)

    logits = (catalog.item_vectors.T @ social) * alphas[None, :]
    if not np.all(np.isfinite(logits)):
        raise NumericalError("non-finite recommendation scores")
    probs = _softmax(logits)                     # (m, n)

    sample_size = h
    if hooks.candidate_count is not None:
        sample_size = min(int(hooks.candidate_count), m)
        if sample_size < h:
            raise InvalidRequest(
                f"candidate pool {sample_size} smaller than list length {h}")

    new_U = np.empty_like(U)
    slates: list[RecommendationSlate] = []
    slate_items = np.empty((n, h), dtype=np.int64)
    signs = np.empty((n, h), dtype=np.int8)
    p_pos_used = np.empty((n, h))
    eta_over_h = params.eta / h

    for i in range(n):
        stream = splitter.user_stream(t, i)
        p_i = probs[:, i]
        padded = int((p_i > 0).sum()) < sample_size
        items = sample_without_replacement(p_i, sample_size, stream)
        reranked = hooks.rerank(U[:, i], items, catalog, h)
        if reranked is not None:
            items = np.asarray(reranked, dtype=np.int64)
        if items.size != h:
            raise InvalidRequest(
                f"slate for user {i} has {items.size} items, expected {h}")

        dots = catalog.item_vectors[:, items].T @ U[:, i]
        pos, _ = _feedback_pair(dots, params.beta, params.epsilon)
        s = np.where(stream.random(h) < pos, 1, -1).astype(np.int8)
        weights = hooks.update_weights(s)
        new_U[:, i] = U[:, i] + eta_over_h * (catalog.item_vectors[:, items] @ weights)

        slate_items[i] = items
        signs[i] = s
        p_pos_used[i] = pos
        slates.append(RecommendationSlate(
            user=i,
            items=items,
            probabilities_used=p_i.copy() if record_probabilities else None,
            padded=padded,
        ))

    log = StepLog(t=t, slates=slates, slate_items=slate_items,
                  signs=signs, p_pos=p_pos_used)
    return UserStates(new_U, t + 1), log


@dataclass
class Trajectory:
    """Per-step metric records plus whatever logs/snapshots were retained."""

    records: list[MetricsRecord]
    final_states: UserStates
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)
    step_logs: list[StepLog] | None = None
    padded_slates: int = 0


def default_metric_schedule(T: int) -> list[int]:
    """Every step through T=1000, every 10th step beyond, final step always."""
    if T <= 1000:
        return list(range(T))
    steps = list(range(0, T, 10))
    if steps[-1] != T - 1:
        steps.append(T - 1)
    return steps


def run(initial_states: UserStates, catalog: ItemCatalog, graph: SocialGraph,
        params: ModelParams, T: int,
        metric_schedule: Iterable[int] | None = None,
        hooks: StrategyHooks | None = None,
        master_seed: int = 0,
        settings: MetricSettings | None = None,
        snapshot_steps: Iterable[int] = (),
        keep_step_logs: bool = False,
        record_probabilities: bool = False) -> Trajectory:
    """Apply ``simulate_step`` T times, evaluating metrics on schedule.

    Metrics at step t are computed from U(t) together with the slates drawn
    at step t (before the update is applied), matching how the per-step
    series are reported.
    """
    if T < 1:
        raise InvalidRequest(f"need T >= 1, got {T}")
    if params.h > catalog.m:
        raise InvalidRequest("recommendation list longer than the catalog")
    schedule = set(default_metric_schedule(T) if metric_schedule is None
                   else (int(s) for s in metric_schedule))
    snap_at = set(int(s) for s in snapshot_steps)
    if settings is None:
        settings = MetricSettings(ts_k=min(50, initial_states.n - 1))

    splitter = _as_splitter(master_seed)
    states = initial_states.copy()
    records: list[MetricsRecord] = []
    snapshots: dict[int, np.ndarray] = {}
    logs: list[StepLog] | None = [] if keep_step_logs else None
    padded = 0

    for t in range(T):
        if t in snap_at:
            snapshots[t] = states.user_matrix.copy()
        new_states, log = simulate_step(
            states, catalog, graph, params, splitter, hooks,
            record_probabilities=record_probabilities)
        padded += sum(1 for s in log.slates if s.padded)
        if t in schedule:
            records.append(compute_metrics_record(
                t, states, log.slate_items, catalog, graph, settings))
        if keep_step_logs:
            logs.append(log)
        states = new_states

    if T in snap_at:
        snapshots[T] = states.user_matrix.copy()
    return Trajectory(records=records, final_states=states,
                      snapshots=snapshots, step_logs=logs,
                      padded_slates=padded)

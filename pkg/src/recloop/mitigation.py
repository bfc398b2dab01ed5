"""Four mitigation strategies, exposed as composable hooks on the engine.

Each strategy targets one override point: UA-alpha replaces the per-user
softmax temperature, FUA reweights the feedback update, DPP re-ranks an
oversampled candidate pool for diversity, and SAR reweights the neighbor
aggregation toward broad-interest users. Exactly one strategy is active per
run; combining them is out of scope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .catalog import ItemCatalog, ModelParams, SocialGraph, UserStates, normalize_columns
from .dynamics import StrategyHooks
from .errors import InvalidRequest
from .metrics import dispersions

STRATEGIES = ("none", "ua_alpha", "fua", "dpp", "sar")
DISPERSION_FLOOR = 1e-12


@dataclass(frozen=True)
class MitigationConfig:
    """Strategy selection and its intensity knobs.

    Defaults follow the reference configuration (sigma=10, rho=0.02,
    theta=0.501, omega=1000). ``sar_strict_denominator`` reproduces the
    printed aggregation rule that divides by sum(w) * |N_i|; the default is
    the normalized weighted mean, which recovers the plain neighbor mean at
    omega=0. ``ua_rescale_by_n`` multiplies the adaptive temperatures by n
    (off by default; the verbatim rule averages the budget over all users).
    """

    strategy: str = "none"
    sigma: float = 10.0
    rho: float = 0.02
    theta: float = 0.501
    omega: float = 1000.0
    candidate_count: int = 1000
    sar_strict_denominator: bool = False
    ua_rescale_by_n: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidRequest(
                f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.candidate_count < 1:
            raise InvalidRequest("candidate_count must be >= 1")


def adaptive_alpha(dispersion_values: np.ndarray, sigma: float,
                   alpha0: float) -> np.ndarray:
    """Per-user temperatures alpha_i = phi_i / sum(phi) * alpha0, phi = (1/dis)^sigma.

    Computed in log space so sigma around 10 cannot overflow; zero
    dispersions are floored at 1e-12 before the power.
    """
    dis = np.maximum(np.asarray(dispersion_values, dtype=float), DISPERSION_FLOOR)
    log_phi = -sigma * np.log(dis)
    log_phi -= log_phi.max()
    w = np.exp(log_phi)
    return (w / w.sum()) * alpha0


def fua_weight(sign: int, rho: float) -> float:
    """Update weight for a feedback sign: +1 -> 1-rho, -1 -> -1-rho."""
    if sign == 1:
        return 1.0 - rho
    if sign == -1:
        return -1.0 - rho
    raise InvalidRequest(f"sign must be +1 or -1, got {sign}")


def dpp_rerank(u: np.ndarray, candidate_items: np.ndarray,
               catalog: ItemCatalog, theta: float, h: int) -> np.ndarray:
    """Greedy diversity-penalized selection of h items from the candidate pool.

    The first pick maximizes relevance u.v; each later pick maximizes
    (1-theta) u.v - theta v.(normalized sum of chosen vectors). Ties break
    toward the lowest item index.
    """
    cands = np.asarray(candidate_items, dtype=np.int64)
    if cands.size < h:
        raise InvalidRequest(
            f"candidate pool of {cands.size} cannot fill a list of {h}")
    if np.unique(cands).size != cands.size:
        raise InvalidRequest("candidate items must be distinct")
    order = np.argsort(cands, kind="stable")   # argmax then prefers low item ids
    cands = cands[order]
    vecs = catalog.item_vectors[:, cands]      # (c, K)
    relevance = vecs.T @ np.asarray(u, dtype=float)

    chosen = np.zeros(cands.size, dtype=bool)
    first = int(np.argmax(relevance))
    chosen[first] = True
    picks = [first]
    chosen_sum = vecs[:, first].copy()
    for _ in range(1, h):
        direction = chosen_sum / np.linalg.norm(chosen_sum)
        scores = (1.0 - theta) * relevance - theta * (vecs.T @ direction)
        scores[chosen] = -np.inf
        nxt = int(np.argmax(scores))
        chosen[nxt] = True
        picks.append(nxt)
        chosen_sum += vecs[:, nxt]
    return cands[np.array(picks)]


def sar_social_representation(states, graph: SocialGraph, i: int, gamma: float,
                              omega: float, dispersion_values: np.ndarray,
                              strict_denominator: bool = False) -> np.ndarray:
    """Social blend with neighbors reweighted by exp(-omega * dispersion).

    The default normalizes by the weight sum (a proper convex combination,
    recovering the plain neighbor mean at omega=0); the strict variant
    divides by sum(w) * |N_i| as printed in the aggregation rule.
    """
    matrix = states.user_matrix if isinstance(states, UserStates) else np.asarray(states, dtype=float)
    u = matrix[:, i]
    if gamma == 1.0 or graph.isolated[i]:
        return u.copy()
    nb = graph.neighbor_lists[i]
    dis = np.asarray(dispersion_values, dtype=float)[nb]
    log_w = -omega * dis
    w = np.exp(log_w - log_w.max())
    if strict_denominator:
        raw = np.exp(log_w)
        denom = raw.sum() * len(nb)
        if denom == 0:
            raise InvalidRequest("strict denominator underflowed to zero")
        agg = (matrix[:, nb] @ raw) / denom
    else:
        agg = (matrix[:, nb] @ w) / w.sum()
    return gamma * u + (1.0 - gamma) * agg


class AdaptiveAlphaHooks(StrategyHooks):
    """Redistribute the temperature budget toward broad-interest users."""

    def __init__(self, sigma: float, rescale_by_n: bool = False):
        self.sigma = sigma
        self.rescale_by_n = rescale_by_n
        self._dispersions: np.ndarray | None = None

    def begin_step(self, user_matrix, catalog, graph, params):
        self._dispersions = dispersions(user_matrix)

    def user_alphas(self, user_matrix, params):
        alphas = adaptive_alpha(self._dispersions, self.sigma, params.alpha)
        if self.rescale_by_n:
            alphas = alphas * user_matrix.shape[1]
        return alphas


class FeedbackAdjustmentHooks(StrategyHooks):
    """Shift update weights to emphasize negative feedback."""

    def __init__(self, rho: float):
        self.rho = rho

    def update_weights(self, signs):
        return np.where(signs > 0, 1.0 - self.rho, -1.0 - self.rho)


class DiversityRerankHooks(StrategyHooks):
    """Oversample a candidate pool and greedily re-rank it for diversity.

    Relevance is scored against the l2-normalized user vector so the
    diversity penalty stays commensurate as raw norms grow.
    """

    def __init__(self, theta: float, candidate_count: int = 1000):
        self.theta = theta
        self.candidate_count = candidate_count

    def rerank(self, u, candidate_items, catalog, h):
        norm = np.linalg.norm(u)
        un = u / norm if norm > 0 else u
        return dpp_rerank(un, candidate_items, catalog, self.theta, h)


class SocialReweightHooks(StrategyHooks):
    """Downweight extreme-interest neighbors during social aggregation."""

    def __init__(self, omega: float, strict_denominator: bool = False):
        self.omega = omega
        self.strict_denominator = strict_denominator

    def social_matrix(self, user_matrix, graph, params):
        if params.gamma == 1.0:
            return user_matrix
        dis = dispersions(user_matrix)
        weighted = _reweighted_influence(graph, dis, self.omega,
                                         self.strict_denominator)
        agg = (weighted @ user_matrix.T).T
        return params.gamma * user_matrix + (1.0 - params.gamma) * agg


def _reweighted_influence(graph: SocialGraph, dis: np.ndarray, omega: float,
                          strict_denominator: bool) -> sp.csr_matrix:
    base = graph.influence_matrix
    indptr, indices = base.indptr, base.indices
    data = np.empty_like(base.data)
    for i in range(graph.n):
        lo, hi = indptr[i], indptr[i + 1]
        cols = indices[lo:hi]
        if graph.isolated[i]:
            data[lo:hi] = 1.0          # self-loop row stays the identity blend
            continue
        log_w = -omega * dis[cols]
        if strict_denominator:
            raw = np.exp(log_w)
            data[lo:hi] = raw / (raw.sum() * len(cols))
        else:
            w = np.exp(log_w - log_w.max())
            data[lo:hi] = w / w.sum()
    return sp.csr_matrix((data, indices.copy(), indptr.copy()), shape=base.shape)


def build_hooks(config: MitigationConfig, params: ModelParams) -> StrategyHooks:
    """Instantiate the hook set for the configured strategy."""
    if config.strategy == "none":
        return StrategyHooks()
    if config.strategy == "ua_alpha":
        return AdaptiveAlphaHooks(config.sigma, config.ua_rescale_by_n)
    if config.strategy == "fua":
        return FeedbackAdjustmentHooks(config.rho)
    if config.strategy == "dpp":
        if config.candidate_count < params.h:
            raise InvalidRequest("candidate_count must be at least h")
        return DiversityRerankHooks(config.theta, config.candidate_count)
    if config.strategy == "sar":
        return SocialReweightHooks(config.omega, config.sar_strict_denominator)
    raise InvalidRequest(f"unknown strategy {config.strategy!r}")

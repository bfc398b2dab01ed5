"""Linearized matrix dynamics, convergence checks, and closed-form fixed points.

The linearization replaces the softmax and the feedback law by their
first-order expansions; the resulting update is exactly an affine map
U -> X + Y U + Z U S~^T on the c x n user matrix. Convergence and the
fixed point are analyzed on the vectorized nc-dimensional system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .catalog import ItemCatalog, ModelParams, SocialGraph
from .errors import DegenerateCatalog, InvalidRequest, SingularSystem

DENSE_SOLVE_LIMIT = 2000
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class OperatorSet:
    """Affine-update operators X, Y, Z plus the influence matrix they act with."""

    X: np.ndarray                  # c x n
    Y: np.ndarray                  # c x c
    Z: np.ndarray                  # c x c
    S_tilde: sp.csr_matrix         # n x n row-stochastic
    params_used: ModelParams


def build_operators(catalog: ItemCatalog, graph: SocialGraph,
                    params: ModelParams) -> OperatorSet:
    """Assemble the affine-update operators from the item matrix and parameters.

    With epsilon = 0 both X and Z vanish exactly and Y reduces to
    I + (eta*beta/m) V V^T, which is diagonal for single-category catalogs.
    """
    V = catalog.item_vectors
    m = catalog.m
    a, b, g, e, eta = (params.alpha, params.beta, params.gamma,
                       params.epsilon, params.eta)
    vvt = V @ V.T
    vsum = V.sum(axis=1)
    outer = np.outer(vsum, vsum)

    if e == 0.0:
        X = np.zeros((catalog.c, graph.n))
        Z = np.zeros((catalog.c, catalog.c))
        Y = np.eye(catalog.c) + (eta * b / m) * vvt
    else:
        X = np.tile((eta * e / m) * vsum[:, None], (1, graph.n))
        Y = (np.eye(catalog.c)
             + (eta * (a * e * g + b) / m) * vvt
             - (eta * a * e * g / m ** 2) * outer)
        Z = ((eta * a * e * (1 - g) / m) * vvt
             - (eta * a * e * (1 - g) / m ** 2) * outer)
    return OperatorSet(X=X, Y=Y, Z=Z, S_tilde=graph.influence_matrix,
                       params_used=params)


def matrix_step(U: np.ndarray, ops: OperatorSet) -> np.ndarray:
    """One application of the affine map X + Y U + Z U S~^T."""
    U = np.asarray(U, dtype=float)
    social = (ops.S_tilde @ (ops.Z @ U).T).T
    return ops.X + ops.Y @ U + social


def linearized_expected_update(U: np.ndarray, catalog: ItemCatalog,
                               graph: SocialGraph,
                               params: ModelParams) -> np.ndarray:
    """Expected one-step update under the first-order expansions, per user.

    Computed directly from per-item sums (not from the assembled operators):
    u_i gains (eta/m) * sum_j (beta v_j.u_i + eps + alpha*eps v_j.s_i
    - (alpha*eps/m) sum_k v_k.s_i) v_j, which is algebraically identical to
    ``matrix_step(U, build_operators(...))``.
    """
    U = np.asarray(U, dtype=float)
    V = catalog.item_vectors
    m = catalog.m
    a, b, g, e, eta = (params.alpha, params.beta, params.gamma,
                       params.epsilon, params.eta)
    if g == 1.0:
        S_rep = U
    else:
        S_rep = g * U + (1 - g) * (graph.influence_matrix @ U.T).T
    vtu = V.T @ U                      # (m, n)
    vts = V.T @ S_rep                  # (m, n)
    coefs = b * vtu + e + a * e * vts - (a * e / m) * vts.sum(axis=0)[None, :]
    return U + (eta / m) * (V @ coefs)


@dataclass(frozen=True)
class ConvergenceReport:
    """Sufficient-condition evaluation for convergence of the affine dynamics.

    ``margin`` is eta*(beta/2 + a*e*g/2 + beta^2/(8*a*e*g)); it is undefined
    (degenerate) when alpha*epsilon*gamma <= 0, in which case the decision
    falls back to the operator norm bound when operators are supplied.
    """

    margin: float | None
    norm_bound: float | None
    satisfied: bool
    degenerate: bool


def convergence_margin(params: ModelParams,
                       ops: OperatorSet | None = None) -> ConvergenceReport:
    aeg = params.alpha * params.epsilon * params.gamma
    degenerate = aeg <= 0
    margin = None
    if not degenerate:
        margin = params.eta * (params.beta / 2 + aeg / 2
                               + params.beta ** 2 / (8 * aeg))
    norm_bound = infinity_norm_bound(ops) if ops is not None else None
    satisfied = bool((margin is not None and margin < 1)
                     or (norm_bound is not None and norm_bound < 1))
    return ConvergenceReport(margin=margin, norm_bound=norm_bound,
                             satisfied=satisfied, degenerate=degenerate)


def infinity_norm_bound(ops: OperatorSet) -> float:
    """Max absolute row sums of Y and Z, summed."""
    return float(np.abs(ops.Y).sum(axis=1).max()
                 + np.abs(ops.Z).sum(axis=1).max())


def growth_norm_bound(ops: OperatorSet) -> float:
    """Max absolute row sums of (Y - I) and Z, summed.

    This is the quantity the closed-form analysis actually bounds by the
    convergence margin: the identity part of Y drops out of that chain. Note
    Y - I is positive semidefinite on the span of the item vectors, so the
    full affine map is never a strict contraction when beta > 0; the margin
    certifies slow growth of the bias terms, not convergence of iteration.
    """
    c = ops.Y.shape[0]
    return float(np.abs(ops.Y - np.eye(c)).sum(axis=1).max()
                 + np.abs(ops.Z).sum(axis=1).max())


def vec(U: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization (Fortran order)."""
    return np.asarray(U).reshape(-1, order="F")


def unvec(x: np.ndarray, c: int, n: int) -> np.ndarray:
    return np.asarray(x).reshape((c, n), order="F")


def fixed_point(ops: OperatorSet, dense_limit: int = DENSE_SOLVE_LIMIT,
                condition_limit: float = CONDITION_LIMIT) -> np.ndarray:
    """Solve (I - (I (x) Y + S~ (x) Z)) vec(U*) = vec(X) for the fixed point.

    Systems up to ``dense_limit`` unknowns are solved densely with an explicit
    condition estimate; larger ones use a matrix-free GMRES that never
    materializes the Kronecker product. The returned U* always satisfies
    the residual bound ||step(U*) - U*||_inf <= 1e-10 (1 + ||U*||_inf),
    otherwise SingularSystem is raised.
    """
    c, n = ops.X.shape
    nc = n * c
    b = vec(ops.X)

    if nc <= dense_limit:
        A = np.eye(nc) - (np.kron(np.eye(n), ops.Y)
                          + np.kron(ops.S_tilde.toarray(), ops.Z))
        cond = float(np.linalg.cond(A, 1))
        if not np.isfinite(cond) or cond > condition_limit:
            raise SingularSystem(
                f"fixed-point system condition {cond:.3e} exceeds "
                f"{condition_limit:.1e}", condition=cond)
        star = unvec(np.linalg.solve(A, b), c, n)
    else:
        def apply(x):
            U = unvec(x, c, n)
            return x - vec(ops.Y @ U + (ops.S_tilde @ (ops.Z @ U).T).T)

        op = spla.LinearOperator((nc, nc), matvec=apply)
        x, info = spla.gmres(op, b, rtol=1e-13, atol=0.0,
                             restart=200, maxiter=500)
        if info != 0:
            raise SingularSystem(
                f"matrix-free solve did not converge (info={info})")
        star = unvec(x, c, n)

    residual = float(np.max(np.abs(matrix_step(star, ops) - star)))
    scale = 1.0 + float(np.max(np.abs(star))) if star.size else 1.0
    if residual > 1e-10 * scale:
        raise SingularSystem(
            f"fixed-point residual {residual:.3e} too large for scale {scale:.3e}")
    return star


def scaling_factors(category_mass: np.ndarray, lam: float) -> np.ndarray:
    """Per-coordinate growth factors 1 + lam * n_o of the bias-only dynamics."""
    return 1.0 + lam * np.asarray(category_mass, dtype=float)


def homogenization_condition(u_i: np.ndarray, u_j: np.ndarray, k: int,
                             category_mass: np.ndarray, lam: float) -> bool:
    """Alignment condition under which the coordinate-scaling map cannot
    decrease the pair's inner product."""
    if lam <= 0:
        raise InvalidRequest("lam must be positive")
    nmass = np.asarray(category_mass, dtype=float)
    terms = 2 * nmass + lam * nmass ** 2
    denom = terms.sum() - terms[k]
    if denom == 0:
        raise DegenerateCatalog(
            "all category mass concentrated on the tested dimension")
    ratio = terms[k] / denom
    rhs = (np.linalg.norm(u_i) * np.linalg.norm(u_j)
           / math.sqrt(1.0 + ratio ** 2))
    return bool(u_i[k] * u_j[k] >= rhs)


@dataclass
class HomogenizationReport:
    """Per-pair monotonicity of inner products under the scaling map."""

    k: int
    steps: int
    checked_pairs: list[tuple[int, int]] = field(default_factory=list)
    excluded_pairs: list[tuple[int, int]] = field(default_factory=list)
    violations: list[tuple[int, int, int, float]] = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        return not self.violations


def steady_homogenization_check(U0: np.ndarray, catalog: ItemCatalog,
                                params: ModelParams, T: int,
                                pairs: list[tuple[int, int]] | None = None,
                                tol: float = 1e-12) -> HomogenizationReport:
    """Run T deterministic scaling steps and check pairwise monotonicity.

    Only pairs that satisfy the alignment condition at k = argmax n_o enter
    the assertion set; the rest are reported as excluded. Requires the
    bias-only regime (epsilon = 0, gamma = 1) and a single-category catalog.
    """
    if params.epsilon != 0 or params.gamma != 1:
        raise InvalidRequest("scaling-map check requires epsilon=0, gamma=1")
    if not catalog.all_single_category():
        raise InvalidRequest("scaling-map check requires a single-category catalog")
    U = np.asarray(U0, dtype=float).copy()
    n = U.shape[1]
    lam = params.eta * params.beta / catalog.m
    mass = catalog.category_mass
    k = int(np.argmax(mass))
    report = HomogenizationReport(k=k, steps=T)

    if pairs is None:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for (i, j) in pairs:
        if homogenization_condition(U[:, i], U[:, j], k, mass, lam):
            report.checked_pairs.append((i, j))
        else:
            report.excluded_pairs.append((i, j))

    if T == 0 or not report.checked_pairs:
        return report

    idx_i = np.array([p[0] for p in report.checked_pairs])
    idx_j = np.array([p[1] for p in report.checked_pairs])
    factors = scaling_factors(mass, lam)[:, None]
    inner = (U[:, idx_i] * U[:, idx_j]).sum(axis=0)
    for t in range(T):
        U = factors * U
        new_inner = (U[:, idx_i] * U[:, idx_j]).sum(axis=0)
        slack = tol * np.maximum(1.0, np.abs(inner))
        bad = np.flatnonzero(new_inner < inner - slack)
        for b in bad:
            report.violations.append(
                (int(idx_i[b]), int(idx_j[b]), t, float(new_inner[b] - inner[b])))
        inner = new_inner
    return report


def expected_entropy_series(u0: np.ndarray, category_mass: np.ndarray,
                            alpha: float, lam: float, T: int) -> np.ndarray:
    """Category-distribution entropy along the deterministic scaling dynamics.

    Evolves u^(o) <- (1 + lam n_o) u^(o) and at each of the T states computes
    the softmax-with-mass distribution p_o prop. to n_o exp(alpha u^(o)) and
    its entropy (0 ln 0 := 0). Accepts a single vector (returns shape (T,))
    or a (c, n) matrix (returns shape (T, n)).
    """
    u = np.asarray(u0, dtype=float)
    single = u.ndim == 1
    if single:
        u = u[:, None]
    nmass = np.asarray(category_mass, dtype=float)
    if np.any(nmass < 0):
        raise InvalidRequest("category masses must be non-negative")
    factors = scaling_factors(nmass, lam)[:, None]
    with np.errstate(divide="ignore"):
        log_mass = np.where(nmass > 0, np.log(np.where(nmass > 0, nmass, 1.0)),
                            -np.inf)[:, None]
    out = np.empty((T, u.shape[1]))
    cur = u.copy()
    for t in range(T):
        logits = alpha * cur + log_mass
        shifted = logits - logits.max(axis=0, keepdims=True)
        w = np.exp(shifted)
        p = w / w.sum(axis=0, keepdims=True)
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
        out[t] = -terms.sum(axis=0)
        cur = factors * cur
    return out[:, 0] if single else out

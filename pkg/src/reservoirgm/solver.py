"""Regularized max-det estimators for Gaussian graphical models.

Three estimators over a sample covariance, all solved by ADMM with the
log-det term handled through an eigendecomposition prox:

- ``fit_sparse_ggm``: l1-penalized precision estimation (latent part
  constrained to zero),
- ``fit_lvggm``: sparse-minus-low-rank precision decomposition with a
  trace penalty on the low-rank part,
- ``fit_conditional_lvggm``: joint precision over observed variables and
  covariates, with the sparse + low-rank structure imposed on the
  observed-variable block only.

Every fit is certified by an explicitly recomputed KKT residual; a fit
that cannot reach the requested tolerance raises ConvergenceError rather
than returning a silently inaccurate model.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import serialize
from ._linalg import frob, logdet_pd, sym

MODEL_FORMAT_VERSION = 1

# Eigenvalues of L below RANK_TOL * lambda_max(L) count as zero when
# reporting the latent rank; first-order solvers return approximately
# low-rank iterates.
RANK_TOL = 1e-6

# |S_ij| > EDGE_TOL * sqrt(S_ii S_jj) counts as an edge; soft-thresholding
# produces exact zeros but prox ordering can leave dust.
EDGE_TOL = 1e-6

# Sample covariances with eigenvalues in [-PSD_CLIP_TOL * trace, 0) are
# clipped to PSD; more negative is a hard error.
PSD_CLIP_TOL = 1e-10

_KKT_EVERY = 25


class ConvergenceError(RuntimeError):
    """ADMM did not reach the requested KKT tolerance within max_iter."""

    def __init__(self, message, primal=None, dual=None, kkt=None, iterations=None):
        super().__init__(message)
        self.primal = primal
        self.dual = dual
        self.kkt = kkt
        self.iterations = iterations


@dataclass
class SampleCov:
    """Sample covariance (1/n) Y'Y with its observation count and labels."""

    matrix: np.ndarray
    n: int
    labels: list[str] | None = None

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("covariance must be square, got shape %r" % (M.shape,))
        scale = max(np.abs(M).max(), 1.0)
        if np.abs(M - M.T).max() > 1e-8 * scale:
            raise ValueError("covariance is not symmetric")
        M = sym(M)
        w = np.linalg.eigvalsh(M)
        floor = -PSD_CLIP_TOL * max(np.trace(M), 1e-300)
        if w[0] < floor:
            raise ValueError(
                "covariance is not PSD: min eigenvalue %g below tolerance %g"
                % (w[0], floor)
            )
        if w[0] < 0.0:
            # numerically noisy input: clip the slightly negative eigenvalues
            w_, Q = np.linalg.eigh(M)
            M = sym((Q * np.clip(w_, 0.0, None)) @ Q.T)
        self.matrix = M
        if self.labels is not None and len(self.labels) != M.shape[0]:
            raise ValueError("labels length does not match covariance size")

    @property
    def p(self):
        return self.matrix.shape[0]


@dataclass
class Hyperparams:
    """Regularization pair: lam scales the whole penalty, gamma trades the
    elementwise l1 term against the trace term."""

    lam: float
    gamma: float = 1.0

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")


@dataclass
class SolverConfig:
    penalty_rho: float = 1.0
    tol_primal: float = 1e-7
    tol_dual: float = 1e-7
    tol_kkt: float = 1e-6
    max_iter: int = 20000
    penalize_diagonal: bool = True
    over_relax: float = 1.5
    rank_tol: float = RANK_TOL

    def __post_init__(self):
        for name in ("penalty_rho", "tol_primal", "tol_dual", "tol_kkt"):
            if getattr(self, name) <= 0:
                raise ValueError("%s must be > 0" % name)
        if not 1.0 <= self.over_relax < 2.0:
            raise ValueError("over_relax must be in [1, 2)")


@dataclass
class KktReport:
    """Optimality residuals, all in the entrywise / spectral infinity norm.

    stationarity: subgradient distance for the penalized block, gradient
        magnitude for unpenalized entries, and excess of the low-rank
        multiplier bound.
    cone: feasibility of the cone constraints (negative part of eig(L),
        symmetry drift; infinite if S - L is not PD).
    complementarity: |<lam*I - G_y, L>| for the low-rank block.
    """

    stationarity: float
    cone: float
    complementarity: float

    @property
    def overall(self):
        return max(self.stationarity, self.cone, self.complementarity)


@dataclass
class SparseModel:
    S_hat: np.ndarray
    objective: float
    iterations: int
    kkt_residual: float
    lam: float
    gamma: float
    penalize_diagonal: bool = True
    labels: list[str] | None = None
    _state: tuple | None = field(default=None, repr=False, compare=False)

    kind = "sparse"

    @property
    def precision(self):
        return self.S_hat

    @property
    def L_hat(self):
        return np.zeros_like(self.S_hat)


@dataclass
class LatentModel:
    S_hat: np.ndarray
    L_hat: np.ndarray
    rank_k: int
    objective: float
    iterations: int
    kkt_residual: float
    lam: float
    gamma: float
    penalize_diagonal: bool = True
    labels: list[str] | None = None
    _state: tuple | None = field(default=None, repr=False, compare=False)

    kind = "latent"

    @property
    def precision(self):
        return self.S_hat - self.L_hat


@dataclass
class ConditionalModel:
    Theta_hat: np.ndarray
    S_y: np.ndarray
    L_y: np.ndarray
    rank_k: int
    p: int
    q: int
    objective: float
    iterations: int
    kkt_residual: float
    lam: float
    gamma: float
    penalize_diagonal: bool = True
    labels: list[str] | None = None
    _state: tuple | None = field(default=None, repr=False, compare=False)

    kind = "conditional"

    @property
    def precision(self):
        return self.Theta_hat


def sample_covariance(panel, labels=None):
    """Sample covariance (1/n) Y'Y of an anomaly panel (no mean removal;
    inputs are already centered by the climatology step).

    ``panel`` may be an object with ``matrix``/``labels`` attributes or a
    plain (n, p) array.
    """
    Y = getattr(panel, "matrix", panel)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ValueError("panel must be 2-D (observations x variables)")
    n = Y.shape[0]
    if n < 2:
        raise ValueError("need at least 2 observations, got %d" % n)
    if labels is None:
        labels = getattr(panel, "labels", None)
        if labels is None:
            labels = getattr(panel, "stations", None)
    C = sym(Y.T @ Y / n)
    return SampleCov(matrix=C, n=n, labels=list(labels) if labels else None)


def log_likelihood(Theta, cov):
    """Gaussian log-likelihood log det(Theta) - tr(Theta Sigma_hat), with
    additive constants discarded.

    Raises ValueError for non-PD Theta (never returns NaN).
    """
    Theta = np.asarray(Theta, dtype=float)
    Sigma = cov.matrix if isinstance(cov, SampleCov) else np.asarray(cov, dtype=float)
    return logdet_pd(Theta) - float(np.sum(Theta * Sigma))


def soft_threshold(M, t, penalize_diagonal=True):
    """Entrywise sign(m) * max(|m| - t, 0); diagonal untouched when
    penalize_diagonal is False."""
    if t < 0:
        raise ValueError("threshold must be >= 0")
    M = np.asarray(M, dtype=float)
    out = np.sign(M) * np.maximum(np.abs(M) - t, 0.0)
    if not penalize_diagonal and out.ndim == 2:
        np.fill_diagonal(out, np.diag(M))
    return out


def spectral_floor_prox(M, t):
    """Eigenvalue shrink-and-floor: U max(D - t, 0) U' for symmetric M.

    This is the prox of t * tr(L) plus the PSD-cone indicator.
    """
    if t < 0:
        raise ValueError("threshold must be >= 0")
    M = np.asarray(M, dtype=float)
    w, Q = np.linalg.eigh(M)
    w = np.maximum(w - t, 0.0)
    return sym((Q * w) @ Q.T)


def numerical_rank(L, rank_tol=RANK_TOL):
    """Count of eigenvalues above rank_tol * lambda_max(L) (0 if
    lambda_max <= 1e-10)."""
    w = np.linalg.eigvalsh(sym(np.asarray(L, dtype=float)))
    top = w[-1] if w.size else 0.0
    if top <= 1e-10:
        return 0
    return int(np.sum(w > rank_tol * top))


def edge_support(S, tol=EDGE_TOL):
    """Boolean off-diagonal support of S under the scale-relative edge rule."""
    S = np.asarray(S, dtype=float)
    d = np.sqrt(np.outer(np.diag(S), np.diag(S)))
    sup = np.abs(S) > tol * d
    np.fill_diagonal(sup, False)
    return sup


def edge_count(S, tol=EDGE_TOL):
    """Number of distinct edges (unordered pairs) in the support of S."""
    return int(edge_support(S, tol).sum() // 2)


def _logdet_prox(B, Sigma, rho):
    # argmin_R -log det R + tr(R Sigma) + (rho/2)||R - B||_F^2
    w, Q = np.linalg.eigh(rho * B - Sigma)
    r = (w + np.sqrt(w * w + 4.0 * rho)) / (2.0 * rho)
    return (Q * r) @ Q.T


def _penalty_norm(Sy, penalize_diagonal):
    total = float(np.abs(Sy).sum())
    if not penalize_diagonal:
        total -= float(np.abs(np.diag(Sy)).sum())
    return total


def _objective(S, L, Sigma, p, lam, gamma, penalize_diagonal):
    M = S - L
    return (
        -logdet_pd(M)
        + float(np.sum(M * Sigma))
        + lam * (gamma * _penalty_norm(S[:p, :p], penalize_diagonal) + float(np.trace(L[:p, :p])))
    )


def _kkt_residuals(S, L, Sigma, p, lam, gamma, penalize_diagonal, with_latent):
    """Recompute KKT residuals at (S, L) from scratch.

    Returns a KktReport; residuals are infinite when S - L is not PD.
    """
    m = Sigma.shape[0]
    M = S - L
    w, Q = np.linalg.eigh(sym(M))
    asym = max(np.abs(S - S.T).max(), np.abs(L - L.T).max())
    if w[0] <= 0:
        return KktReport(np.inf, np.inf, np.inf)
    Minv = (Q / w) @ Q.T
    G = Sigma - Minv

    Gy = G[:p, :p]
    Sy = S[:p, :p]
    thr = lam * gamma

    pen = np.ones((p, p), dtype=bool)
    if not penalize_diagonal:
        np.fill_diagonal(pen, False)
    nz = (Sy != 0.0) & pen
    zz = (~(Sy != 0.0)) & pen

    stat = 0.0
    if nz.any():
        stat = max(stat, float(np.abs(Gy[nz] + thr * np.sign(Sy[nz])).max()))
    if zz.any():
        stat = max(stat, float(np.maximum(np.abs(Gy[zz]) - thr, 0.0).max()))
    if not penalize_diagonal:
        stat = max(stat, float(np.abs(np.diag(Gy)).max()))
    if m > p:
        # covariate blocks are unpenalized: their gradient must vanish
        stat = max(stat, float(np.abs(G[p:, :]).max()))
        stat = max(stat, float(np.abs(G[:p, p:]).max()))

    cone = float(asym)
    comp = 0.0
    if with_latent:
        Ly = L[:p, :p]
        gy_max = float(np.linalg.eigvalsh(sym(Gy))[-1])
        stat = max(stat, max(gy_max - lam, 0.0))
        l_min = float(np.linalg.eigvalsh(sym(Ly))[0])
        cone = max(cone, max(-l_min, 0.0))
        comp = abs(float(np.sum((lam * np.eye(p) - Gy) * Ly)))
    return KktReport(stat, cone, comp)


def _unpack_warm(warm, m):
    if warm is None:
        return None
    state = getattr(warm, "_state", warm)
    if state is None:
        return None
    S, L, U, rho = state
    if S.shape != (m, m):
        raise ValueError("warm start has shape %r, expected (%d, %d)" % (S.shape, m, m))
    return S.copy(), L.copy(), U.copy(), rho


def _admm_latent(Sigma, p, lam, gamma, cfg, warm=None, with_latent=True):
    """Shared ADMM core.

    with_latent=False freezes L at zero (sparse GGM); p < m adds
    unpenalized covariate blocks (conditional estimator).
    """
    m = Sigma.shape[0]
    alpha = cfg.over_relax

    state = _unpack_warm(warm, m)
    if state is not None:
        S, L, U, rho = state
    else:
        d = np.diag(Sigma).copy()
        S = np.diag(1.0 / (d + lam * gamma + 1e-12))
        L = np.zeros((m, m))
        U = np.zeros((m, m))
        rho = cfg.penalty_rho

    thr_scale = lam * gamma
    report = None
    R = S - L
    for it in range(1, cfg.max_iter + 1):
        R = _logdet_prox(S - L - U, Sigma, rho)
        if alpha != 1.0:
            Rh = alpha * R + (1.0 - alpha) * (S - L)
        else:
            Rh = R
        ML_old = S - L

        T = Rh + L + U
        S = T.copy()
        S[:p, :p] = soft_threshold(T[:p, :p], thr_scale / rho, cfg.penalize_diagonal)
        if with_latent:
            N = S - Rh - U
            L = np.zeros((m, m))
            L[:p, :p] = spectral_floor_prox(N[:p, :p], lam / rho)
        U = U + (Rh - S + L)

        r_norm = frob(R - S + L)
        s_norm = rho * frob((S - L) - ML_old)
        scale_pri = max(frob(R), frob(S - L), 1.0)
        scale_dual = max(rho * frob(U), 1.0)

        resid_ok = r_norm <= cfg.tol_primal * scale_pri and s_norm <= cfg.tol_dual * scale_dual
        if resid_ok or it % _KKT_EVERY == 0:
            report = _kkt_residuals(
                sym(S), sym(L), Sigma, p, lam, gamma, cfg.penalize_diagonal, with_latent
            )
            if report.overall <= cfg.tol_kkt:
                return sym(S), sym(L), U, rho, it, report

        # residual balancing (factor 2 when the ratio exceeds 10)
        if r_norm > 10.0 * s_norm:
            rho *= 2.0
            U /= 2.0
        elif s_norm > 10.0 * r_norm:
            rho /= 2.0
            U *= 2.0

    raise ConvergenceError(
        "ADMM did not converge in %d iterations (primal %.3g, dual %.3g, kkt %.3g)"
        % (cfg.max_iter, r_norm, s_norm, report.overall if report else np.inf),
        primal=r_norm,
        dual=s_norm,
        kkt=report.overall if report else None,
        iterations=cfg.max_iter,
    )


def _check_fit_inputs(cov, h):
    if not isinstance(cov, SampleCov):
        cov = SampleCov(np.asarray(cov, dtype=float), n=2)
    w_min = float(np.linalg.eigvalsh(cov.matrix)[0])
    if h.lam * h.gamma == 0.0 and w_min <= 1e-12 * max(np.trace(cov.matrix), 1.0):
        raise ValueError(
            "singular sample covariance requires a positive penalty for a bounded solution"
        )
    return cov


def fit_sparse_ggm(cov, h, cfg=None, warm=None):
    """l1-penalized precision estimation (latent component fixed at zero).

    Minimizes -log det S + tr(S Sigma_hat) + lam * gamma * ||S||_1 over
    S > 0, where the l1 norm covers the diagonal unless
    cfg.penalize_diagonal is False.
    """
    cfg = cfg or SolverConfig()
    cov = _check_fit_inputs(cov, h)
    p = cov.p
    S, L, U, rho, it, report = _admm_latent(
        cov.matrix, p, h.lam, h.gamma, cfg, warm=warm, with_latent=False
    )
    obj = _objective(S, L, cov.matrix, p, h.lam, h.gamma, cfg.penalize_diagonal)
    return SparseModel(
        S_hat=S,
        objective=obj,
        iterations=it,
        kkt_residual=report.overall,
        lam=h.lam,
        gamma=h.gamma,
        penalize_diagonal=cfg.penalize_diagonal,
        labels=cov.labels,
        _state=(S, L, U, rho),
    )


def fit_lvggm(cov, h, cfg=None, warm=None):
    """Sparse-minus-low-rank precision estimation.

    Minimizes -log det(S - L) + tr((S - L) Sigma_hat)
    + lam * (gamma * ||S||_1 + tr(L)) subject to S - L > 0, L >= 0.
    """
    cfg = cfg or SolverConfig()
    if h.lam <= 0:
        raise ValueError("lam must be > 0 for the latent-variable estimator")
    cov = _check_fit_inputs(cov, h)
    p = cov.p
    S, L, U, rho, it, report = _admm_latent(
        cov.matrix, p, h.lam, h.gamma, cfg, warm=warm, with_latent=True
    )
    obj = _objective(S, L, cov.matrix, p, h.lam, h.gamma, cfg.penalize_diagonal)
    return LatentModel(
        S_hat=S,
        L_hat=L,
        rank_k=numerical_rank(L, cfg.rank_tol),
        objective=obj,
        iterations=it,
        kkt_residual=report.overall,
        lam=h.lam,
        gamma=h.gamma,
        penalize_diagonal=cfg.penalize_diagonal,
        labels=cov.labels,
        _state=(S, L, U, rho),
    )


def fit_conditional_lvggm(cov_joint, p, h, cfg=None, warm=None):
    """Joint precision over (y, x) with sparse + low-rank structure on the
    y block only; the y-x and x blocks are unpenalized.

    The first ``p`` indices of ``cov_joint`` are the observed y variables.
    With q = 0 this reduces exactly to fit_lvggm.
    """
    cfg = cfg or SolverConfig()
    if h.lam <= 0:
        raise ValueError("lam must be > 0 for the latent-variable estimator")
    cov_joint = _check_fit_inputs(cov_joint, h)
    m = cov_joint.p
    if not 0 < p <= m:
        raise ValueError("p must be in 1..%d, got %d" % (m, p))
    S, L, U, rho, it, report = _admm_latent(
        cov_joint.matrix, p, h.lam, h.gamma, cfg, warm=warm, with_latent=True
    )
    Theta = S - L
    obj = _objective(S, L, cov_joint.matrix, p, h.lam, h.gamma, cfg.penalize_diagonal)
    return ConditionalModel(
        Theta_hat=Theta,
        S_y=S[:p, :p].copy(),
        L_y=L[:p, :p].copy(),
        rank_k=numerical_rank(L[:p, :p], cfg.rank_tol),
        p=p,
        q=m - p,
        objective=obj,
        iterations=it,
        kkt_residual=report.overall,
        lam=h.lam,
        gamma=h.gamma,
        penalize_diagonal=cfg.penalize_diagonal,
        labels=cov_joint.labels,
        _state=(S, L, U, rho),
    )


def kkt_report(model, cov, h=None):
    """Recompute optimality residuals for a fitted model from scratch.

    This is the certification path: it does not reuse anything the solver
    cached beyond the returned matrices.
    """
    Sigma = cov.matrix if isinstance(cov, SampleCov) else np.asarray(cov, dtype=float)
    lam = h.lam if h is not None else model.lam
    gamma = h.gamma if h is not None else model.gamma
    if model.kind == "sparse":
        return _kkt_residuals(
            model.S_hat, np.zeros_like(model.S_hat), Sigma, model.S_hat.shape[0],
            lam, gamma, model.penalize_diagonal, with_latent=False,
        )
    if model.kind == "latent":
        return _kkt_residuals(
            model.S_hat, model.L_hat, Sigma, model.S_hat.shape[0],
            lam, gamma, model.penalize_diagonal, with_latent=True,
        )
    if model.kind == "conditional":
        m = model.Theta_hat.shape[0]
        S = model.Theta_hat.copy()
        L = np.zeros((m, m))
        S[: model.p, : model.p] = model.S_y
        L[: model.p, : model.p] = model.L_y
        return _kkt_residuals(
            S, L, Sigma, model.p, lam, gamma, model.penalize_diagonal, with_latent=True
        )
    raise TypeError("unknown model kind %r" % (model.kind,))


def _diagnostics_dict(model):
    return {
        "objective": model.objective,
        "iterations": model.iterations,
        "kkt_residual": model.kkt_residual,
    }


def save_model(model, path):
    """Serialize a fitted model to JSON (row-major dense matrices,
    17-significant-digit floats)."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": model.kind,
        "labels": model.labels,
        "hyperparams": {"lambda": model.lam, "gamma": model.gamma},
        "penalize_diagonal": model.penalize_diagonal,
        "diagnostics": _diagnostics_dict(model),
    }
    if model.kind == "sparse":
        doc["S"] = model.S_hat
    elif model.kind == "latent":
        doc["S"] = model.S_hat
        doc["L"] = model.L_hat
        doc["rank"] = model.rank_k
    elif model.kind == "conditional":
        doc["Theta"] = model.Theta_hat
        doc["S_y"] = model.S_y
        doc["L_y"] = model.L_y
        doc["rank"] = model.rank_k
        doc["p"] = model.p
        doc["q"] = model.q
    else:
        raise TypeError("unknown model kind %r" % (model.kind,))
    serialize.dump(doc, path)


def load_model(path):
    doc = serialize.load(path)
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError("unsupported model format version %r" % (version,))
    kind = doc["kind"]
    lam = doc["hyperparams"]["lambda"]
    gamma = doc["hyperparams"]["gamma"]
    diag = doc["diagnostics"]
    common = dict(
        objective=diag["objective"],
        iterations=diag["iterations"],
        kkt_residual=diag["kkt_residual"],
        lam=lam,
        gamma=gamma,
        penalize_diagonal=doc.get("penalize_diagonal", True),
        labels=doc.get("labels"),
    )
    if kind == "sparse":
        return SparseModel(S_hat=np.array(doc["S"], dtype=float), **common)
    if kind == "latent":
        return LatentModel(
            S_hat=np.array(doc["S"], dtype=float),
            L_hat=np.array(doc["L"], dtype=float),
            rank_k=doc["rank"],
            **common,
        )
    if kind == "conditional":
        return ConditionalModel(
            Theta_hat=np.array(doc["Theta"], dtype=float),
            S_y=np.array(doc["S_y"], dtype=float),
            L_y=np.array(doc["L_y"], dtype=float),
            rank_k=doc["rank"],
            p=doc["p"],
            q=doc["q"],
            **common,
        )
    raise ValueError("unknown model kind %r in %s" % (kind, path))

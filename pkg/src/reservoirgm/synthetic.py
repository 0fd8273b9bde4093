"""Ground-truth sparse + low-rank Gaussian models and samplers.

These generators are the verification oracle for the estimator claims:
every structure-recovery assertion in the tests is checked against a
model whose sparse support, latent rank, and covariance are known
exactly.

All randomness goes through ``numpy.random.default_rng`` (the seedable
64-bit PCG64 generator), so panels are bit-reproducible for a given
numpy version and statistically reproducible everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import serialize
from ._linalg import psd_factor, sym
from .solver import MODEL_FORMAT_VERSION


@dataclass
class GroundTruth:
    """A known sparse-minus-low-rank precision model.

    S_star - L_star is the precision of the observed variables;
    Sigma_star is its inverse; edge_support lists the (i, j), i < j pairs
    with a nonzero off-diagonal in S_star.
    """

    S_star: np.ndarray
    L_star: np.ndarray
    F: np.ndarray
    Sigma_star: np.ndarray
    edge_support: frozenset
    seed: int

    @property
    def p(self):
        return self.S_star.shape[0]

    @property
    def k_star(self):
        return self.F.shape[1]


@dataclass
class ObservedFactorGroundTruth:
    """Joint (y, x) model where x is one of the latent factors, observed.

    The conditional precision of y given x decomposes as
    S_star - L_y_star with rank(L_y_star) = k_star - 1: one residual
    latent variable per exposed factor.
    """

    Theta_joint: np.ndarray
    Sigma_joint: np.ndarray
    base: GroundTruth
    L_y_star: np.ndarray
    exposed_factor: int

    @property
    def p(self):
        return self.base.p


def gen_ground_truth(p, k_star, density, signal=0.25, latent_strength=(0.3, 0.6), seed=0):
    """Generate a random sparse + low-rank ground-truth model.

    Parameters
    ----------
    p : int
        Number of observed variables.
    k_star : int
        Number of latent factors (rank of the low-rank part).
    density : float in (0, 1]
        Fraction of the p(p-1)/2 off-diagonal pairs given an edge.
    signal : float
        Minimum absolute value of nonzero off-diagonal entries of S;
        magnitudes are drawn uniformly from [signal, 2 * signal].
    latent_strength : (low, high)
        Range of the eigenvalues of the low-rank part L = F F'.
    seed : int
        Seed for the generator; the construction is deterministic per seed.
    """
    if not 0 < density <= 1:
        raise ValueError("density must be in (0, 1]")
    if not p > k_star >= 0:
        raise ValueError("need p > k_star >= 0")
    rng = np.random.default_rng(seed)

    pairs = [(i, j) for i in range(p) for j in range(i + 1, p)]
    n_edges = int(density * len(pairs) + 1e-9)
    chosen = rng.choice(len(pairs), size=n_edges, replace=False) if n_edges else []

    S = np.eye(p)
    support = set()
    for idx in np.sort(np.asarray(chosen, dtype=int)):
        i, j = pairs[idx]
        mag = rng.uniform(signal, 2.0 * signal)
        val = mag * (1.0 if rng.random() < 0.5 else -1.0)
        S[i, j] = S[j, i] = val
        support.add((i, j))

    if k_star > 0:
        Q, _ = np.linalg.qr(rng.standard_normal((p, k_star)))
        strengths = rng.uniform(latent_strength[0], latent_strength[1], size=k_star)
        F = Q * np.sqrt(strengths)
    else:
        F = np.zeros((p, 0))
    L = F @ F.T

    # one exact diagonal boost: keep S - L comfortably positive definite
    w_min = np.linalg.eigvalsh(S - L).min()
    if w_min < 0.1:
        S += (0.1 - w_min) * np.eye(p)
    w_min = np.linalg.eigvalsh(S - L).min()
    if w_min < 0.1 - 1e-9:
        raise RuntimeError("ground-truth construction failed: min eig %g" % w_min)

    M = sym(S - L)
    w, Q = np.linalg.eigh(M)
    Sigma = sym((Q / w) @ Q.T)
    return GroundTruth(
        S_star=S,
        L_star=sym(L),
        F=F,
        Sigma_star=Sigma,
        edge_support=frozenset(support),
        seed=seed,
    )


def expose_factor(gt, factor=0):
    """Turn one latent factor of a ground-truth model into an observed
    covariate, yielding a joint (y, x) model with p + 1 variables.

    Marginalizing the remaining factors leaves a conditional y | x
    precision of the form S_star - L_y_star with rank k_star - 1.
    """
    if not 0 <= factor < gt.k_star:
        raise ValueError("factor index out of range")
    p = gt.p
    f_keep = np.delete(gt.F, factor, axis=1)
    f_x = gt.F[:, factor]
    L_y = f_keep @ f_keep.T

    Theta = np.zeros((p + 1, p + 1))
    Theta[:p, :p] = gt.S_star - L_y
    Theta[:p, p] = f_x
    Theta[p, :p] = f_x
    Theta[p, p] = 1.0
    Theta = sym(Theta)

    w, Q = np.linalg.eigh(Theta)
    if w.min() <= 0:
        raise RuntimeError("joint precision is not PD: min eig %g" % w.min())
    Sigma = sym((Q / w) @ Q.T)
    return ObservedFactorGroundTruth(
        Theta_joint=Theta,
        Sigma_joint=Sigma,
        base=gt,
        L_y_star=sym(L_y),
        exposed_factor=factor,
    )


def sample_mvn(Sigma, n, seed=0):
    """Draw n i.i.d. zero-mean Gaussian rows with covariance Sigma.

    Uses an eigenvalue-based PSD factorization, so numerically singular
    covariances are accepted; deterministic per seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    A = psd_factor(Sigma)
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((int(n), A.shape[0]))
    return Z @ A.T


def support_f1(S_hat, edge_support, tol=None):
    """F1 score of the estimated off-diagonal support against the truth."""
    from .solver import edge_support as _edges

    est = _edges(S_hat) if tol is None else _edges(S_hat, tol)
    p = S_hat.shape[0]
    est_pairs = {(i, j) for i in range(p) for j in range(i + 1, p) if est[i, j]}
    truth = set(edge_support)
    tp = len(est_pairs & truth)
    if tp == 0:
        return 0.0
    precision = tp / len(est_pairs)
    recall = tp / len(truth)
    return 2 * precision * recall / (precision + recall)


def save_ground_truth(gt, path):
    """Serialize the ground truth in the same JSON envelope as fitted models."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "kind": "ground_truth",
        "seed": gt.seed,
        "S": gt.S_star,
        "L": gt.L_star,
        "F": gt.F,
        "Sigma": gt.Sigma_star,
        "edges": sorted(gt.edge_support),
    }
    serialize.dump(doc, path)


def load_ground_truth(path):
    doc = serialize.load(path)
    if doc.get("kind") != "ground_truth":
        raise ValueError("not a ground-truth file: %s" % path)
    return GroundTruth(
        S_star=np.array(doc["S"], dtype=float),
        L_star=np.array(doc["L"], dtype=float),
        F=np.array(doc["F"], dtype=float),
        Sigma_star=np.array(doc["Sigma"], dtype=float),
        edge_support=frozenset(tuple(e) for e in doc["edges"]),
        seed=doc["seed"],
    )

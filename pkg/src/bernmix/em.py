"""Maximum-likelihood Bernoulli mixtures by expectation-maximisation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .dataset import TransactionDataset
from .model import MixtureModel, component_log_likelihoods, log_likelihood


@dataclass
class FitTrace:
    """Objective value after every iteration (log-likelihood, ELBO or log posterior).

    ``flags`` collects numerical repairs made along the way (uniform
    responsibility rows, emptied components).
    """

    objective: list[float] = field(default_factory=list)
    converged: bool = False
    flags: list[str] = field(default_factory=list)
    k_active: list[int] = field(default_factory=list)
    burn_in: int = 0

    @property
    def iterations(self) -> int:
        return len(self.objective)

    def mean_k_active(self) -> float:
        """Average occupied-component count over the post-burn-in sweeps."""
        kept = self.k_active[self.burn_in:]
        return float(np.mean(kept)) if kept else float("nan")

    def to_csv(self, label: str = "objective") -> str:
        if self.k_active:
            head = f"sweep,K_active,{label}\n"
            body = "".join(f"{t},{k},{v!r}\n" for t, (k, v) in
                           enumerate(zip(self.k_active, self.objective), start=1))
        else:
            head = f"iteration,{label}\n"
            body = "".join(f"{t},{v!r}\n" for t, v in enumerate(self.objective, start=1))
        return head + body


def random_responsibilities(n: int, k: int, rng) -> np.ndarray:
    """Rows drawn from a flat Dirichlet; the shared initialisation for EM and VB."""
    if n == 0:
        return np.zeros((0, k))
    return rng.dirichlet(np.ones(k), size=n)


def e_step(model: MixtureModel, ds: TransactionDataset, trace: FitTrace | None = None):
    """Posterior component probabilities for every transaction, normalised in log space.

    Rows where every component assigns probability zero fall back to the
    uniform distribution and are reported in ``trace.flags``.
    """
    x = ds.to_dense()
    with np.errstate(divide="ignore"):
        log_w = np.log(model.weights)
    scores = component_log_likelihoods(x, model.bernoulli) + log_w
    dead = np.all(np.isneginf(scores), axis=1)
    if dead.any():
        scores[dead] = 0.0
        if trace is not None:
            trace.flags.append(f"uniform responsibilities for {int(dead.sum())} rows")
    return np.exp(scores - logsumexp(scores, axis=1, keepdims=True))


def m_step(tau: np.ndarray, ds: TransactionDataset, trace: FitTrace | None = None):
    """Closed-form maximisers (weights, bernoulli) for fixed responsibilities.

    A component with zero total responsibility gets weight 0 and the overall
    item frequencies as its Bernoulli column.
    """
    x = ds.to_dense()
    n, k = tau.shape
    mass = tau.sum(axis=0)
    weights = mass / n
    ones = x.T @ tau
    empty = mass <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = ones / mass
    if empty.any():
        phi[:, empty] = x.mean(axis=0)[:, None]
        weights[empty] = 0.0
        weights /= weights.sum()
        if trace is not None:
            trace.flags.append(f"repaired {int(empty.sum())} empty components")
    return weights, np.clip(phi, 0.0, 1.0)


def fit_em(ds: TransactionDataset, K: int, seed: int = 0, max_iters: int = 500,
           tol: float = 1e-6, init_tau: np.ndarray | None = None):
    """Alternate M and E steps from random responsibilities until the
    relative log-likelihood change falls below ``tol``.

    Returns ``(model, trace)``; ``trace.objective`` holds the log-likelihood
    after each M step.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if ds.n_transactions == 0:
        raise ValueError("cannot fit EM to an empty dataset")
    rng = np.random.default_rng(seed)
    tau = random_responsibilities(ds.n_transactions, K, rng) if init_tau is None else init_tau
    trace = FitTrace()
    model = None
    prev = None
    for it in range(1, max_iters + 1):
        weights, phi = m_step(tau, ds, trace)
        model = MixtureModel(weights, phi, method="em", seed=seed, iterations=it,
                             item_labels=ds.item_labels)
        ll = log_likelihood(model, ds)
        trace.objective.append(ll)
        if prev is not None and np.isfinite(ll) and np.isfinite(prev):
            if abs(ll - prev) <= tol * abs(ll):
                trace.converged = True
                break
        prev = ll
        tau = e_step(model, ds, trace)
    return model, trace

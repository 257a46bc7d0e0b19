"""Mean-field variational EM for the finite Bayesian mixture and the
truncated stick-breaking Dirichlet-process mixture.

q factorises into per-point multinomials ``tau``, Beta(eta, nu) over every
phi_ik, and either Dirichlet(rho) over the weights (finite) or Beta(rho1,
rho2) over the first K-1 stick fractions (DP, with v_K fixed at 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, digamma, gammaln, logsumexp, xlogy

from .dataset import TransactionDataset
from .em import FitTrace, random_responsibilities
from .model import Hyperparams, MixtureModel

RHO_UPDATES = ("conjugate", "paper")


@dataclass
class VariationalState:
    tau: np.ndarray
    hyper: Hyperparams
    variant: str = "finite"
    rho_update: str = "conjugate"
    rho: np.ndarray | None = None
    rho1: np.ndarray | None = None
    rho2: np.ndarray | None = None
    eta: np.ndarray | None = None
    nu: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in ("finite", "dp"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.rho_update not in RHO_UPDATES:
            raise ValueError(f"rho_update must be one of {RHO_UPDATES}")

    @property
    def K(self) -> int:
        return self.tau.shape[1]

    @property
    def prior_concentration(self) -> float:
        """Per-component Dirichlet parameter: alpha/K, or alpha for the literal update."""
        a = self.hyper.alpha
        return a if self.rho_update == "paper" else a / self.K

    def expected_log_weights(self) -> np.ndarray:
        """E_q[ln pi_k] for the finite variant, E_q[ln pi_k(v)] for the stick variant."""
        if self.variant == "finite":
            return digamma(self.rho) - digamma(self.rho.sum())
        both = digamma(self.rho1 + self.rho2)
        ln_v = digamma(self.rho1) - both
        ln_rest = digamma(self.rho2) - both
        before = np.concatenate([[0.0], np.cumsum(ln_rest)])
        return np.concatenate([ln_v, [0.0]]) + before

    def expected_weights(self) -> np.ndarray:
        if self.variant == "finite":
            return self.rho / self.rho.sum()
        v = self.rho1 / (self.rho1 + self.rho2)
        rest = np.concatenate([[1.0], np.cumprod(1.0 - v)])
        w = np.concatenate([v, [1.0]]) * rest
        return w / w.sum()


def _dense(ds):
    return ds.to_dense()


def update_globals(state: VariationalState, x: np.ndarray) -> VariationalState:
    """Closed-form updates of (rho | rho1, rho2), eta, nu from the current tau."""
    h = state.hyper
    tau = state.tau
    mass = tau.sum(axis=0)
    ones = x.T @ tau
    if state.variant == "finite":
        state.rho = state.prior_concentration + mass
    else:
        after = np.cumsum(mass[::-1])[::-1]  # after[k] = sum_{k' >= k} mass
        state.rho1 = 1.0 + mass[:-1]
        state.rho2 = h.alpha + after[1:]
    state.eta = h.beta[:, None] + ones
    state.nu = h.gamma[:, None] + (mass[None, :] - ones)
    return state


def _expected_log_phi(state):
    both = digamma(state.eta + state.nu)
    return digamma(state.eta) - both, digamma(state.nu) - both


def update_tau(state: VariationalState, x: np.ndarray) -> VariationalState:
    ln_on, ln_off = _expected_log_phi(state)
    scores = state.expected_log_weights() + x @ ln_on + (1.0 - x) @ ln_off
    state.tau = np.exp(scores - logsumexp(scores, axis=1, keepdims=True))
    return state


def vb_update_finite(state: VariationalState, ds: TransactionDataset) -> VariationalState:
    """One cycle: rho, eta, nu from tau, then every tau row from them."""
    x = _dense(ds)
    update_globals(state, x)
    return update_tau(state, x)


def vb_update_dp(state: VariationalState, ds: TransactionDataset) -> VariationalState:
    """One cycle of the stick-breaking updates (rho1, rho2, eta, nu, then tau)."""
    x = _dense(ds)
    update_globals(state, x)
    return update_tau(state, x)


def elbo(state: VariationalState, ds: TransactionDataset) -> float:
    """E_q[ln p(T, Z, weights, phi)] - E_q[ln q], all terms in closed form."""
    x = _dense(ds)
    h = state.hyper
    tau = state.tau
    ln_on, ln_off = _expected_log_phi(state)
    ln_w = state.expected_log_weights()

    ones = x.T @ tau
    zeros = tau.sum(axis=0)[None, :] - ones
    value = float((tau @ ln_w).sum())
    value += float((ones * ln_on + zeros * ln_off).sum())

    b, g = h.beta[:, None], h.gamma[:, None]
    value += float((-betaln(b, g) + (b - 1) * ln_on + (g - 1) * ln_off).sum())
    value -= float((-betaln(state.eta, state.nu) + (state.eta - 1) * ln_on
                    + (state.nu - 1) * ln_off).sum())
    value -= float(xlogy(tau, tau).sum())

    if state.variant == "finite":
        a0 = state.prior_concentration
        K = state.K
        value += gammaln(K * a0) - K * gammaln(a0) + (a0 - 1) * ln_w.sum()
        rho = state.rho
        value -= gammaln(rho.sum()) - gammaln(rho).sum() + ((rho - 1) * ln_w).sum()
    else:
        a = h.alpha
        both = digamma(state.rho1 + state.rho2)
        ln_v = digamma(state.rho1) - both
        ln_rest = digamma(state.rho2) - both
        value += float((np.log(a) + (a - 1) * ln_rest).sum())
        value -= float((-betaln(state.rho1, state.rho2) + (state.rho1 - 1) * ln_v
                        + (state.rho2 - 1) * ln_rest).sum())
    return float(value)


def extract_model(state: VariationalState, **meta) -> MixtureModel:
    """Posterior-mean weights and Bernoulli parameters under q."""
    phi = state.eta / (state.eta + state.nu)
    return MixtureModel(state.expected_weights(), phi, hyperparams=state.hyper, **meta)


def _fit(ds, K, hyper, tol, max_iters, seed, variant, rho_update, init_tau, method):
    if K < 1:
        raise ValueError("K must be at least 1")
    if hyper.n_items != ds.n_items:
        raise ValueError("hyperparameters do not match the number of items")
    rng = np.random.default_rng(seed)
    tau = random_responsibilities(ds.n_transactions, K, rng) if init_tau is None else init_tau
    state = VariationalState(np.array(tau, dtype=np.float64), hyper, variant, rho_update)
    x = _dense(ds)
    trace = FitTrace()
    prev = None
    for _ in range(max_iters):
        update_globals(state, x)
        update_tau(state, x)
        value = elbo(state, ds)
        trace.objective.append(value)
        if prev is not None and abs(value - prev) <= tol * abs(value):
            trace.converged = True
            break
        prev = value
    update_globals(state, x)
    model = extract_model(state, method=method, seed=seed, iterations=trace.iterations,
                          item_labels=ds.item_labels)
    return model, trace, state


def fit_vb_finite(ds: TransactionDataset, K: int, hyper: Hyperparams, tol: float = 1e-6,
                  max_iters: int = 500, seed: int = 0, rho_update: str = "conjugate",
                  init_tau: np.ndarray | None = None, return_state: bool = False):
    """Variational EM for the K-component Bayesian mixture.

    Iterates until the relative ELBO change is below ``tol``; the returned
    model uses pi_k = rho_k / sum(rho) and phi_ik = eta_ik / (eta_ik + nu_ik).
    """
    model, trace, state = _fit(ds, K, hyper, tol, max_iters, seed, "finite", rho_update,
                               init_tau, "vb")
    return (model, trace, state) if return_state else (model, trace)


def fit_vb_dp(ds: TransactionDataset, K: int, hyper: Hyperparams, tol: float = 1e-6,
              max_iters: int = 500, seed: int = 0, init_tau: np.ndarray | None = None,
              return_state: bool = False):
    """Truncated stick-breaking variational EM with truncation level ``K``.

    Weights are the expected stick lengths E[v_k] prod_{l<k} (1 - E[v_l]).
    """
    model, trace, state = _fit(ds, K, hyper, tol, max_iters, seed, "dp", "conjugate",
                               init_tau, "dp-vb")
    return (model, trace, state) if return_state else (model, trace)

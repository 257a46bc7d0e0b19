"""Collapsed Gibbs samplers for finite and Dirichlet-process Bernoulli mixtures.

Mixture weights and Bernoulli parameters are integrated out; the chain runs
over component assignments only. Each point is removed from its component,
its assignment is redrawn from the collapsed conditional, and it is
reinserted, so the counts N_k and ones-counts S_ik always describe every
point except at most the one being resampled.
"""

from __future__ import annotations

import numpy as np
from scipy.special import betaln, gammaln

from .dataset import TransactionDataset
from .em import FitTrace
from .errors import ContractViolation
from .model import Hyperparams, MixtureModel


class GibbsState:
    """Assignments plus the sufficient statistics the collapsed conditionals need.

    Besides ``counts`` (N_k) and ``stats`` (S_ik), the state caches
    ``log(beta_i + S_ik)``, ``log(gamma_i + N_k - S_ik)`` and their column
    sums so that scoring a point only touches the items it contains.
    Cached columns are always recomputed from the integer counts, never
    updated incrementally, so they cannot drift.
    """

    def __init__(self, ds: TransactionDataset, hyper: Hyperparams, z, n_components: int,
                 rng: np.random.Generator):
        if hyper.n_items != ds.n_items:
            raise ValueError("hyperparameters do not match the number of items")
        self.rows = [np.asarray(r, dtype=np.int64) for r in ds.rows]
        self.n_items = ds.n_items
        self.hyper = hyper
        self.rng = rng
        self.z = np.asarray(z, dtype=np.int64).copy()
        self.K = int(n_components)
        self._beta = hyper.beta[:, None]
        self._gamma = hyper.gamma[:, None]
        self._bg = (hyper.beta + hyper.gamma)[:, None]
        cap = max(self.K, 1)
        self.counts = np.zeros(cap, dtype=np.int64)
        self.stats = np.zeros((self.n_items, cap), dtype=np.int64)
        for mu, row in enumerate(self.rows):
            k = self.z[mu]
            self.counts[k] += 1
            self.stats[row, k] += 1
        self._log_on = np.empty((self.n_items, cap))
        self._log_off = np.empty((self.n_items, cap))
        self._off_sum = np.empty(cap)
        self._den = np.empty(cap)
        for k in range(self.K):
            self._refresh(k)

    @property
    def n_points(self) -> int:
        return len(self.rows)

    def _refresh(self, k: int) -> None:
        n_k = self.counts[k]
        s_k = self.stats[:, k]
        self._log_on[:, k] = np.log(self.hyper.beta + s_k)
        self._log_off[:, k] = np.log(self.hyper.gamma + n_k - s_k)
        self._off_sum[k] = self._log_off[:, k].sum()
        self._den[k] = np.log(self.hyper.beta + self.hyper.gamma + n_k).sum()

    def _grow(self) -> None:
        cap = 2 * len(self.counts)
        self.counts = np.concatenate([self.counts, np.zeros(cap - len(self.counts), np.int64)])
        pad = ((0, 0), (0, cap - self.stats.shape[1]))
        self.stats = np.pad(self.stats, pad)
        self._log_on = np.pad(self._log_on, pad)
        self._log_off = np.pad(self._log_off, pad)
        self._off_sum = np.pad(self._off_sum, (0, cap - len(self._off_sum)))
        self._den = np.pad(self._den, (0, cap - len(self._den)))

    def remove(self, mu: int) -> int:
        k = self.z[mu]
        self.counts[k] -= 1
        self.stats[self.rows[mu], k] -= 1
        self._refresh(k)
        return k

    def add(self, mu: int, k: int) -> None:
        if k == self.K:
            if self.K == len(self.counts):
                self._grow()
            self.K += 1
        self.z[mu] = k
        self.counts[k] += 1
        self.stats[self.rows[mu], k] += 1
        self._refresh(k)

    def delete_component(self, k: int) -> None:
        """Drop empty component ``k`` by moving the last component into its slot."""
        if self.counts[k] != 0:
            raise ContractViolation(f"component {k} is not empty")
        last = self.K - 1
        if k != last:
            self.z[self.z == last] = k
            for arr in (self.counts, self._off_sum, self._den):
                arr[k] = arr[last]
            for arr in (self.stats, self._log_on, self._log_off):
                arr[:, k] = arr[:, last]
        self.counts[last] = 0
        self.stats[:, last] = 0
        self.K -= 1

    def log_predictive(self, mu: int) -> np.ndarray:
        """ln of the Beta-Bernoulli posterior predictive of point ``mu`` under each
        occupied component, using the current (exclusive) counts."""
        row = self.rows[mu]
        K = self.K
        on = self._log_on[row, :K] - self._log_off[row, :K]
        return self._off_sum[:K] + on.sum(axis=0) - self._den[:K]

    def log_predictive_new(self, mu: int) -> float:
        """Same quantity for a fresh component (prior predictive)."""
        b, g = self.hyper.beta, self.hyper.gamma
        row = self.rows[mu]
        return float(np.log(g / (b + g)).sum() + (np.log(b[row]) - np.log(g[row])).sum())

    def check(self) -> None:
        """Recompute counts from the assignments and compare (debug sweeps, tests)."""
        counts = np.zeros(self.K, dtype=np.int64)
        stats = np.zeros((self.n_items, self.K), dtype=np.int64)
        for mu, row in enumerate(self.rows):
            k = self.z[mu]
            if not 0 <= k < self.K:
                raise ContractViolation(f"assignment {k} outside [0, {self.K})")
            counts[k] += 1
            stats[row, k] += 1
        if not np.array_equal(counts, self.counts[:self.K]):
            raise ContractViolation("component counts disagree with assignments")
        if not np.array_equal(stats, self.stats[:, :self.K]):
            raise ContractViolation("item statistics disagree with assignments")
        if np.any(self.stats[:, :self.K] > self.counts[:self.K]):
            raise ContractViolation("S_ik exceeds N_k")

    def log_marginal_data(self) -> float:
        """ln p(T | Z) with all Bernoulli parameters integrated out."""
        n = self.counts[:self.K]
        s = self.stats[:, :self.K]
        return float((betaln(self._beta + s, self._gamma + n - s)
                      - betaln(self._beta, self._gamma)).sum())


def _normalise(log_scores: np.ndarray) -> np.ndarray:
    # scipy's logsumexp costs more than the whole conditional at this size
    p = np.exp(log_scores - log_scores.max())
    return p / p.sum()


def _draw(probs: np.ndarray, u: float) -> int:
    """Inverse-CDF draw; u at or beyond the last cumulative mass maps to the last index."""
    cdf = np.cumsum(probs)
    return min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), len(probs) - 1)


# -- finite mixture ----------------------------------------------------------------

def conditional_finite(state: GibbsState, mu: int) -> np.ndarray:
    """p(z_mu = k | other assignments, data) for k < K; ``mu`` must already be removed."""
    prior = np.log(state.counts[:state.K] + state.hyper.alpha / state.K)
    return _normalise(prior + state.log_predictive(mu))


def sweep_finite(state: GibbsState, check: bool = False) -> GibbsState:
    u = state.rng.random(state.n_points)
    for mu in range(state.n_points):
        state.remove(mu)
        k = _draw(conditional_finite(state, mu), u[mu])
        state.add(mu, k)
    if check:
        state.check()
    return state


def log_posterior_finite(state: GibbsState) -> float:
    """ln p(Z) + ln p(T | Z) under the symmetric Dirichlet(alpha/K) prior."""
    a = state.hyper.alpha
    K = state.K
    n = state.counts[:K]
    log_pz = (gammaln(a) - gammaln(state.n_points + a)
              + (gammaln(n + a / K) - gammaln(a / K)).sum())
    return float(log_pz) + state.log_marginal_data()


def extract_finite(state: GibbsState, **meta) -> MixtureModel:
    h = state.hyper
    K = state.K
    n = state.counts[:K].astype(np.float64)
    weights = (n + h.alpha / K) / (state.n_points + h.alpha)
    weights = weights / weights.sum()
    phi = (h.beta[:, None] + state.stats[:, :K]) / ((h.beta + h.gamma)[:, None] + n)
    return MixtureModel(weights, phi, hyperparams=h, **meta)


def init_finite(ds: TransactionDataset, K: int, hyper: Hyperparams, seed: int) -> GibbsState:
    rng = np.random.default_rng(seed)
    z = rng.integers(K, size=ds.n_transactions)
    return GibbsState(ds, hyper, z, K, rng)


def fit_gibbs_finite(ds: TransactionDataset, K: int, hyper: Hyperparams, n_sweeps: int = 200,
                     burn_in: int = 100, seed: int = 0, check: bool = False):
    """Collapsed Gibbs for a K-component mixture; the model comes from the final state."""
    if K < 1:
        raise ValueError("K must be at least 1")
    if not 0 <= burn_in < n_sweeps:
        raise ValueError("need 0 <= burn_in < n_sweeps")
    state = init_finite(ds, K, hyper, seed)
    trace = FitTrace(burn_in=burn_in)
    for _ in range(n_sweeps):
        sweep_finite(state, check=check)
        trace.objective.append(log_posterior_finite(state))
        trace.k_active.append(int(np.count_nonzero(state.counts[:state.K])))
    model = extract_finite(state, method="gibbs", seed=seed, iterations=n_sweeps,
                           item_labels=ds.item_labels)
    return model, trace


# -- Dirichlet process mixture ---------------------------------------------------------

def conditional_dp(state: GibbsState, mu: int) -> np.ndarray:
    """Probabilities of joining each occupied component, then a new one (length K+1).

    ``mu`` must already be removed and empty components deleted.
    """
    with np.errstate(divide="ignore"):
        prior = np.log(state.counts[:state.K].astype(np.float64))
    existing = prior + state.log_predictive(mu)
    new = np.log(state.hyper.alpha) + state.log_predictive_new(mu)
    return _normalise(np.append(existing, new))


def sweep_dp(state: GibbsState, check: bool = False) -> GibbsState:
    u = state.rng.random(state.n_points)
    for mu in range(state.n_points):
        k = state.remove(mu)
        if state.counts[k] == 0:
            state.delete_component(k)
        k = _draw(conditional_dp(state, mu), u[mu])
        state.add(mu, k)
    if check:
        state.check()
    return state


def log_posterior_dp(state: GibbsState) -> float:
    """ln p(Z) (Chinese-restaurant partition probability) + ln p(T | Z)."""
    a = state.hyper.alpha
    n = state.counts[:state.K]
    log_pz = (state.K * np.log(a) + gammaln(n).sum()
              + gammaln(a) - gammaln(state.n_points + a))
    return float(log_pz) + state.log_marginal_data()


def extract_dp(state: GibbsState, **meta) -> MixtureModel:
    """Occupied components only; the new-component mass alpha/(N+alpha) is dropped
    and the remaining weights N_k/(N+alpha) renormalised."""
    h = state.hyper
    K = state.K
    n = state.counts[:K].astype(np.float64)
    weights = n / (state.n_points + h.alpha)
    weights = weights / weights.sum()
    phi = (h.beta[:, None] + state.stats[:, :K]) / ((h.beta + h.gamma)[:, None] + n)
    return MixtureModel(weights, phi, hyperparams=h, **meta)


def init_dp(ds: TransactionDataset, hyper: Hyperparams, seed: int) -> GibbsState:
    rng = np.random.default_rng(seed)
    return GibbsState(ds, hyper, np.zeros(ds.n_transactions, dtype=np.int64), 1, rng)


def fit_gibbs_dp(ds: TransactionDataset, hyper: Hyperparams, n_sweeps: int = 200,
                 burn_in: int = 100, seed: int = 0, check: bool = False):
    """Collapsed Gibbs for the DP mixture, starting with every point in one component.

    ``trace.k_active`` records the number of occupied components after each sweep.
    """
    if ds.n_transactions == 0:
        raise ValueError("cannot fit a DP mixture to an empty dataset")
    if not 0 <= burn_in < n_sweeps:
        raise ValueError("need 0 <= burn_in < n_sweeps")
    state = init_dp(ds, hyper, seed)
    trace = FitTrace(burn_in=burn_in)
    for _ in range(n_sweeps):
        sweep_dp(state, check=check)
        trace.objective.append(log_posterior_dp(state))
        trace.k_active.append(state.K)
    model = extract_dp(state, method="dp-gibbs", seed=seed, iterations=n_sweeps,
                       item_labels=ds.item_labels)
    return model, trace

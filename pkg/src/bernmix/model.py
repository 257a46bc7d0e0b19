"""The Bernoulli mixture model shared by every trainer, and its file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .errors import ContractViolation, ModelFormatError

FORMAT_VERSION = 1


def _frozen(a) -> np.ndarray:
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Hyperparams:
    """Dirichlet (or DP) concentration ``alpha`` and per-item Beta pseudo-counts."""

    alpha: float
    beta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        beta = _frozen(self.beta)
        gamma = _frozen(self.gamma)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        if beta.ndim != 1 or beta.shape != gamma.shape:
            raise ValueError("beta and gamma must be vectors of equal length")
        if not (self.alpha > 0 and np.all(beta > 0) and np.all(gamma > 0)):
            raise ValueError("hyperparameters must be strictly positive")

    @property
    def n_items(self) -> int:
        return len(self.beta)

    @classmethod
    def from_frequencies(cls, freqs, alpha: float = 1.5, floor: float = 1e-3) -> "Hyperparams":
        """beta_i = item frequency, gamma_i = 1 - beta_i, both floored away from zero."""
        freqs = np.asarray(freqs, dtype=np.float64)
        beta = np.maximum(freqs, floor)
        gamma = np.maximum(1.0 - freqs, floor)
        return cls(alpha, beta, gamma)

    @classmethod
    def scalar(cls, n_items: int, alpha: float, beta: float, gamma: float) -> "Hyperparams":
        return cls(alpha, np.full(n_items, float(beta)), np.full(n_items, float(gamma)))

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta.tolist(), "gamma": self.gamma.tolist()}


@dataclass(frozen=True)
class MixtureModel:
    """Mixture weights ``pi`` (K,) and Bernoulli parameters ``phi`` (D, K).

    Instances are immutable; the arrays are read-only.
    """

    weights: np.ndarray
    bernoulli: np.ndarray
    method: str = "unknown"
    hyperparams: Hyperparams | None = None
    seed: int | None = None
    iterations: int = 0
    item_labels: tuple[int, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        w = _frozen(self.weights)
        phi = _frozen(self.bernoulli)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bernoulli", phi)
        if w.ndim != 1 or phi.ndim != 2 or phi.shape[1] != w.shape[0] or w.shape[0] < 1:
            raise ContractViolation(
                f"shape mismatch: weights {w.shape}, bernoulli {phi.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ContractViolation(f"weights must be a probability vector (sum={w.sum()!r})")
        if not np.all(np.isfinite(phi)) or np.any(phi < 0) or np.any(phi > 1):
            raise ContractViolation("Bernoulli parameters must lie in [0, 1]")
        if self.hyperparams is not None and self.hyperparams.n_items != phi.shape[0]:
            raise ContractViolation("hyperparameter length does not match D")

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def D(self) -> int:
        return self.bernoulli.shape[0]

    # FrequencyOracle interface
    @property
    def item_count(self) -> int:
        return self.D

    def measure(self, items) -> float:
        return itemset_probability(self, items)

    @cached_property
    def _log_weights(self):
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    @cached_property
    def _log_phi(self):
        with np.errstate(divide="ignore"):
            return np.log(self.bernoulli)

    def __eq__(self, other):
        if not isinstance(other, MixtureModel):
            return NotImplemented
        same_hyper = (self.hyperparams is None) == (other.hyperparams is None)
        if same_hyper and self.hyperparams is not None:
            a, b = self.hyperparams, other.hyperparams
            same_hyper = (a.alpha == b.alpha and np.array_equal(a.beta, b.beta)
                          and np.array_equal(a.gamma, b.gamma))
        return (np.array_equal(self.weights, other.weights)
                and np.array_equal(self.bernoulli, other.bernoulli)
                and self.method == other.method and self.seed == other.seed
                and self.iterations == other.iterations and same_hyper)

    __hash__ = None


def _items_array(model: MixtureModel, items) -> np.ndarray:
    if hasattr(items, "items") and not isinstance(items, dict):
        items = items.items
    idx = np.asarray(list(items), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= model.D):
        raise ValueError(f"item index out of range for D={model.D}")
    return idx


def itemset_probability(model: MixtureModel, items) -> float:
    """P(all of ``items`` present) = sum_k pi_k prod_{i in items} phi_ik.

    ``items`` may be any iterable of indices or an :class:`Itemset`.
    """
    idx = _items_array(model, items)
    if idx.size == 0:
        return 1.0
    log_terms = model._log_weights + model._log_phi[idx].sum(axis=0)
    if np.all(np.isneginf(log_terms)):
        return 0.0
    return float(min(1.0, np.exp(logsumexp(log_terms))))


def itemset_probabilities(model: MixtureModel, itemsets, chunk: int = 65536) -> np.ndarray:
    """Vectorised :func:`itemset_probability` for many itemsets (grouped by length)."""
    itemsets = [tuple(s) for s in itemsets]
    out = np.empty(len(itemsets))
    by_len: dict[int, list[int]] = {}
    for pos, s in enumerate(itemsets):
        by_len.setdefault(len(s), []).append(pos)
    for length, positions in by_len.items():
        if length == 0:
            out[positions] = 1.0
            continue
        idx = np.array([itemsets[p] for p in positions], dtype=np.int64)
        if idx.min() < 0 or idx.max() >= model.D:
            raise ValueError(f"item index out of range for D={model.D}")
        for lo in range(0, len(positions), chunk):
            block = idx[lo:lo + chunk]
            log_terms = model._log_phi[block].sum(axis=1) + model._log_weights
            with np.errstate(divide="ignore"):
                vals = np.exp(logsumexp(log_terms, axis=1))
            out[positions[lo:lo + chunk]] = np.minimum(np.nan_to_num(vals), 1.0)
    return out


def component_log_likelihoods(x: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """ln prod_i phi_ik^x_i (1-phi_ik)^(1-x_i) for every row of ``x`` and component.

    Rows that hit a zero-probability event (x_i=1 with phi=0, or x_i=0 with
    phi=1) get -inf instead of NaN.
    """
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log1 = np.log(phi)
        log0 = np.log1p(-phi)
    zero1 = np.isneginf(log1)
    zero0 = np.isneginf(log0)
    out = x @ np.where(zero1, 0.0, log1) + (1.0 - x) @ np.where(zero0, 0.0, log0)
    if zero1.any() or zero0.any():
        impossible = (x @ zero1 + (1.0 - x) @ zero0) > 0
        out[impossible] = -np.inf
    return out


def transaction_probability(model: MixtureModel, row) -> float:
    """Probability of one full binary transaction vector of length D."""
    x = np.asarray(row, dtype=np.float64)
    if x.shape != (model.D,):
        raise ValueError(f"expected a binary vector of length {model.D}")
    comp = component_log_likelihoods(x[None, :], model.bernoulli)[0]
    total = logsumexp(model._log_weights + comp)
    return float(np.exp(total))


def log_likelihood(model: MixtureModel, ds) -> float:
    """Sum of log transaction probabilities; -inf if any transaction is impossible."""
    if ds.n_items != model.D:
        raise ValueError(f"dataset has D={ds.n_items}, model has D={model.D}")
    if ds.n_transactions == 0:
        return 0.0
    comp = component_log_likelihoods(ds.to_dense(), model.bernoulli)
    with np.errstate(divide="ignore"):
        per_row = logsumexp(comp + model._log_weights, axis=1)
    return float(per_row.sum())


def free_parameter_count(model: MixtureModel) -> int:
    return model.K * (model.D + 1) - 1


def model_to_json(model: MixtureModel) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "method": model.method,
        "K": model.K,
        "D": model.D,
        "weights": model.weights.tolist(),
        "bernoulli": model.bernoulli.tolist(),
        "hyperparams": None if model.hyperparams is None else model.hyperparams.to_json(),
        "seed": model.seed,
        "iterations": model.iterations,
    }
    if model.item_labels is not None:
        doc["item_labels"] = list(model.item_labels)
    return doc


def model_from_json(doc) -> MixtureModel:
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {doc.get('format_version')!r}")
    required = ("method", "K", "D", "weights", "bernoulli", "hyperparams", "seed", "iterations")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ModelFormatError(f"missing fields: {', '.join(missing)}")
    try:
        K, D = int(doc["K"]), int(doc["D"])
        weights = np.asarray(doc["weights"], dtype=np.float64)
        phi = np.asarray(doc["bernoulli"], dtype=np.float64)
        hyper = doc["hyperparams"]
        if hyper is not None:
            hyper = Hyperparams(hyper["alpha"], hyper["beta"], hyper["gamma"])
        labels = doc.get("item_labels")
    except (TypeError, ValueError, KeyError) as exc:
        raise ModelFormatError(f"schema violation: {exc}") from exc
    if weights.shape != (K,) or phi.shape != (D, K):
        raise ModelFormatError(
            f"schema violation: weights {weights.shape} / bernoulli {phi.shape} "
            f"do not match K={K}, D={D}")
    if labels is not None and len(labels) != D:
        raise ModelFormatError("schema violation: item_labels length differs from D")
    return MixtureModel(weights, phi, method=str(doc["method"]), hyperparams=hyper,
                        seed=doc["seed"], iterations=int(doc["iterations"]),
                        item_labels=None if labels is None else tuple(int(v) for v in labels))


def save_model(model: MixtureModel, path) -> None:
    text = json.dumps(model_to_json(model), indent=1)
    Path(path).write_text(text + "\n", encoding="utf-8")


def load_model(path) -> MixtureModel:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: invalid JSON ({exc})") from exc
    return model_from_json(doc)

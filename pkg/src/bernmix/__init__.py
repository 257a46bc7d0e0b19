"""Bernoulli mixture models for predicting frequent itemsets in binary transaction data."""

from .dataset import (Itemset, TransactionDataset, item_frequencies, load_fimi,
                      sample_from_model, split, write_fimi)
from .errors import BernmixError, ContractViolation, ModelFormatError, ParseError
from .model import (Hyperparams, MixtureModel, free_parameter_count, itemset_probability,
                    load_model, log_likelihood, save_model, transaction_probability)
from .miner import ItemsetCollection, brute_force_frequencies, mine_exact, mine_oracle

__version__ = "0.1.0"

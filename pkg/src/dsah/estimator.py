"""scikit-learn compatible wrapper around the training loop."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_is_fitted, validate_data

from . import encoder as enc
from .dataio import Dataset
from .retrieval import CodeDatabase, evaluate
from .trainer import TrainConfig, train


class DSAHashing(TransformerMixin, BaseEstimator):
    """Learn balanced binary codes for a labelled training set.

    ``fit`` learns the training codes directly (stored in ``codes_``) together
    with a hashing network; ``transform`` encodes unseen samples as the sign of
    the network output. Database and query codes are therefore produced
    asymmetrically.

    Parameters
    ----------
    n_bits : int
        Code length.
    hidden_layer_sizes : tuple of int
        Hidden widths of the ReLU encoder.
    batch_size, n_outer, n_inner : int
        Batch size, outer iterations (one pass over the data each) and
        gradient steps per batch.
    learning_rate, weight_decay : float
        Plain SGD settings.
    alpha1, alpha2 : float
        Weights of the similarity-preserving and class-structure quantization terms.
    beta1, beta2 : float
        Scales of the intra-class and inter-class regression labels.
    mode : {"dsah1", "dsah2"}
        Two encoders, or one shared encoder.
    variant : {"full", "A", "B", "C", "D"}
        Ablation switch, see :func:`dsah.trainer.apply_variant`.
    random_state : int, RandomState or None
    """

    def __init__(
        self,
        n_bits=12,
        hidden_layer_sizes=(256,),
        batch_size=64,
        n_outer=50,
        n_inner=3,
        learning_rate=1e-3,
        alpha1=1e-2,
        alpha2=1e3,
        beta1=1e2,
        beta2=10.0,
        mode="dsah1",
        variant="full",
        weight_decay=5e-4,
        random_state=None,
    ):
        self.n_bits = n_bits
        self.hidden_layer_sizes = hidden_layer_sizes
        self.batch_size = batch_size
        self.n_outer = n_outer
        self.n_inner = n_inner
        self.learning_rate = learning_rate
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.beta1 = beta1
        self.beta2 = beta2
        self.mode = mode
        self.variant = variant
        self.weight_decay = weight_decay
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        if isinstance(self.random_state, (int, np.integer)):
            seed = int(self.random_state)
        else:
            seed = int(check_random_state(self.random_state).randint(2**31 - 1))
        return TrainConfig(
            c=self.n_bits,
            m=self.batch_size,
            T1=self.n_outer,
            T2=self.n_inner,
            lr=self.learning_rate,
            alpha1=self.alpha1,
            alpha2=self.alpha2,
            beta1=self.beta1,
            beta2=self.beta2,
            mode=self.mode,
            variant=self.variant,
            seed=seed,
            hidden=tuple(self.hidden_layer_sizes),
            weight_decay=self.weight_decay,
        ).validate()

    def _label_matrix(self, y) -> np.ndarray:
        y = np.asarray(y)
        if y.ndim == 2:
            return (y != 0).astype(np.uint8)
        index = np.searchsorted(self.classes_, y)
        index = np.clip(index, 0, len(self.classes_) - 1)
        known = self.classes_[index] == y
        out = np.zeros((y.shape[0], len(self.classes_)), dtype=np.uint8)
        out[np.flatnonzero(known), index[known]] = 1
        return out

    def fit(self, X, y):
        """``y`` is a 1-d array of class labels or a 2-d 0/1 label indicator matrix."""
        X = validate_data(self, X, dtype=np.float64)
        y = np.asarray(y)
        if y.ndim == 1:
            self.classes_ = np.unique(y)
        elif y.ndim == 2:
            self.classes_ = np.arange(y.shape[1])
        else:
            raise ValueError(f"y must be 1-d or 2-d, got shape {y.shape}")
        self.state_ = train(Dataset(X, self._label_matrix(y)), self._config())
        self.codes_ = self.state_.H.copy()
        self.train_labels_ = self._label_matrix(y)
        self.history_ = list(self.state_.history)
        return self

    def transform(self, X):
        """Binary codes in {-1, +1} (int8) for the rows of ``X``."""
        check_is_fitted(self, "state_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return enc.encode_binary(self.state_.encoder, X)

    def score(self, X, y, top_k=None):
        """Mean average precision of ``X`` as queries against the training codes."""
        check_is_fitted(self, "state_")
        queries = CodeDatabase.from_codes(self.transform(X), self._label_matrix(y))
        db = CodeDatabase.from_codes(self.codes_, self.train_labels_)
        return evaluate(db, queries, top_k).map

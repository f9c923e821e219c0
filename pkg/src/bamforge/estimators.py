"""Scikit-learn style wrappers around the two trainers.

These follow the sklearn sample convention (rows are samples), transposing
to the internal columns-are-patterns layout. fit(X, Y) stores the paired
patterns; predict(X) retrieves the associated far-end patterns.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .bp import BpConfig, Strategy, train_bbp
from .core import End, init_orthogonal, retrieve
from .patterns import PatternSet
from .sra import SraConfig, train_bsra


def _validate_pair(X, Y):
    X = check_array(X, dtype=np.float64)
    Y = check_array(Y, dtype=np.float64)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"X and Y must pair row-wise: {X.shape[0]} vs {Y.shape[0]} rows")
    return X, Y


class _BamEstimatorBase(BaseEstimator):
    def _layer_dims(self, n_a, n_b):
        if self.hidden_dims is not None:
            return [n_a, *self.hidden_dims, n_b]
        # one hidden layer on the short side keeps semi-orthogonality well-defined
        return [n_a, min(n_a, n_b), n_b]

    def predict(self, X, end: End = End.A, max_iters: int = 1):
        """Retrieve far-end bipolar patterns for each row of X."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=np.float64)
        out = [retrieve(self.model_, row, start_end=end, max_iters=max_iters).pattern
               for row in X]
        return np.stack(out)


class BsraMemory(_BamEstimatorBase):
    """Associative memory trained by bidirectional subspace rotation."""

    def __init__(self, hidden_dims=None, epochs=100, stop_on_perfect_recall=True,
                 rotate_inner_layers=False, seed=0):
        self.hidden_dims = hidden_dims
        self.epochs = epochs
        self.stop_on_perfect_recall = stop_on_perfect_recall
        self.rotate_inner_layers = rotate_inner_layers
        self.seed = seed

    def fit(self, X, Y):
        X, Y = _validate_pair(X, Y)
        pats = PatternSet(side_a=X.T, side_b=Y.T)
        cfg = SraConfig(epochs=self.epochs,
                        stop_on_perfect_recall=self.stop_on_perfect_recall,
                        rotate_inner_layers=self.rotate_inner_layers,
                        seed=self.seed)
        model = init_orthogonal(self._layer_dims(pats.n_a, pats.n_b), self.seed)
        self.model_, self.history_ = train_bsra(pats, model, cfg)
        return self


class BbpMemory(_BamEstimatorBase):
    """Associative memory trained by regularized bidirectional backprop."""

    def __init__(self, strategy="BP", hidden_dims=None, lr=1e-4, epochs=100,
                 lambda_ortho=1e-3, lambda_align=1e-2, gpa_stop_grad=False, seed=0):
        self.strategy = strategy
        self.hidden_dims = hidden_dims
        self.lr = lr
        self.epochs = epochs
        self.lambda_ortho = lambda_ortho
        self.lambda_align = lambda_align
        self.gpa_stop_grad = gpa_stop_grad
        self.seed = seed

    def fit(self, X, Y):
        X, Y = _validate_pair(X, Y)
        pats = PatternSet(side_a=X.T, side_b=Y.T)
        cfg = BpConfig(strategy=Strategy(self.strategy), lr=self.lr,
                       epochs=self.epochs, lambda_ortho=self.lambda_ortho,
                       lambda_align=self.lambda_align,
                       gpa_stop_grad=self.gpa_stop_grad, seed=self.seed)
        model = init_orthogonal(self._layer_dims(pats.n_a, pats.n_b), self.seed)
        self.model_, self.history_ = train_bbp(pats, model, cfg)
        return self

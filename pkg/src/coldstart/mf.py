"""Biased matrix factorization trained by SGD, with RMSE evaluation.

The model predicts ``global_mean + user_bias + item_bias + <p_u, q_i>``,
clamped to the training scale's value range. Entities unseen at training
time contribute only the bias terms that do exist.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .data import RatingMatrix

__all__ = ["MFHyperparams", "MFModel", "fit", "evaluate_rmse", "sgd_objective", "objective_gradients"]


@dataclass
class MFHyperparams:
    n_factors: int = 20
    learning_rate: float = 0.005
    l2_reg: float = 0.02
    epochs: int = 50
    init_sd: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_factors < 1:
            raise ValueError("n_factors must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.l2_reg < 0:
            raise ValueError("l2_reg must be >= 0")


@dataclass
class MFModel:
    user_index: dict
    item_index: dict
    user_factors: np.ndarray
    item_factors: np.ndarray
    user_bias: np.ndarray
    item_bias: np.ndarray
    global_mean: float
    scale_range: tuple
    epoch_loss: list = field(default_factory=list)

    @property
    def n_factors(self):
        return self.user_factors.shape[1]

    def predict(self, user, item):
        """Predicted rating, clamped to the training scale range."""
        pred = self.global_mean
        u = self.user_index.get(user)
        i = self.item_index.get(item)
        if u is not None:
            pred += self.user_bias[u]
        if i is not None:
            pred += self.item_bias[i]
        if u is not None and i is not None:
            pred += float(np.dot(self.user_factors[u], self.item_factors[i]))
        lo, hi = self.scale_range
        return min(max(pred, lo), hi)

    def dump_text(self, path):
        """Write all parameters as plain text, one entity per line."""
        with open(path, "w") as fh:
            fh.write(f"global_mean {self.global_mean!r}\n")
            fh.write(f"scale_range {self.scale_range[0]!r} {self.scale_range[1]!r}\n")
            fh.write(f"n_factors {self.n_factors}\n")
            for kind, index, bias, factors in (
                ("user", self.user_index, self.user_bias, self.user_factors),
                ("item", self.item_index, self.item_bias, self.item_factors),
            ):
                for entity in sorted(index, key=str):
                    pos = index[entity]
                    vec = " ".join(repr(float(x)) for x in factors[pos])
                    fh.write(f"{kind} {entity} bias {float(bias[pos])!r} factors {vec}\n")

    def predict_array(self, users, items):
        """Vectorized :meth:`predict` over parallel user/item sequences."""
        u_pos = np.array([self.user_index.get(u, -1) for u in users], dtype=np.int64)
        i_pos = np.array([self.item_index.get(i, -1) for i in items], dtype=np.int64)
        pred = np.full(len(u_pos), self.global_mean)
        u_ok = u_pos >= 0
        i_ok = i_pos >= 0
        pred[u_ok] += self.user_bias[u_pos[u_ok]]
        pred[i_ok] += self.item_bias[i_pos[i_ok]]
        both = u_ok & i_ok
        pred[both] += np.einsum(
            "ij,ij->i", self.user_factors[u_pos[both]], self.item_factors[i_pos[both]]
        )
        lo, hi = self.scale_range
        return np.clip(pred, lo, hi)


def _training_arrays(known):
    users = sorted(known.users)
    items = sorted(known.rated_items())
    user_index = {u: k for k, u in enumerate(users)}
    item_index = {i: k for k, i in enumerate(items)}
    triples = list(known.iter_entries())
    u_idx = np.fromiter((user_index[u] for u, _, _ in triples), np.int64, len(triples))
    i_idx = np.fromiter((item_index[i] for _, i, _ in triples), np.int64, len(triples))
    r = np.fromiter((v for _, _, v in triples), np.float64, len(triples))
    return user_index, item_index, u_idx, i_idx, r


def fit(known, hp):
    """Train a model on the known ratings.

    Minimizes the squared error plus L2 penalties by SGD, one pass over the
    ratings per epoch in a seeded shuffle order, so identical inputs and
    hyperparameters reproduce identical parameters. ``epoch_loss`` records
    the training objective after every epoch.
    """
    if not isinstance(known, RatingMatrix) or known.n_ratings == 0:
        raise ValueError("cannot fit on an empty rating matrix")
    user_index, item_index, u_idx, i_idx, r = _training_arrays(known)
    rng = np.random.default_rng(hp.seed)
    pu = rng.normal(0.0, hp.init_sd, (len(user_index), hp.n_factors))
    qi = rng.normal(0.0, hp.init_sd, (len(item_index), hp.n_factors))
    bu = np.zeros(len(user_index))
    bi = np.zeros(len(item_index))
    mu = float(r.mean())

    model = MFModel(
        user_index=user_index,
        item_index=item_index,
        user_factors=pu,
        item_factors=qi,
        user_bias=bu,
        item_bias=bi,
        global_mean=mu,
        scale_range=known.scale.value_range,
    )
    for _ in range(hp.epochs):
        order = rng.permutation(len(r)).astype(np.int64)
        kernels.sgd_epoch(u_idx, i_idx, r, order, pu, qi, bu, bi, mu, hp.learning_rate, hp.l2_reg)
        model.epoch_loss.append(_objective(u_idx, i_idx, r, pu, qi, bu, bi, mu, hp.l2_reg))
    return model


def _residuals(u_idx, i_idx, r, pu, qi, bu, bi, mu):
    pred = mu + bu[u_idx] + bi[i_idx] + np.einsum("ij,ij->i", pu[u_idx], qi[i_idx])
    return r - pred


def _objective(u_idx, i_idx, r, pu, qi, bu, bi, mu, reg):
    e = _residuals(u_idx, i_idx, r, pu, qi, bu, bi, mu)
    penalty = (
        bu[u_idx] ** 2
        + bi[i_idx] ** 2
        + np.einsum("ij,ij->i", pu[u_idx], pu[u_idx])
        + np.einsum("ij,ij->i", qi[i_idx], qi[i_idx])
    )
    return float(np.sum(e * e) + reg * np.sum(penalty))


def sgd_objective(model, known, l2_reg):
    """The training objective SGD descends: squared error plus, per rating,
    an L2 penalty on the parameters that rating touches."""
    _, _, u_idx, i_idx, r = _aligned_arrays(model, known)
    return _objective(
        u_idx,
        i_idx,
        r,
        model.user_factors,
        model.item_factors,
        model.user_bias,
        model.item_bias,
        model.global_mean,
        l2_reg,
    )


def objective_gradients(model, known, l2_reg):
    """Analytic gradient of :func:`sgd_objective` for every parameter.

    Returns arrays shaped like (user_bias, item_bias, user_factors,
    item_factors).
    """
    _, _, u_idx, i_idx, r = _aligned_arrays(model, known)
    pu, qi = model.user_factors, model.item_factors
    bu, bi = model.user_bias, model.item_bias
    e = _residuals(u_idx, i_idx, r, pu, qi, bu, bi, model.global_mean)
    deg_u = np.bincount(u_idx, minlength=len(bu))
    deg_i = np.bincount(i_idx, minlength=len(bi))
    g_bu = -2.0 * np.bincount(u_idx, weights=e, minlength=len(bu)) + 2.0 * l2_reg * deg_u * bu
    g_bi = -2.0 * np.bincount(i_idx, weights=e, minlength=len(bi)) + 2.0 * l2_reg * deg_i * bi
    g_pu = 2.0 * l2_reg * deg_u[:, None] * pu
    g_qi = 2.0 * l2_reg * deg_i[:, None] * qi
    np.add.at(g_pu, u_idx, -2.0 * e[:, None] * qi[i_idx])
    np.add.at(g_qi, i_idx, -2.0 * e[:, None] * pu[u_idx])
    return g_bu, g_bi, g_pu, g_qi


def _aligned_arrays(model, known):
    triples = [
        (u, i, v)
        for u, i, v in known.iter_entries()
        if u in model.user_index and i in model.item_index
    ]
    if len(triples) != known.n_ratings:
        raise ValueError("rating matrix contains entities unknown to the model")
    u_idx = np.fromiter((model.user_index[u] for u, _, _ in triples), np.int64, len(triples))
    i_idx = np.fromiter((model.item_index[i] for _, i, _ in triples), np.int64, len(triples))
    r = np.fromiter((v for _, _, v in triples), np.float64, len(triples))
    return model.user_index, model.item_index, u_idx, i_idx, r


def evaluate_rmse(model, test):
    """Root mean squared error of the model over all test ratings."""
    if test.n_ratings == 0:
        raise ValueError("cannot evaluate on an empty rating matrix")
    triples = list(test.iter_entries())
    users = [u for u, _, _ in triples]
    items = [i for _, i, _ in triples]
    actual = np.array([v for _, _, v in triples])
    pred = model.predict_array(users, items)
    return float(np.sqrt(np.mean((actual - pred) ** 2)))

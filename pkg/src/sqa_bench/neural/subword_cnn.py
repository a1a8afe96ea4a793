"""Phoneme/syllable/character CNN word embeddings.

A word's unit ids are looked up in an embedding table ``H`` (C x d) to form
``E`` (l x d). Each of the ``n_filters`` filters (k x d) slides over ``E`` with
stride 1 giving ``l - k + 1`` scores; max pooling keeps one scalar per filter.
Words shorter than ``k`` are extended with PAD rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NoForwardState, UnknownPhonemeId
from . import tensor as T

UNITS = ("phoneme", "syllable", "char")


@dataclass(frozen=True)
class SubwordConfig:
    unit: str
    d: int
    k: int
    n_filters: int

    @classmethod
    def default(cls, unit):
        if unit == "phoneme":
            return cls("phoneme", 6, 3, 80)
        if unit == "syllable":
            return cls("syllable", 20, 2, 100)
        if unit == "char":
            return cls("char", 8, 3, 50)
        raise ValueError(f"unknown subword unit {unit!r}")

    def to_dict(self):
        return {"unit": self.unit, "d": self.d, "k": self.k, "n_filters": self.n_filters}


@dataclass
class ForwardState:
    ids: np.ndarray          # padded unit ids, length max(l, k)
    windows: np.ndarray      # (l - k + 1, k * d) flattened E windows
    argmax: np.ndarray       # (n_filters,) winning window per filter
    shape: tuple             # (C, d, k, n_filters)


def pad_ids(ids, k, pad_index):
    ids = list(ids)
    if len(ids) < k:
        ids = ids + [pad_index] * (k - len(ids))
    return np.asarray(ids, dtype=np.int64)


def _check_ids(ids, n_symbols):
    if len(ids) == 0:
        raise ValueError("a word needs at least one unit")
    bad = [i for i in ids if not 0 <= i < n_symbols]
    if bad:
        raise UnknownPhonemeId(f"unit ids {bad} outside 0..{n_symbols - 1}")


def conv_scores(ids, H, filters, pad_index=0):
    """Per-filter stride-1 convolution output Z, shape (n_filters, l - k + 1)."""
    n_filters, k, d = filters.shape
    _check_ids(ids, H.shape[0])
    padded = pad_ids(ids, k, pad_index)
    E = H[padded]
    windows = np.stack([E[i:i + k].reshape(-1) for i in range(len(padded) - k + 1)])
    return filters.reshape(n_filters, -1) @ windows.T, padded, windows


def phoneme_cnn_forward(ids, H, filters, pad_index=0):
    """Embedding vector (n_filters,) plus the state ``subword_backward`` needs."""
    Z, padded, windows = conv_scores(ids, H, filters, pad_index)
    arg = Z.argmax(axis=1)
    out = Z[np.arange(Z.shape[0]), arg]
    state = ForwardState(padded, windows, arg, (H.shape[0], H.shape[1], filters.shape[1],
                                                filters.shape[0]))
    return out, state


class SubwordCNN:
    """Trainable CNN over one kind of subword unit."""

    def __init__(self, n_symbols, cfg, rng, pad_index=0, name=None):
        self.cfg = cfg
        self.n_symbols = n_symbols
        self.pad_index = pad_index
        name = name or cfg.unit
        self.H = T.parameter(rng.normal(0.0, 0.5, (n_symbols, cfg.d)), f"{name}.H")
        self.filters = T.parameter(
            rng.normal(0.0, 1.0 / np.sqrt(cfg.k * cfg.d), (cfg.n_filters, cfg.k, cfg.d)),
            f"{name}.filters")
        self._state = None

    def parameters(self):
        return [self.H, self.filters]

    @property
    def out_dim(self):
        return self.cfg.n_filters

    def forward(self, ids):
        out, self._state = phoneme_cnn_forward(ids, self.H.data, self.filters.data,
                                               self.pad_index)
        return out

    def backward(self, upstream):
        """Gradients for the last ``forward`` call: ``{"H": ..., "filters": ...}``."""
        return subword_backward(self._state, upstream, self.filters.data)

    def embed(self, id_lists):
        """Batched autograd path: (N, n_filters) embedding for N words."""
        k, d, nf = self.cfg.k, self.cfg.d, self.cfg.n_filters
        for ids in id_lists:
            _check_ids(ids, self.n_symbols)
        lengths = np.array([max(len(ids), k) for ids in id_lists])
        L = int(lengths.max())
        arr = np.full((len(id_lists), L), self.pad_index, dtype=np.int64)
        for r, ids in enumerate(id_lists):
            arr[r, :len(ids)] = ids
        W = L - k + 1
        win = np.arange(W)[:, None] + np.arange(k)[None, :]
        E = T.take_rows(self.H, arr)                                   # (N, L, d)
        Ew = T.reshape(T.getitem(E, (slice(None), win)), (len(id_lists), W, k * d))
        Fm = T.transpose(T.reshape(self.filters, (nf, k * d)), (1, 0))  # (k*d, nf)
        Z = T.matmul(Ew, Fm)                                           # (N, W, nf)
        valid = (np.arange(W)[None, :] < (lengths - k + 1)[:, None])[:, :, None]
        Z = T.add(Z, np.where(valid, 0.0, T.NEG_INF))
        return T.max_over(Z, axis=1)


def subword_backward(state, upstream, filters):
    """Gradients for ``H`` and the filters; only max-pool winners pass gradient."""
    if state is None:
        raise NoForwardState("subword_backward called before a forward pass")
    C, d, k, nf = state.shape
    upstream = np.asarray(upstream, dtype=np.float64)
    win = state.windows[state.argmax]                               # (nf, k*d)
    g_filters = (upstream[:, None] * win).reshape(nf, k, d)
    g_H = np.zeros((C, d))
    for f in range(nf):
        if upstream[f] == 0.0:
            continue
        start = state.argmax[f]
        rows = state.ids[start:start + k]
        np.add.at(g_H, rows, upstream[f] * filters[f])
    return {"H": g_H, "filters": g_filters}

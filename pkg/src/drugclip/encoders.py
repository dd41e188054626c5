"""Drug and disease encoders.

``mpnn_*`` functions run directed-edge message passing over molecular graphs;
``gram_*`` functions embed ICD-10 codes as attention-weighted mixtures of
their own and their ancestors' basic embeddings.

Both work on batches: a list of graphs is collated into one disjoint graph,
and a list of codes into one flat list of (key, query) attention pairs, so a
training step is a few dozen array ops regardless of batch size.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import diffcore as dc
from .errors import EmptyDiseaseSet, ShapeMismatch
from .molgraph import N_ATOM_FEATURES, N_BOND_FEATURES, MolGraph, atom_features, bond_feature
from .ontology import Ontology, normalize

READOUTS = ("sum", "mean")


@dataclass(frozen=True)
class MpnnConfig:
    depth: int = 3
    dim: int = 64
    readout: str = "sum"

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.readout not in READOUTS:
            raise ValueError(f"readout must be one of {READOUTS}, got {self.readout!r}")


def _register_mlp(store, prefix, n_in, n_hidden, n_out):
    store.register(f"{prefix}.W1", (n_hidden, n_in))
    store.register(f"{prefix}.b1", (n_hidden,), "bias")
    store.register(f"{prefix}.W2", (n_out, n_hidden))
    store.register(f"{prefix}.b2", (n_out,), "bias")


def _mlp(store, prefix, x, activation=dc.relu):
    hidden = activation(dc.linear(store.tensor(f"{prefix}.W1"), store.tensor(f"{prefix}.b1"), x))
    return dc.linear(store.tensor(f"{prefix}.W2"), store.tensor(f"{prefix}.b2"), hidden)


def register_mpnn_params(store: dc.ParameterStore, config: MpnnConfig) -> None:
    d = config.dim
    store.register("mpnn.proj.W", (d, N_ATOM_FEATURES))
    store.register("mpnn.proj.b", (d,), "bias")
    _register_mlp(store, "mpnn.f1", d + N_BOND_FEATURES + d, d, d)
    _register_mlp(store, "mpnn.f2", d + d, d, d)


def register_gram_params(store: dc.ParameterStore, n_codes: int, dim: int) -> None:
    store.register("gram.embedding", (n_codes, dim), "embedding")
    _register_mlp(store, "gram.phi", 2 * dim, dim, 1)


# --- graph collation ----------------------------------------------------------

@dataclass(frozen=True)
class GraphArrays:
    """Per-molecule arrays, computed once and reused across batches.

    Directed edge ``2k`` runs ``bonds[k].begin -> end`` and ``2k + 1`` the
    reverse. ``pass_rows/pass_cols`` list pairs (e, e') where e' = (w -> u)
    feeds e = (u -> v), w != v.
    """

    atom_x: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    edge_x: np.ndarray
    pass_rows: np.ndarray
    pass_cols: np.ndarray

    @property
    def n_atoms(self) -> int:
        return self.atom_x.shape[0]

    @property
    def n_edges(self) -> int:
        return self.src.shape[0]


def graph_arrays(graph: MolGraph) -> GraphArrays:
    atom_x = np.array([atom_features(a) for a in graph.atoms]).reshape(-1, N_ATOM_FEATURES)
    src, dst, edge_x = [], [], []
    for bond in graph.bonds:
        feat = bond_feature(bond.code)
        src += [bond.begin, bond.end]
        dst += [bond.end, bond.begin]
        edge_x += [feat, feat]
    incoming = [[] for _ in graph.atoms]
    for e, v in enumerate(dst):
        incoming[v].append(e)
    rows, cols = [], []
    for e, u in enumerate(src):
        for e_in in incoming[u]:
            if e_in != e ^ 1:
                rows.append(e)
                cols.append(e_in)
    return GraphArrays(
        atom_x=atom_x,
        src=np.array(src, dtype=np.intp),
        dst=np.array(dst, dtype=np.intp),
        edge_x=np.array(edge_x).reshape(-1, N_BOND_FEATURES),
        pass_rows=np.array(rows, dtype=np.intp),
        pass_cols=np.array(cols, dtype=np.intp),
    )


@dataclass
class GraphBatch:
    atom_x: np.ndarray
    src: np.ndarray
    edge_x: np.ndarray
    message_pass: sp.csr_matrix  # (E, E): sum of incoming messages excluding the reverse edge
    node_in: sp.csr_matrix  # (N, E): sum of messages arriving at each node
    readout: sp.csr_matrix  # (B, N)

    @property
    def n_graphs(self) -> int:
        return self.readout.shape[0]


def collate(graphs: Sequence, readout: str = "sum") -> GraphBatch:
    """Merge graphs (or precomputed GraphArrays) into one disjoint batch."""
    if not graphs:
        raise ShapeMismatch("cannot collate an empty list of graphs")
    parts = [g if isinstance(g, GraphArrays) else graph_arrays(g) for g in graphs]
    n_nodes = sum(p.n_atoms for p in parts)
    n_edges = sum(p.n_edges for p in parts)
    src, dst, rows, cols, graph_of = [], [], [], [], []
    node_off = edge_off = 0
    for b, p in enumerate(parts):
        src.append(p.src + node_off)
        dst.append(p.dst + node_off)
        rows.append(p.pass_rows + edge_off)
        cols.append(p.pass_cols + edge_off)
        graph_of.append(np.full(p.n_atoms, b, dtype=np.intp))
        node_off += p.n_atoms
        edge_off += p.n_edges
    src = np.concatenate(src)
    dst = np.concatenate(dst)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph_of = np.concatenate(graph_of)

    message_pass = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n_edges, n_edges))
    node_in = sp.csr_matrix((np.ones(n_edges), (dst, np.arange(n_edges))), shape=(n_nodes, n_edges))
    if readout == "sum":
        weights = np.ones(n_nodes)
    elif readout == "mean":
        sizes = np.array([p.n_atoms for p in parts], dtype=np.float64)
        weights = 1.0 / sizes[graph_of]
    else:
        raise ValueError(f"unknown readout {readout!r}")
    pool = sp.csr_matrix((weights, (graph_of, np.arange(n_nodes))), shape=(len(parts), n_nodes))
    return GraphBatch(
        atom_x=np.concatenate([p.atom_x for p in parts]),
        src=src,
        edge_x=np.concatenate([p.edge_x for p in parts]),
        message_pass=message_pass,
        node_in=node_in,
        readout=pool,
    )


# --- MPNN ---------------------------------------------------------------------

def mpnn_nodes(batch: GraphBatch, store: dc.ParameterStore, config: MpnnConfig) -> dc.Tensor:
    """Node embeddings after ``config.depth`` rounds of message passing."""
    d = config.dim
    node_feat = dc.linear(store.tensor("mpnn.proj.W"), store.tensor("mpnn.proj.b"), batch.atom_x)
    n_edges = batch.src.shape[0]
    messages = dc.Tensor(np.zeros((n_edges, d)))
    if n_edges:
        sender_feat = dc.gather(node_feat, batch.src)
        for _ in range(config.depth):
            incoming = dc.sparse_matmul(batch.message_pass, messages)
            messages = _mlp(store, "mpnn.f1", dc.concat([sender_feat, batch.edge_x, incoming], axis=1))
    received = dc.sparse_matmul(batch.node_in, messages)
    return _mlp(store, "mpnn.f2", dc.concat([node_feat, received], axis=1))


def mpnn_forward(batch: GraphBatch, store: dc.ParameterStore, config: MpnnConfig) -> dc.Tensor:
    """Graph embeddings, one row per graph in the batch."""
    return dc.sparse_matmul(batch.readout, mpnn_nodes(batch, store, config))


def mpnn_encode_batch(graphs: Sequence, store: dc.ParameterStore, config: MpnnConfig) -> dc.Tensor:
    return mpnn_forward(collate(graphs, config.readout), store, config)


def mpnn_encode(graph: MolGraph, store: dc.ParameterStore, config: MpnnConfig) -> dc.Tensor:
    """Embedding ``h_G`` (length ``config.dim``) of a single molecule."""
    return dc.gather(mpnn_encode_batch([graph], store, config), 0)


# --- GRAM ---------------------------------------------------------------------

def _gram_pairs(codes, ontology: Ontology):
    keys, queries, segments = [], [], []
    for q, code in enumerate(codes):
        ids = ontology.attention_ids(code)
        keys += ids
        queries += [ids[-1]] * len(ids)
        segments += [q] * len(ids)
    return (np.array(keys, dtype=np.intp), np.array(queries, dtype=np.intp),
            np.array(segments, dtype=np.intp))


def gram_forward(codes: Sequence, ontology: Ontology, store: dc.ParameterStore):
    """Embed several codes at once.

    Returns ``(H, alpha, segments)``: H has one row per code, ``alpha`` holds
    the attention weights of all (ancestor-or-self, code) pairs and
    ``segments`` maps each pair to its code's row.
    """
    if not codes:
        raise EmptyDiseaseSet("no codes to encode")
    keys, queries, segments = _gram_pairs(codes, ontology)
    table = store.tensor("gram.embedding")
    if table.shape[0] != len(ontology):
        raise ShapeMismatch(f"embedding table has {table.shape[0]} rows, ontology {len(ontology)}")
    key_emb = dc.gather(table, keys)
    query_emb = dc.gather(table, queries)
    scores = _mlp(store, "gram.phi", dc.concat([key_emb, query_emb], axis=1), activation=dc.tanh)
    alpha = dc.segment_softmax(dc.reshape(scores, (keys.size,)), segments, len(codes))
    pool = sp.csr_matrix((np.ones(keys.size), (segments, np.arange(keys.size))),
                         shape=(len(codes), keys.size))
    weighted = dc.mul(dc.reshape(alpha, (keys.size, 1)), key_emb)
    return dc.sparse_matmul(pool, weighted), alpha, segments


def gram_encode(code, ontology: Ontology, store: dc.ParameterStore) -> dc.Tensor:
    """Embedding ``h_i`` of one code."""
    H, _, _ = gram_forward([code], ontology, store)
    return dc.gather(H, 0)


def gram_attention(code, ontology: Ontology, store: dc.ParameterStore) -> np.ndarray:
    """Attention weights over ``ancestors(code) + [code]``, in that order."""
    _, alpha, _ = gram_forward([code], ontology, store)
    return alpha.value.copy()


def canonical_set(codes) -> tuple:
    """Sorted, de-duplicated canonical code strings."""
    return tuple(sorted({normalize(c).canonical for c in codes}))


def encode_disease_sets(code_sets: Sequence, ontology: Ontology,
                        store: dc.ParameterStore) -> dc.Tensor:
    """Mean GRAM embedding of each code set, one row per set."""
    sets = [canonical_set(s) for s in code_sets]
    if not sets:
        raise EmptyDiseaseSet("no disease sets given")
    for s in sets:
        if not s:
            raise EmptyDiseaseSet("disease set is empty")
    unique = sorted({c for s in sets for c in s})
    col = {c: k for k, c in enumerate(unique)}
    H, _, _ = gram_forward(unique, ontology, store)
    rows, cols, weights = [], [], []
    for r, s in enumerate(sets):
        for c in s:
            rows.append(r)
            cols.append(col[c])
            weights.append(1.0 / len(s))
    mean = sp.csr_matrix((weights, (rows, cols)), shape=(len(sets), len(unique)))
    return dc.sparse_matmul(mean, H)


def encode_disease_set(codes, ontology: Ontology, store: dc.ParameterStore) -> dc.Tensor:
    return dc.gather(encode_disease_sets([codes], ontology, store), 0)

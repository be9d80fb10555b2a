"""Dataset loading, canonical writing, splits, feature sampling, synthetic generators.

File formats (UTF-8, LF, tab-separated, `#` comment lines ignored):
  edges.tsv     u<TAB>v            undirected, 0-based node ids
  features.tsv  node<TAB>tok ...   tok is `id` or `id:weight`; one line per node
  labels.tsv    node<TAB>class     nodes may be missing (unlabeled)
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .rng import SAMPLE, SPLIT, SYNTH, stream_rng


class DataError(ValueError):
    """Malformed or inconsistent input data; the CLI maps this to exit code 3."""


@dataclass
class RawDataset:
    num_nodes: int
    num_features: int
    num_classes: int
    edges: np.ndarray  # (E, 2) int64, canonical: u < v, deduplicated, no self loops
    feature_ids: list  # per node: int64 array, ascending, distinct, non-empty
    feature_weights: list  # per node: float64 array, finite and positive
    labels: np.ndarray  # (N,) int64, -1 marks unlabeled
    diagnostics: dict = field(default_factory=dict)

    @property
    def labeled_ids(self) -> np.ndarray:
        return np.flatnonzero(self.labels >= 0).astype(np.int64)


@dataclass(frozen=True)
class SplitAssignment:
    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray
    seed: int


@dataclass(frozen=True)
class FeatureSample:
    """Fixed-size per-node feature sample: ids and weights, both (N, n_f)."""

    ids: np.ndarray
    weights: np.ndarray
    n_f: int
    seed: int


def _parse_lines(path: str):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def _parse_int(tok: str, what: str, path: str, lineno: int) -> int:
    try:
        v = int(tok)
    except ValueError:
        raise DataError(f"{path}:{lineno}: {what} is not an integer: {tok!r}") from None
    if v < 0:
        raise DataError(f"{path}:{lineno}: {what} must be non-negative, got {v}")
    return v


def load_dataset(edges_path: str, features_path: str, labels_path: str) -> RawDataset:
    """Load and validate the three files; the features file defines the node universe."""
    feat_ids: dict[int, np.ndarray] = {}
    feat_w: dict[int, np.ndarray] = {}
    for lineno, line in _parse_lines(features_path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{features_path}:{lineno}: expected node<TAB>features, got {line!r}")
        node = _parse_int(parts[0], "node id", features_path, lineno)
        if node in feat_ids:
            raise DataError(f"{features_path}:{lineno}: duplicate feature line for node {node}")
        ids, ws = [], []
        for tok in parts[1].split():
            fid_tok, _, w_tok = tok.partition(":")
            fid = _parse_int(fid_tok, "feature id", features_path, lineno)
            if w_tok:
                try:
                    w = float(w_tok)
                except ValueError:
                    raise DataError(
                        f"{features_path}:{lineno}: bad feature weight {tok!r}"
                    ) from None
            else:
                w = 1.0
            if not np.isfinite(w) or w <= 0:
                raise DataError(
                    f"{features_path}:{lineno}: weight must be finite and positive, got {w}"
                )
            ids.append(fid)
            ws.append(w)
        if not ids:
            raise DataError(f"{features_path}:{lineno}: node {node} has an empty feature list")
        ids_arr = np.asarray(ids, dtype=np.int64)
        if len(np.unique(ids_arr)) != len(ids_arr):
            raise DataError(f"{features_path}:{lineno}: duplicate feature id for node {node}")
        order = np.argsort(ids_arr)
        feat_ids[node] = ids_arr[order]
        feat_w[node] = np.asarray(ws, dtype=np.float64)[order]

    if not feat_ids:
        raise DataError(f"{features_path}: no feature lines found")
    num_nodes = max(feat_ids) + 1
    missing = [u for u in range(num_nodes) if u not in feat_ids]
    if missing:
        raise DataError(f"{features_path}: node {missing[0]} has no feature line")
    num_features = int(max(arr[-1] for arr in feat_ids.values())) + 1

    raw_edges = []
    for lineno, line in _parse_lines(edges_path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{edges_path}:{lineno}: expected u<TAB>v, got {line!r}")
        u = _parse_int(parts[0], "node id", edges_path, lineno)
        v = _parse_int(parts[1], "node id", edges_path, lineno)
        if u >= num_nodes or v >= num_nodes:
            raise DataError(
                f"{edges_path}:{lineno}: edge ({u}, {v}) references a node with no feature line"
                f" (dangling id; {num_nodes} nodes known)"
            )
        raw_edges.append((u, v))
    edges, diag = _canonical_edges(raw_edges)

    labels = np.full(num_nodes, -1, dtype=np.int64)
    for lineno, line in _parse_lines(labels_path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{labels_path}:{lineno}: expected node<TAB>class, got {line!r}")
        node = _parse_int(parts[0], "node id", labels_path, lineno)
        cls = _parse_int(parts[1], "class id", labels_path, lineno)
        if node >= num_nodes:
            raise DataError(
                f"{labels_path}:{lineno}: label for unknown node {node} (dangling id)"
            )
        if labels[node] >= 0:
            raise DataError(f"{labels_path}:{lineno}: duplicate label for node {node}")
        labels[node] = cls
    num_classes = int(labels.max()) + 1 if (labels >= 0).any() else 0

    diag.update(
        num_nodes=num_nodes,
        num_features=num_features,
        num_classes=num_classes,
        num_edges=len(edges),
        num_labeled=int((labels >= 0).sum()),
    )
    return RawDataset(
        num_nodes=num_nodes,
        num_features=num_features,
        num_classes=num_classes,
        edges=edges,
        feature_ids=[feat_ids[u] for u in range(num_nodes)],
        feature_weights=[feat_w[u] for u in range(num_nodes)],
        labels=labels,
        diagnostics=diag,
    )


def _canonical_edges(raw_edges) -> tuple[np.ndarray, dict]:
    e = np.asarray(raw_edges, dtype=np.int64).reshape(-1, 2)
    n_raw = len(e)
    e = e[e[:, 0] != e[:, 1]]
    n_self = n_raw - len(e)
    e = np.sort(e, axis=1)
    if len(e):
        e = np.unique(e, axis=0)
    n_dup = n_raw - n_self - len(e)
    return e, {"self_loops_dropped": int(n_self), "duplicate_edges_dropped": int(n_dup)}


def _format_weight(w: float) -> str:
    return repr(float(w))


def write_dataset(ds: RawDataset, out_dir: str, meta: dict | None = None) -> dict:
    """Write canonical edges/features/labels files (and optional meta.json); returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "edges": os.path.join(out_dir, "edges.tsv"),
        "features": os.path.join(out_dir, "features.tsv"),
        "labels": os.path.join(out_dir, "labels.tsv"),
    }
    with open(paths["edges"], "w", encoding="utf-8", newline="\n") as fh:
        for u, v in ds.edges:
            fh.write(f"{u}\t{v}\n")
    with open(paths["features"], "w", encoding="utf-8", newline="\n") as fh:
        for u in range(ds.num_nodes):
            toks = []
            for fid, w in zip(ds.feature_ids[u], ds.feature_weights[u]):
                toks.append(str(fid) if w == 1.0 else f"{fid}:{_format_weight(w)}")
            fh.write(f"{u}\t{' '.join(toks)}\n")
    with open(paths["labels"], "w", encoding="utf-8", newline="\n") as fh:
        for u in range(ds.num_nodes):
            if ds.labels[u] >= 0:
                fh.write(f"{u}\t{ds.labels[u]}\n")
    if meta is not None:
        paths["meta"] = os.path.join(out_dir, "meta.json")
        with open(paths["meta"], "w", encoding="utf-8", newline="\n") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return paths


def dataset_fingerprint(edges_path: str, features_path: str, labels_path: str) -> str:
    """SHA-256 over the three files' bytes, order-fixed; identifies dataset content."""
    h = hashlib.sha256()
    for path in (edges_path, features_path, labels_path):
        with open(path, "rb") as fh:
            h.update(hashlib.sha256(fh.read()).digest())
    return h.hexdigest()


def split_sizes(n_labeled: int) -> tuple[int, int, int]:
    """80/10/10 with the rounding remainder assigned to train."""
    n_val = n_labeled // 10
    n_test = n_labeled // 10
    return n_labeled - n_val - n_test, n_val, n_test


def make_split(ds: RawDataset, seed: int) -> SplitAssignment:
    """Disjoint train/val/test over labeled nodes; unlabeled nodes stay out of every split."""
    labeled = ds.labeled_ids
    if len(labeled) < 10:
        raise DataError(f"need at least 10 labeled nodes to split, got {len(labeled)}")
    n_train, n_val, n_test = split_sizes(len(labeled))
    perm = stream_rng(seed, SPLIT).permutation(labeled)
    return SplitAssignment(
        train_ids=np.sort(perm[:n_train]),
        val_ids=np.sort(perm[n_train : n_train + n_val]),
        test_ids=np.sort(perm[n_train + n_val :]),
        seed=seed,
    )


def sample_features(ds: RawDataset, n_f: int, seed: int) -> FeatureSample:
    """Fixed-size feature sample per node, deterministic per (seed, node).

    |S| >= n_f: n_f distinct ids uniformly without replacement (|S| == n_f is
    the whole set, order shuffled). |S| < n_f: all of S plus uniform fill with
    replacement.
    """
    if n_f < 1:
        raise ValueError(f"n_f must be >= 1, got {n_f}")
    ids = np.empty((ds.num_nodes, n_f), dtype=np.int64)
    weights = np.empty((ds.num_nodes, n_f))
    for u in range(ds.num_nodes):
        s = ds.feature_ids[u]
        w = ds.feature_weights[u]
        rng = stream_rng(seed, SAMPLE, substream=u)
        if len(s) >= n_f:
            pick = rng.choice(len(s), size=n_f, replace=False)
        else:
            fill = rng.integers(0, len(s), size=n_f - len(s))
            pick = np.concatenate([np.arange(len(s)), fill])
        ids[u] = s[pick]
        weights[u] = w[pick]
    return FeatureSample(ids=ids, weights=weights, n_f=n_f, seed=seed)


# --- synthetic generators -------------------------------------------------

SYNTH_KINDS = ("local-signal", "global-signal", "homophily")


def generate_synthetic(
    kind: str,
    n_nodes: int,
    n_feats: int,
    n_classes: int,
    n_f: int,
    p_in: float,
    p_out: float,
    seed: int,
) -> RawDataset:
    """Synthetic dataset with SBM edges keyed to the label.

    local-signal: each node carries two planted signal features; the label is
    the sum of their hidden keys mod n_classes (pairwise-interaction signal,
    single-feature marginals are class-uniform). global-signal: 70% of each
    node's features come from a pair of feature groups; the label is the pair's
    key sum mod n_classes. homophily: labels uniform, features uniform (only
    the graph is informative).
    """
    if kind not in SYNTH_KINDS:
        raise DataError(f"unknown synthetic kind {kind!r}; choose from {SYNTH_KINDS}")
    if n_nodes < 10 or n_classes < 2 or n_f < 1:
        raise DataError("need n_nodes >= 10, n_classes >= 2, n_f >= 1")
    if not (0.0 <= p_out <= 1.0 and 0.0 <= p_in <= 1.0):
        raise DataError("edge probabilities must lie in [0, 1]")
    rng = stream_rng(seed, SYNTH)

    if kind == "local-signal":
        labels, fids = _local_signal_features(n_nodes, n_feats, n_classes, n_f, rng)
    elif kind == "global-signal":
        labels, fids = _global_signal_features(n_nodes, n_feats, n_classes, n_f, rng)
    else:
        labels = rng.integers(0, n_classes, size=n_nodes).astype(np.int64)
        if n_feats < n_f:
            raise DataError(f"homophily needs n_feats >= n_f, got {n_feats} < {n_f}")
        fids = [np.sort(rng.choice(n_feats, size=n_f, replace=False)) for _ in range(n_nodes)]

    edges = _sbm_edges(labels, n_classes, p_in, p_out, rng)
    return RawDataset(
        num_nodes=n_nodes,
        num_features=n_feats,
        num_classes=n_classes,
        edges=edges,
        feature_ids=fids,
        feature_weights=[np.ones(len(f)) for f in fids],
        labels=labels,
        diagnostics={"kind": kind, "seed": seed},
    )


def _local_signal_features(n_nodes, n_feats, n_classes, n_f, rng):
    n_signal = 2 * n_classes  # two features per hidden key
    if n_signal > n_feats:
        raise DataError(
            f"local-signal needs n_feats >= 2*n_classes, got {n_feats} < {n_signal}"
        )
    n_noise_per_node = max(n_f - 2, 0)
    if n_feats - n_signal < n_noise_per_node:
        raise DataError(
            "local-signal noise pool too small: need n_feats >= 2*n_classes + n_f - 2"
        )
    labels = np.empty(n_nodes, dtype=np.int64)
    fids = []
    for u in range(n_nodes):
        # hidden key of feature x is x mod n_classes; drawing the partner KEY
        # uniformly makes the label exactly independent of any single feature
        f = int(rng.integers(0, n_signal))
        key_g = int(rng.integers(0, n_classes))
        twin = (f + n_classes) % n_signal  # the other feature with f's key
        g = key_g + n_classes * int(rng.integers(0, 2))
        if g == f:
            g = twin
        labels[u] = (f + g) % n_classes
        noise = rng.choice(n_feats - n_signal, size=n_noise_per_node, replace=False) + n_signal
        fids.append(np.sort(np.concatenate([[f, g], noise])).astype(np.int64))
    return labels, fids


def _global_signal_features(n_nodes, n_feats, n_classes, n_f, rng):
    # four carrier groups per hidden key (key of group x is x mod n_classes);
    # the label is the key sum of two co-occurring groups, with the partner
    # key drawn uniformly so any single group is label-uniform on its own
    n_groups = 4 * n_classes
    group_size = int(0.7 * n_feats) // n_groups
    if group_size < 2:
        raise DataError(
            f"global-signal needs n_feats large enough for {n_groups} groups, got {n_feats}"
        )
    noise_lo = n_groups * group_size
    n_sig = max(int(round(0.7 * n_f)), 2)
    n_noise = n_f - n_sig
    if n_feats - noise_lo < max(n_noise, 1):
        raise DataError("global-signal noise pool too small")
    labels = np.empty(n_nodes, dtype=np.int64)
    fids = []
    for u in range(n_nodes):
        g = int(rng.integers(0, n_groups))
        key_h = int(rng.integers(0, n_classes))
        cands = [x for x in range(n_groups) if x % n_classes == key_h and x != g]
        h = cands[int(rng.integers(0, len(cands)))]
        # one group contributes a single feature: the pair is near-invisible
        # to a mean over the bag but plain to per-feature detectors
        n_g = 1 if int(rng.integers(0, 2)) else n_sig - 1
        n_g = min(max(n_g, n_sig - group_size), group_size)
        sig_g = rng.choice(group_size, size=n_g, replace=False) + g * group_size
        sig_h = rng.choice(group_size, size=n_sig - n_g, replace=False) + h * group_size
        noise = rng.choice(n_feats - noise_lo, size=n_noise, replace=False) + noise_lo
        labels[u] = (g + h) % n_classes
        fids.append(np.sort(np.concatenate([sig_g, sig_h, noise])).astype(np.int64))
    return labels, fids


def _decode_triangular(idx: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Map linear indices over {(i, j): 0 <= i < j < k} back to pairs."""
    counts = np.arange(k - 1, 0, -1, dtype=np.int64)
    ends = np.cumsum(counts)
    i = np.searchsorted(ends, idx, side="right")
    starts = ends - counts
    j = i + 1 + (idx - starts[i])
    return i, j


def _sbm_edges(labels, n_classes, p_in, p_out, rng) -> np.ndarray:
    """Stochastic block model keyed to labels, sampled per block pair via binomial counts."""
    blocks = [np.flatnonzero(labels == c) for c in range(n_classes)]
    chunks = []
    for a in range(n_classes):
        na = len(blocks[a])
        # within-block pairs
        m = na * (na - 1) // 2
        if m > 0 and p_in > 0:
            cnt = rng.binomial(m, p_in)
            if cnt:
                idx = rng.choice(m, size=cnt, replace=False)
                i, j = _decode_triangular(np.sort(idx), na)
                chunks.append(np.column_stack([blocks[a][i], blocks[a][j]]))
        for b in range(a + 1, n_classes):
            nb = len(blocks[b])
            m = na * nb
            if m > 0 and p_out > 0:
                cnt = rng.binomial(m, p_out)
                if cnt:
                    idx = np.sort(rng.choice(m, size=cnt, replace=False))
                    i, j = idx // nb, idx % nb
                    chunks.append(np.column_stack([blocks[a][i], blocks[b][j]]))
    if not chunks:
        return np.empty((0, 2), dtype=np.int64)
    edges, _ = _canonical_edges(np.concatenate(chunks))
    return edges

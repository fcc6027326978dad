"""Cross-frame identity: bidirectional-softmax scoring plus an id ledger.

Scores between the current frame's embeddings and the stored track embeddings
are the average of a row-wise and a column-wise softmax over the raw inner
products, so a pair only scores high when each side prefers the other.
Assignment is greedy on the score matrix, gated by class agreement. Matched
tracks blend their stored embedding toward the new observation; tracks that
stay unseen longer than ``ttl`` frames are retired and their ids are never
reused.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError

MATCH_THRESH = 0.2
EMA_MOMENTUM = 0.5
TTL = 2


def _softmax(sim: np.ndarray, axis: int) -> np.ndarray:
    shifted = sim - sim.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def bi_softmax_parts(emb_cur: np.ndarray, emb_prev: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(row-softmax, column-softmax) of the similarity matrix, both [M, P]."""
    if emb_cur.ndim != 2 or emb_prev.ndim != 2 or emb_cur.shape[1] != emb_prev.shape[1]:
        raise ConfigError(f"embedding shapes {emb_cur.shape} vs {emb_prev.shape}")
    if emb_cur.shape[0] == 0 or emb_prev.shape[0] == 0:
        raise ConfigError("bi-softmax needs at least one embedding on each side")
    sim = emb_cur.astype(np.float64) @ emb_prev.astype(np.float64).T
    return _softmax(sim, axis=1), _softmax(sim, axis=0)


def bi_softmax_scores(emb_cur: np.ndarray, emb_prev: np.ndarray) -> np.ndarray:
    rows, cols = bi_softmax_parts(emb_cur, emb_prev)
    return 0.5 * (rows + cols)


@dataclass
class Track:
    track_id: int
    embedding: np.ndarray  # [D]
    class_id: int
    last_seen: int
    active: bool = True


@dataclass
class TrackStore:
    """Ledger of every identity ever emitted. Ids are unique per store."""

    first_id: int = 1
    tracks: dict[int, Track] = field(default_factory=dict)
    next_id: int = field(init=False)

    def __post_init__(self):
        self.next_id = self.first_id

    def spawn(self, embedding: np.ndarray, class_id: int, frame: int) -> int:
        tid = self.next_id
        self.next_id += 1
        self.tracks[tid] = Track(
            track_id=tid,
            embedding=np.asarray(embedding, dtype=np.float64).copy(),
            class_id=int(class_id),
            last_seen=int(frame),
            active=True,
        )
        return tid

    def observe(self, tid: int, embedding: np.ndarray, frame: int, momentum: float = EMA_MOMENTUM) -> None:
        t = self.tracks[tid]
        t.embedding = momentum * t.embedding + (1.0 - momentum) * np.asarray(embedding, dtype=np.float64)
        t.last_seen = int(frame)
        t.active = True

    def candidates(self, frame: int, ttl: int = TTL) -> list[Track]:
        """Tracks still matchable at ``frame``: unseen for at most ttl frames."""
        return [t for t in self.tracks.values() if t.active and frame - t.last_seen <= ttl]

    def retire(self, frame: int, ttl: int = TTL) -> None:
        for t in self.tracks.values():
            if t.active and frame - t.last_seen > ttl:
                t.active = False

    def active_ids(self) -> list[int]:
        return sorted(tid for tid, t in self.tracks.items() if t.active)


def associate(
    scores: np.ndarray,
    emb_cur: np.ndarray,
    class_ids_cur: np.ndarray,
    candidates: list[Track],
    store: TrackStore,
    frame: int,
    match_thresh: float = MATCH_THRESH,
    momentum: float = EMA_MOMENTUM,
    ttl: int = TTL,
) -> dict[int, int]:
    """Greedy descending-score matching; returns row index -> track id.

    ``scores`` has one row per current instance and one column per candidate
    track (same order as ``candidates``). Pairs scoring below the threshold
    or disagreeing on class start fresh ids instead. The store is updated in
    place: matches blend embeddings, leftovers spawn, stale tracks retire.
    """
    m = emb_cur.shape[0]
    p = len(candidates)
    if scores.shape != (m, p):
        raise ConfigError(f"score matrix {scores.shape} does not cover {m} rows x {p} tracks")

    assignment: dict[int, int] = {}
    if p and m:
        masked = scores.astype(np.float64).copy()
        for j, t in enumerate(candidates):
            masked[np.asarray(class_ids_cur) != t.class_id, j] = -np.inf
        while True:
            flat = int(np.argmax(masked))
            i, j = divmod(flat, p)
            if not masked[i, j] >= match_thresh:
                break
            tid = candidates[j].track_id
            store.observe(tid, emb_cur[i], frame, momentum)
            assignment[i] = tid
            masked[i, :] = -np.inf
            masked[:, j] = -np.inf

    for i in range(m):
        if i not in assignment:
            assignment[i] = store.spawn(emb_cur[i], int(class_ids_cur[i]), frame)
    store.retire(frame, ttl)
    return assignment

"""Morphing-sequence mining, path validation, and non-neural baselines.

Mining is a constrained random walk over the similarity index: each step
must stay within the smoothness band (Jaccard to the previous sentence
strictly above eps) while strictly decreasing Jaccard to the walk's source.
Walks of an admissible length become training sequences.

The per-source RNG is derived from (global seed, source id), so mining is
embarrassingly parallel across sources and the merged output is identical
for any worker count.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from morphkit.errors import DataError
from morphkit.simindex import LshIndex
from morphkit.textcore import Sentence, Vocabulary, jaccard

PROVENANCES = ("mined", "generated", "baseline")


@dataclass
class MorphSequence:
    """An ordered sentence path [X_start, X_1, ..., X_end]."""

    sentences: list[Sentence]
    provenance: str = "mined"

    def __post_init__(self):
        if len(self.sentences) < 2:
            raise DataError("a morph sequence needs at least two sentences")
        if self.provenance not in PROVENANCES:
            raise DataError(f"unknown provenance {self.provenance!r}")

    @property
    def n_steps(self) -> int:
        """Editing steps from the source (sentences minus one)."""
        return len(self.sentences) - 1

    @property
    def n_intermediates(self) -> int:
        """Sentences strictly between source and end."""
        return len(self.sentences) - 2

    @property
    def source(self) -> Sentence:
        return self.sentences[0]

    @property
    def target(self) -> Sentence:
        return self.sentences[-1]

    def key(self) -> tuple[tuple[str, ...], ...]:
        """Dedup key: the full token-sequence tuple of the path."""
        return tuple(s.tokens for s in self.sentences)


@dataclass
class MiningParams:
    eps: float = 0.5
    t_min: int = 4
    t_max: int = 8
    repeats: int = 10
    count: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise DataError(f"eps must be in (0,1), got {self.eps}")
        if not 1 <= self.t_min <= self.t_max:
            raise DataError(
                f"need 1 <= t_min <= t_max, got [{self.t_min}, {self.t_max}]")
        if self.repeats < 1:
            raise DataError("repeats must be >= 1")


@dataclass
class ValidationReport:
    smooth: bool
    away_from_source: bool
    toward_target: bool


def validate(seq: MorphSequence, eps: float) -> ValidationReport:
    """Check the three path conditions under Jaccard similarity.

    smooth: every adjacent pair has similarity > eps.  away_from_source:
    similarity to the first sentence strictly decreases along the path.
    toward_target: similarity to the last sentence strictly increases.
    """
    sents = seq.sentences
    smooth = all(
        jaccard(sents[i - 1], sents[i]) > eps for i in range(1, len(sents)))
    src, tgt = sents[0], sents[-1]
    to_src = [jaccard(s, src) for s in sents]
    to_tgt = [jaccard(s, tgt) for s in sents]
    away = all(to_src[i] < to_src[i - 1] for i in range(1, len(sents)))
    toward = all(to_tgt[i] > to_tgt[i - 1] for i in range(1, len(sents)))
    return ValidationReport(smooth=smooth, away_from_source=away,
                            toward_target=toward)


def _walk(source_id: int, corpus: Sequence[Sentence], index: LshIndex,
          params: MiningParams) -> list[list[Sentence]]:
    """All admissible walks from one source (repeats attempts, seeded)."""
    rng = np.random.default_rng([params.seed, source_id])
    source = corpus[source_id]
    walks: list[list[Sentence]] = []
    for _ in range(params.repeats):
        seq = [source]
        cur = source
        cur_to_src = 1.0
        while len(seq) - 1 < params.t_max:
            pool = []
            for idx, _sim in index.query(cur, params.eps):
                cand = corpus[idx]
                if jaccard(cand, source) < cur_to_src:
                    pool.append(cand)
            if not pool:
                break
            cur = pool[int(rng.integers(len(pool)))]
            cur_to_src = jaccard(cur, source)
            seq.append(cur)
        if params.t_min <= len(seq) - 1 <= params.t_max:
            walks.append(seq)
    return walks


def mine(corpus: Sequence[Sentence], index: LshIndex, params: MiningParams,
         sources: Sequence[int] | None = None,
         workers: int = 1) -> list[MorphSequence]:
    """Extract morphing sequences from an indexed corpus.

    Sources default to a seeded random permutation of the corpus; pass
    explicit source ids to restrict or order them.  Exact duplicate paths
    (full token-sequence equality) are removed; mining stops once
    params.count sequences are collected or sources are exhausted.
    The result is independent of the worker count.
    """
    corpus = list(corpus)
    index.attach_corpus(corpus)
    if sources is None:
        order_rng = np.random.default_rng([params.seed])
        source_ids = [int(i) for i in order_rng.permutation(len(corpus))]
    else:
        source_ids = list(sources)

    def run(sid: int) -> list[list[Sentence]]:
        return _walk(sid, corpus, index, params)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_source = list(pool.map(run, source_ids))
    else:
        per_source = [run(sid) for sid in source_ids]

    out: list[MorphSequence] = []
    seen: set[tuple] = set()
    for walks in per_source:
        for sentences in walks:
            seq = MorphSequence(sentences, provenance="mined")
            key = seq.key()
            if key in seen:
                continue
            seen.add(key)
            out.append(seq)
            if params.count is not None and len(out) >= params.count:
                return out
    return out


def retrieval_morph(source: Sentence, target: Sentence, index: LshIndex,
                    eps: float = 0.5) -> MorphSequence:
    """Greedy index-walk baseline toward the target.

    From the current sentence, move to the neighbour (Jaccard > eps) that
    maximizes similarity to the target, requiring strict improvement; stop
    once no neighbour improves or the current sentence is within eps of the
    target, then append the target.
    """
    path = [source]
    cur = source
    while jaccard(cur, target) <= eps:
        best = None
        best_sim = jaccard(cur, target)
        for idx, _sim in index.query(cur, eps):
            cand = index.sentences[idx]
            cand_sim = jaccard(cand, target)
            if cand_sim > best_sim:
                best, best_sim = cand, cand_sim
        if best is None:
            break
        path.append(best)
        cur = best
    if path[-1].tokens != target.tokens or len(path) == 1:
        path.append(target)
    return MorphSequence(path, provenance="baseline")


@dataclass
class TokenEmbeddings:
    """A vocabulary-aligned embedding table for sentence averaging."""

    vocab: Vocabulary
    vectors: np.ndarray  # (vocab.size, dim)

    def __post_init__(self):
        if self.vectors.shape[0] != self.vocab.size:
            raise DataError(
                f"embedding rows {self.vectors.shape[0]} != vocabulary size "
                f"{self.vocab.size}")

    def sentence_vector(self, sentence: Sentence) -> np.ndarray:
        ids = self.vocab.encode(sentence.tokens)
        return self.vectors[ids].mean(axis=0)


def interpolation_morph(source: Sentence, target: Sentence,
                        embeddings: TokenEmbeddings, index: LshIndex,
                        n_steps: int) -> MorphSequence:
    """Embedding-interpolation retrieval baseline.

    Sentence vectors are mean token embeddings.  For t = 1..n_steps-1 the
    convex combination (1 - t/N) * v_source + (t/N) * v_target is computed
    and the corpus sentence with maximum cosine similarity to it is
    emitted; consecutive duplicates are collapsed.
    """
    if n_steps < 1:
        raise DataError("n_steps must be >= 1")
    if not index.sentences:
        raise DataError("interpolation_morph requires an index with sentences")
    ids = sorted(index.sentences)
    corpus = [index.sentences[i] for i in ids]
    mat = np.stack([embeddings.sentence_vector(s) for s in corpus])
    norms = np.linalg.norm(mat, axis=1)
    norms[norms == 0.0] = 1.0
    unit = mat / norms[:, None]

    v_src = embeddings.sentence_vector(source)
    v_tgt = embeddings.sentence_vector(target)
    path = [source]
    for t in range(1, n_steps):
        frac = t / n_steps
        z = (1.0 - frac) * v_src + frac * v_tgt
        zn = np.linalg.norm(z)
        scores = unit @ (z / zn if zn > 0 else z)
        pick = corpus[int(np.argmax(scores))]
        if pick.tokens != path[-1].tokens:
            path.append(pick)
    if path[-1].tokens != target.tokens or len(path) == 1:
        path.append(target)
    return MorphSequence(path, provenance="baseline")


def split_sequences(sequences: Sequence[MorphSequence],
                    sizes: tuple[int, int, int],
                    seed: int = 0) -> tuple[list[MorphSequence], ...]:
    """Disjoint seeded random (train, valid, test) split."""
    n_train, n_valid, n_test = sizes
    total = n_train + n_valid + n_test
    if total > len(sequences):
        raise DataError(
            f"split sizes sum to {total} but only {len(sequences)} sequences "
            f"are available")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(sequences))
    picks = [sequences[i] for i in order[:total]]
    train = picks[:n_train]
    valid = picks[n_train:n_train + n_valid]
    test = picks[n_train + n_valid:total]
    return train, valid, test


# ---------------------------------------------------------------------------
# JSON Lines serialization


def sequence_to_json(seq: MorphSequence, seq_id: int) -> str:
    obj = {"id": seq_id,
           "sentences": [list(s.tokens) for s in seq.sentences],
           "provenance": seq.provenance}
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sequences_to_jsonl(sequences: Iterable[MorphSequence]) -> Iterable[str]:
    for i, seq in enumerate(sequences):
        yield sequence_to_json(seq, i) + "\n"


def sequence_from_json(line: str) -> MorphSequence:
    try:
        obj = json.loads(line)
        sentences = [Sentence(tuple(toks)) for toks in obj["sentences"]]
        return MorphSequence(sentences, provenance=obj.get("provenance", "mined"))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed sequence record: {exc}") from exc


def read_sequences_jsonl(path: str) -> list[MorphSequence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(sequence_from_json(line))
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out

"""MinHash signatures and banded LSH retrieval of similar sentences.

The sketch is a candidate generator only: every query result is verified
against exact Jaccard before being returned, so downstream mining never
depends on sketch error.  The hash family is P keyed 64-bit hashes of the
token string; keys are derived from the seed by a counter construction.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from morphkit import backend
from morphkit.errors import DataError
from morphkit.textcore import Sentence, jaccard

DEFAULT_NUM_PERMS = 50
DEFAULT_BANDS = 25
DEFAULT_ROWS = 2
DEFAULT_EPS = 0.5

_MAGIC = b"MKIX"
_VERSION = 1
_U64 = np.uint64
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class IndexParams:
    num_perms: int = DEFAULT_NUM_PERMS
    bands: int = DEFAULT_BANDS
    rows: int = DEFAULT_ROWS
    seed: int = 0
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.bands * self.rows != self.num_perms:
            raise DataError(
                f"bands*rows must equal num_perms "
                f"({self.bands}*{self.rows} != {self.num_perms})")
        if not 0.0 < self.eps < 1.0:
            raise DataError(f"eps must be in (0,1), got {self.eps}")


@dataclass
class MinHashSignature:
    """Fixed-length array of per-permutation hash minima."""

    values: np.ndarray  # uint64, shape (num_perms,)
    num_perms: int
    seed: int

    def compatible(self, other: "MinHashSignature") -> bool:
        return self.num_perms == other.num_perms and self.seed == other.seed


class Hasher:
    """Keyed token hashing bound to one seed, with a token-level cache."""

    def __init__(self, num_perms: int, seed: int):
        self.num_perms = num_perms
        self.seed = seed & _MASK64
        self._key = self.seed.to_bytes(8, "little")
        self.perm_keys = np.array(
            [self._derive(b"minhash-perm-" + p.to_bytes(8, "little"))
             for p in range(num_perms)],
            dtype=_U64)
        self._token_cache: dict[str, int] = {}

    def _derive(self, data: bytes) -> int:
        digest = hashlib.blake2b(data, digest_size=8, key=self._key).digest()
        return int.from_bytes(digest, "little")

    def token_hashes(self, sentence: Sentence) -> np.ndarray:
        cache = self._token_cache
        out = []
        for tok in sorted(sentence.token_set):
            h = cache.get(tok)
            if h is None:
                h = self._derive(tok.encode("utf-8"))
                cache[tok] = h
            out.append(h)
        return np.array(out, dtype=_U64)


def signature(sentence: Sentence, params: IndexParams,
              hasher: Hasher | None = None) -> MinHashSignature:
    """MinHash signature of a sentence's token set.

    Deterministic for fixed (token set, num_perms, seed); insensitive to
    token order and multiplicity.
    """
    if hasher is None:
        hasher = Hasher(params.num_perms, params.seed)
    mins = backend.minhash_mins(hasher.token_hashes(sentence), hasher.perm_keys)
    return MinHashSignature(values=mins, num_perms=params.num_perms,
                            seed=params.seed)


def estimate_similarity(a: MinHashSignature, b: MinHashSignature) -> float:
    """Fraction of matching components; unbiased estimate of exact Jaccard."""
    if not a.compatible(b):
        raise DataError("signatures have mismatched num_perms or seed")
    return float(np.mean(a.values == b.values))


class LshIndex:
    """Banded LSH over MinHash signatures with exact-Jaccard verification.

    Construction is single-writer; once built the index is read-only and
    safe for concurrent queries.  Sentences must be attached (inserted or
    via attach_corpus) before querying, since queries verify candidates
    with exact Jaccard.
    """

    def __init__(self, params: IndexParams):
        self.params = params
        self.hasher = Hasher(params.num_perms, params.seed)
        self.signatures: dict[int, np.ndarray] = {}
        self.sentences: dict[int, Sentence] = {}
        self._buckets: list[dict[bytes, list[int]]] = [
            {} for _ in range(params.bands)]

    def __len__(self) -> int:
        return len(self.signatures)

    def _band_keys(self, values: np.ndarray):
        r = self.params.rows
        for band in range(self.params.bands):
            yield band, values[band * r:(band + 1) * r].tobytes()

    def insert(self, idx: int, sentence: Sentence) -> None:
        if idx in self.signatures:
            raise DataError(f"duplicate id {idx} in index")
        sig = signature(sentence, self.params, self.hasher)
        self.signatures[idx] = sig.values
        self.sentences[idx] = sentence
        for band, key in self._band_keys(sig.values):
            self._buckets[band].setdefault(key, []).append(idx)

    def query(self, sentence: Sentence, eps: float | None = None) -> list[tuple[int, float]]:
        """All indexed (id, exact_jaccard) with exact Jaccard strictly > eps.

        Candidates come from band-bucket collisions and are verified with
        exact Jaccard, so precision is exact; the result is sorted by id.
        """
        if eps is None:
            eps = self.params.eps
        if len(self.sentences) != len(self.signatures):
            raise DataError("index has no attached sentences; cannot verify")
        sig = signature(sentence, self.params, self.hasher)
        candidates: set[int] = set()
        for band, key in self._band_keys(sig.values):
            candidates.update(self._buckets[band].get(key, ()))
        out = []
        for idx in sorted(candidates):
            sim = jaccard(sentence, self.sentences[idx])
            if sim > eps:
                out.append((idx, sim))
        return out

    def save(self, path: str) -> None:
        """Versioned little-endian binary container, id-sorted records."""
        header = struct.pack(
            "<4sIIIIQdQ", _MAGIC, _VERSION, self.params.num_perms,
            self.params.bands, self.params.rows, self.params.seed & _MASK64,
            self.params.eps, len(self.signatures))
        with open(path, "wb") as fh:
            fh.write(header)
            for idx in sorted(self.signatures):
                fh.write(struct.pack("<Q", idx))
                fh.write(self.signatures[idx].astype("<u8").tobytes())

    @classmethod
    def load(cls, path: str) -> "LshIndex":
        """Rebuild buckets from persisted signatures (sentences not included)."""
        with open(path, "rb") as fh:
            raw = fh.read()
        head_size = struct.calcsize("<4sIIIIQdQ")
        if len(raw) < head_size:
            raise DataError(f"{path}: truncated index file")
        magic, version, perms, bands, rows, seed, eps, count = struct.unpack(
            "<4sIIIIQdQ", raw[:head_size])
        if magic != _MAGIC:
            raise DataError(f"{path}: not a morphkit index file")
        if version != _VERSION:
            raise DataError(f"{path}: unsupported index version {version}")
        index = cls(IndexParams(num_perms=perms, bands=bands, rows=rows,
                                seed=seed, eps=eps))
        rec_size = 8 + 8 * perms
        expected = head_size + rec_size * count
        if len(raw) != expected:
            raise DataError(f"{path}: corrupt index file "
                            f"(expected {expected} bytes, got {len(raw)})")
        offset = head_size
        for _ in range(count):
            idx = struct.unpack_from("<Q", raw, offset)[0]
            values = np.frombuffer(
                raw, dtype="<u8", count=perms, offset=offset + 8).astype(_U64)
            if idx in index.signatures:
                raise DataError(f"{path}: duplicate id {idx}")
            index.signatures[idx] = values
            for band, key in index._band_keys(values):
                index._buckets[band].setdefault(key, []).append(idx)
            offset += rec_size
        return index

    def attach_corpus(self, sentences: list[Sentence],
                      spot_checks: int = 16) -> None:
        """Bind the corpus the index was built over (ids = positions).

        Verifies the sentence count and recomputes a deterministic sample
        of signatures; a mismatch raises DataError.
        """
        if len(sentences) != len(self.signatures):
            raise DataError(
                f"corpus/index mismatch: {len(sentences)} sentences vs "
                f"{len(self.signatures)} indexed ids")
        n = len(sentences)
        if n:
            step = max(1, n // max(1, spot_checks))
            for idx in range(0, n, step):
                if idx not in self.signatures:
                    raise DataError(f"corpus/index mismatch: id {idx} missing")
                sig = signature(sentences[idx], self.params, self.hasher)
                if not np.array_equal(sig.values, self.signatures[idx]):
                    raise DataError(
                        f"corpus/index mismatch: signature of sentence {idx} "
                        f"does not match the index")
        self.sentences = dict(enumerate(sentences))


def build_index(sentences: list[Sentence], params: IndexParams) -> LshIndex:
    """Index a corpus with ids equal to corpus positions."""
    index = LshIndex(params)
    for idx, sent in enumerate(sentences):
        index.insert(idx, sent)
    return index

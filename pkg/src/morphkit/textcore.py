"""Tokenization, normalization, vocabulary and exact Jaccard similarity.

Everything in this module is deterministic and purely functional; the
Vocabulary is built once and then shared read-only.
"""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

from morphkit.errors import DataError

UNK_ID, BOS_ID, EOS_ID, PAD_ID = 0, 1, 2, 3
UNK_TOKEN, BOS_TOKEN, EOS_TOKEN, PAD_TOKEN = "<unk>", "<bos>", "<eos>", "<pad>"
SPECIAL_TOKENS = (UNK_TOKEN, BOS_TOKEN, EOS_TOKEN, PAD_TOKEN)

NUM_TOKEN = "<num>"
ENT_TOKEN = "<ent>"

# Detached as single-character tokens.
_PUNCT_RE = re.compile(r"([.,!?;:'\"()])")
# Two or more capitalized words in a row (checked on the raw text).
_ENT_RE = re.compile(r"[A-Z][A-Za-z]*(?:\s+[A-Z][A-Za-z]*)+")
_NUM_RE = re.compile(r"[0-9]+")


@dataclass(frozen=True)
class Sentence:
    """An ordered token sequence with its cached token set."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.tokens:
            raise DataError("empty sentence")
        object.__setattr__(self, "_token_set", frozenset(self.tokens))

    @property
    def token_set(self) -> frozenset[str]:
        return self._token_set

    def text(self) -> str:
        return " ".join(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_tokens(cls, tokens: Sequence[str]) -> "Sentence":
        return cls(tuple(tokens))


def normalize(raw: str, lowercase: bool = True, placeholders: bool = True) -> Sentence:
    """Normalize a raw text line into a Sentence.

    Whitespace tokenization with punctuation detached as single-character
    tokens.  With `placeholders` on, digit runs become the `<num>` token and
    capitalized multi-word runs in the raw text become `<ent>` (a crude
    stand-in for entity tagging).  Empty or whitespace-only input raises
    DataError("empty sentence").
    """
    if not raw or not raw.strip():
        raise DataError("empty sentence")
    text = raw
    if placeholders:
        text = _ENT_RE.sub(ENT_TOKEN, text)
        text = _NUM_RE.sub(f" {NUM_TOKEN} ", text)
    if lowercase:
        text = text.lower()
    text = _PUNCT_RE.sub(r" \1 ", text)
    tokens = text.split()
    if not tokens:
        raise DataError("empty sentence")
    return Sentence(tuple(tokens))


def jaccard(a: Sentence, b: Sentence) -> float:
    """Exact Jaccard similarity |A n B| / |A u B| over token sets."""
    sa, sb = a.token_set, b.token_set
    inter = len(sa & sb)
    if inter == 0:
        return 0.0
    return inter / (len(sa) + len(sb) - inter)


def jaccard_distance(a: Sentence, b: Sentence) -> float:
    return 1.0 - jaccard(a, b)


@dataclass
class Vocabulary:
    """Bijective token<->id map with reserved special ids 0..3.

    itos[0..3] are the UNK/BOS/EOS/PAD specials; the remaining entries are
    corpus tokens in retention order (frequency desc, ties lexicographic).
    """

    itos: list[str]
    counts: list[int]  # corpus frequency per itos entry (0 for specials)
    max_size: int
    stoi: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise DataError("vocabulary contains duplicate tokens")

    @property
    def size(self) -> int:
        return len(self.itos)

    def token_to_id(self, token: str) -> int:
        return self.stoi.get(token, UNK_ID)

    def id_to_token(self, idx: int) -> str:
        return self.itos[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        get = self.stoi.get
        return [get(t, UNK_ID) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]

    def __contains__(self, token: str) -> bool:
        return token in self.stoi


def build_vocab(corpus: Iterable[Sentence], max_size: int = 30000) -> Vocabulary:
    """Count tokens over the corpus and retain the max_size most frequent.

    Ties are broken lexicographically.  Tokens equal to a special are not
    duplicated.  Raises DataError on an empty corpus.
    """
    counter: Counter[str] = Counter()
    seen = False
    for sent in corpus:
        seen = True
        counter.update(sent.tokens)
    if not seen:
        raise DataError("empty corpus")
    for special in SPECIAL_TOKENS:
        counter.pop(special, None)
    ranked = sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    itos = list(SPECIAL_TOKENS) + [tok for tok, _ in ranked]
    counts = [0] * len(SPECIAL_TOKENS) + [cnt for _, cnt in ranked]
    return Vocabulary(itos=itos, counts=counts, max_size=max_size)


def save_vocab(vocab: Vocabulary, path: str) -> None:
    """Write `token<TAB>count` lines in retention-rank order (no specials)."""
    with open(path, "w", encoding="utf-8") as fh:
        for tok, cnt in zip(vocab.itos[len(SPECIAL_TOKENS):],
                            vocab.counts[len(SPECIAL_TOKENS):]):
            fh.write(f"{tok}\t{cnt}\n")


def load_vocab(path: str, max_size: int | None = None) -> Vocabulary:
    itos = list(SPECIAL_TOKENS)
    counts = [0] * len(SPECIAL_TOKENS)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                tok, cnt = line.split("\t")
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed vocabulary line") from exc
            itos.append(tok)
            counts.append(int(cnt))
    n_tokens = len(itos) - len(SPECIAL_TOKENS)
    return Vocabulary(itos=itos, counts=counts,
                      max_size=n_tokens if max_size is None else max_size)


def normalize_corpus(lines: Iterable[str], lowercase: bool = True,
                     placeholders: bool = True) -> tuple[list[Sentence], int]:
    """Normalize raw lines, skipping empty ones; returns (sentences, n_skipped)."""
    out: list[Sentence] = []
    skipped = 0
    for line in lines:
        try:
            out.append(normalize(line, lowercase=lowercase, placeholders=placeholders))
        except DataError:
            skipped += 1
    return out, skipped


def read_normalized_corpus(path: str) -> list[Sentence]:
    """Read a one-sentence-per-line, space-tokenized corpus file."""
    sentences: list[Sentence] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tokens = line.split()
            if tokens:
                sentences.append(Sentence(tuple(tokens)))
    if not sentences:
        raise DataError(f"{path}: empty corpus")
    return sentences


def write_sentences(sentences: Iterable[Sentence]) -> Iterator[str]:
    for sent in sentences:
        yield sent.text() + "\n"

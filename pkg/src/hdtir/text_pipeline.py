"""Word bank and binary word-indicator design from a corpus of posts."""

from __future__ import annotations

import csv
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DataError
from .tail_data import Dataset, write_triplets


@dataclass(frozen=True)
class Post:
    id: str
    text: str
    likes: int


@dataclass(frozen=True)
class Corpus:
    posts: tuple

    def __post_init__(self):
        posts = tuple(p if isinstance(p, Post) else Post(*p) for p in self.posts)
        object.__setattr__(self, "posts", posts)
        seen = set()
        for i, p in enumerate(posts):
            if p.id in seen:
                raise DataError(f"duplicate post id {p.id!r} at position {i}")
            seen.add(p.id)
            if p.likes < 0:
                raise DataError(f"post {p.id!r} has negative likes")

    def __len__(self):
        return len(self.posts)


def tokenize(text: str) -> list[str]:
    """Case-fold and split on whitespace; punctuation inside tokens is kept."""
    return text.casefold().split()


@dataclass
class WordBank:
    """word -> (count, doc_count)."""

    entries: dict = field(default_factory=dict)

    def count(self, word: str) -> int:
        return self.entries.get(word, (0, 0))[0]

    def doc_count(self, word: str) -> int:
        return self.entries.get(word, (0, 0))[1]

    def __len__(self):
        return len(self.entries)

    def ranked(self, key: str = "doc_count") -> list[str]:
        return rank_words(self.entries, key)


def rank_words(entries: dict, key: str = "doc_count") -> list[str]:
    """Order by the chosen frequency (descending), the other one, then the word."""
    if key == "doc_count":
        sort_key = lambda w: (-entries[w][1], -entries[w][0], w)  # noqa: E731
    elif key == "count":
        sort_key = lambda w: (-entries[w][0], -entries[w][1], w)  # noqa: E731
    else:
        raise ConfigError("ranking key must be 'doc_count' or 'count'")
    return sorted(entries, key=sort_key)


def _count_shard(texts: Sequence[str]) -> tuple[Counter, Counter]:
    count, docs = Counter(), Counter()
    for text in texts:
        toks = tokenize(text)
        count.update(toks)
        docs.update(set(toks))
    return count, docs


def build_word_bank(corpus: Corpus, workers: int = 1) -> WordBank:
    """Total and per-post occurrence counts. Shards merge by summation, so the
    result does not depend on ``workers``."""
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    texts = [p.text for p in corpus.posts]
    if workers == 1 or len(texts) < 2:
        parts = [_count_shard(texts)]
    else:
        shards = [texts[w::workers] for w in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_count_shard, shards))
    count, docs = Counter(), Counter()
    for c, d in parts:
        count.update(c)
        docs.update(d)
    return WordBank({w: (count[w], docs[w]) for w in sorted(count)})


@dataclass(frozen=True)
class FeatureSpec:
    vocabulary: tuple
    stopwords: frozenset = frozenset()

    def __post_init__(self):
        vocab = tuple(self.vocabulary)
        object.__setattr__(self, "vocabulary", vocab)
        object.__setattr__(self, "stopwords", frozenset(self.stopwords))
        if len(set(vocab)) != len(vocab):
            raise ConfigError("vocabulary has duplicate words")
        if set(vocab) & self.stopwords:
            raise ConfigError("vocabulary contains stopwords")

    @property
    def p(self) -> int:
        return len(self.vocabulary)


def select_vocabulary(bank: WordBank, p: int, stopwords: Iterable[str] = (),
                      key: str = "doc_count") -> FeatureSpec:
    """The ``p`` highest-ranked words that are not stopwords."""
    if p < 1:
        raise ConfigError("p must be >= 1")
    stop = frozenset(w.casefold() for w in stopwords)
    kept = {w: v for w, v in bank.entries.items() if w not in stop}
    return FeatureSpec(tuple(rank_words(kept, key)[:p]), stop)


def build_design(corpus: Corpus, spec: FeatureSpec) -> Dataset:
    """Sparse 0/1 matrix of post-contains-word indicators, with likes as y."""
    if spec.p == 0:
        raise ConfigError("empty vocabulary")
    col = {w: j for j, w in enumerate(spec.vocabulary)}
    rows, cols = [], []
    for i, post in enumerate(corpus.posts):
        hits = sorted({col[t] for t in tokenize(post.text) if t in col})
        rows.extend([i] * len(hits))
        cols.extend(hits)
    x = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(corpus), spec.p))
    y = np.array([p.likes for p in corpus.posts], dtype=float)
    return Dataset(y, x, spec.vocabulary)


def read_stopwords(path=None) -> frozenset:
    """One word per line; blank lines and '#' comments ignored. None loads the
    bundled default (articles, forms of 'be', common prepositions)."""
    if path is None:
        text = resources.files("hdtir").joinpath("data/stopwords.txt").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    words = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            words.add(line.casefold())
    return frozenset(words)


def read_corpus(path) -> Corpus:
    """CSV with header id,text,likes. Errors name the offending line number."""
    posts, seen = [], set()
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        try:
            i_id, i_text, i_likes = (header.index(c) for c in ("id", "text", "likes"))
        except ValueError:
            raise DataError(f"{path}: header must contain id, text, likes") from None
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}, line {line}: expected {len(header)} fields, got {len(row)}")
            try:
                likes = int(row[i_likes])
            except ValueError:
                raise DataError(f"{path}, line {line}: likes {row[i_likes]!r} is not an integer") from None
            if likes < 0:
                raise DataError(f"{path}, line {line}: negative likes")
            if row[i_id] in seen:
                raise DataError(f"{path}, line {line}: duplicate id {row[i_id]!r}")
            seen.add(row[i_id])
            posts.append(Post(row[i_id], row[i_text], likes))
    if not posts:
        raise DataError(f"{path}: corpus has no posts")
    return Corpus(tuple(posts))


def write_word_bank(bank: WordBank, path, key: str = "doc_count") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["word", "count", "doc_count"])
        for word in bank.ranked(key):
            c, d = bank.entries[word]
            w.writerow([word, c, d])


def write_vocabulary(spec: FeatureSpec, path) -> None:
    Path(path).write_text("".join(w + "\n" for w in spec.vocabulary), encoding="utf-8")


def write_response(y, path, column: str = "likes") -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([column])
        for v in np.asarray(y, dtype=float):
            w.writerow([int(v) if float(v).is_integer() else repr(float(v))])


def export_design(data: Dataset, out_dir, stem: str = "design") -> dict:
    """Triplets, vocabulary sidecar and response column, ready for inference."""
    out = Path(out_dir)
    paths = {"triplets": out / f"{stem}_triplets.csv",
             "vocabulary": out / f"{stem}_vocabulary.txt",
             "response": out / f"{stem}_response.csv"}
    write_triplets(data.x, paths["triplets"])
    write_vocabulary(FeatureSpec(data.feature_names), paths["vocabulary"])
    write_response(data.y, paths["response"])
    return paths


def text_prep(corpus: Corpus, p: int, stopwords: Optional[Iterable[str]] = None,
              key: str = "doc_count", workers: int = 1) -> tuple[WordBank, FeatureSpec, Dataset]:
    bank = build_word_bank(corpus, workers)
    spec = select_vocabulary(bank, p, read_stopwords() if stopwords is None else stopwords, key)
    return bank, spec, build_design(corpus, spec)

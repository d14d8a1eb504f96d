"""Trainable byte-pair subword vocabulary.

Training starts from single characters and repeatedly merges the most
frequent adjacent pair (ties broken lexicographically so training is
deterministic). Frequent in-corpus words collapse to one piece; unseen
words decompose into characters and learned fragments, and characters
never seen in training map to the unknown piece. Encoding a sentence
keeps a subword-to-word alignment so word-level predictions can be read
off the first subword of each word.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1


class SubwordError(ValueError):
    """Raised for unusable vocabularies or inputs."""


@dataclass(frozen=True)
class Encoding:
    """Subword ids plus the alignment back to source words."""

    ids: tuple[int, ...]
    word_ids: tuple[int, ...]        # source word index per subword
    first_subword: tuple[bool, ...]  # True where a new word starts


class SubwordVocab:
    def __init__(self, pieces: Sequence[str],
                 merges: Sequence[tuple[str, str]]):
        if list(pieces[:2]) != [PAD, UNK]:
            raise SubwordError("pieces must start with <pad>, <unk>")
        self.pieces = tuple(pieces)
        self.merges = tuple((a, b) for a, b in merges)
        self.piece_index = {p: i for i, p in enumerate(self.pieces)}
        if len(self.piece_index) != len(self.pieces):
            raise SubwordError("duplicate pieces in vocabulary")
        self._cache: dict[str, tuple[int, ...]] = {}

    def __len__(self) -> int:
        return len(self.pieces)

    @classmethod
    def train(cls, words: Iterable[str], merges: int = 256) -> "SubwordVocab":
        counts = Counter(w for w in words if w)
        if not counts:
            raise SubwordError("cannot train a vocabulary on an empty corpus")
        seqs: dict[str, list[str]] = {w: list(w) for w in counts}
        learned: list[tuple[str, str]] = []
        for _ in range(merges):
            pair_counts: Counter = Counter()
            for word, seq in seqs.items():
                weight = counts[word]
                for a, b in zip(seq, seq[1:]):
                    pair_counts[(a, b)] += weight
            if not pair_counts:
                break
            top = max(pair_counts.values())
            best = min(p for p, c in pair_counts.items() if c == top)
            learned.append(best)
            a, b = best
            merged = a + b
            for word, seq in seqs.items():
                if merged not in word:
                    continue
                seqs[word] = _apply_merge(seq, a, b)
        chars = sorted({c for w in counts for c in w})
        pieces = [PAD, UNK] + chars
        seen = set(pieces)
        for a, b in learned:
            piece = a + b
            if piece not in seen:
                pieces.append(piece)
                seen.add(piece)
        return cls(pieces, learned)

    def encode_word(self, word: str) -> tuple[int, ...]:
        if not word:
            raise SubwordError("cannot encode an empty word")
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        seq = list(word)
        for a, b in self.merges:
            if a + b in word:
                seq = _apply_merge(seq, a, b)
        ids = tuple(self.piece_index.get(p, UNK_ID) for p in seq)
        self._cache[word] = ids
        return ids

    def encode_chars(self, word: str) -> tuple[int, ...]:
        """Character-level fallback segmentation of one word."""
        if not word:
            raise SubwordError("cannot encode an empty word")
        return tuple(self.piece_index.get(c, UNK_ID) for c in word)

    def encode_words(self, words: Sequence[str],
                     char_rng=None, char_prob: float = 0.0) -> Encoding:
        """Encode a sentence; with `char_rng` set, each word falls back
        to its character segmentation with probability `char_prob`
        (subword dropout, train-time only)."""
        if not words:
            raise SubwordError("cannot encode an empty word list")
        ids: list[int] = []
        word_ids: list[int] = []
        first: list[bool] = []
        for w_idx, word in enumerate(words):
            if char_rng is not None and char_rng.random() < char_prob:
                pieces = self.encode_chars(word)
            else:
                pieces = self.encode_word(word)
            ids.extend(pieces)
            word_ids.extend([w_idx] * len(pieces))
            first.extend([True] + [False] * (len(pieces) - 1))
        return Encoding(tuple(ids), tuple(word_ids), tuple(first))

    def to_dict(self) -> dict:
        return {"pieces": list(self.pieces),
                "merges": [list(m) for m in self.merges]}

    @classmethod
    def from_dict(cls, obj: dict) -> "SubwordVocab":
        try:
            return cls(obj["pieces"], [tuple(m) for m in obj["merges"]])
        except (KeyError, TypeError) as exc:
            raise SubwordError(f"malformed vocabulary object: {exc}") from exc


def _apply_merge(seq: list[str], a: str, b: str) -> list[str]:
    out: list[str] = []
    i = 0
    while i < len(seq):
        if i + 1 < len(seq) and seq[i] == a and seq[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return out

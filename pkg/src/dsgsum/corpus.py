"""Corpus ingestion, vocabulary and [CLS]/[SEP]-framed input sequences."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

PAD, UNK, BOS, EOS, CLS, SEP = "[PAD]", "[UNK]", "[BOS]", "[EOS]", "[CLS]", "[SEP]"
RESERVED = (PAD, UNK, BOS, EOS, CLS, SEP)
PAD_ID, UNK_ID, BOS_ID, EOS_ID, CLS_ID, SEP_ID = range(6)


class CorpusError(ValueError):
    """Malformed corpus input; ``line`` is 1-based when known."""

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)
        self.path = path
        self.line = line


def tokenize(text: str) -> list[str]:
    return text.split()


@dataclass
class RawPair:
    id: str
    document: list[str]
    summary: list[str]
    entities: list[dict] | None = None
    corefs: list[list[int]] | None = None

    def doc_tokens(self) -> list[list[str]]:
        return [tokenize(s) for s in self.document]

    def summary_tokens(self) -> list[str]:
        return [t for s in self.summary for t in tokenize(s)]

    def to_json(self) -> dict:
        rec = {"id": self.id, "document": list(self.document), "summary": list(self.summary)}
        if self.entities is not None:
            rec["entities"] = self.entities
        if self.corefs is not None:
            rec["corefs"] = self.corefs
        return rec


def _parse_record(rec, path, lineno) -> RawPair:
    if not isinstance(rec, dict):
        raise CorpusError("record is not a JSON object", path, lineno)
    pid = rec.get("id")
    if not isinstance(pid, str) or not pid:
        raise CorpusError("missing or empty 'id'", path, lineno)
    doc, summ = rec.get("document"), rec.get("summary", [])
    if not isinstance(doc, list) or not doc or not all(isinstance(s, str) for s in doc):
        raise CorpusError(f"record {pid!r}: 'document' must be a nonempty list of strings", path, lineno)
    if not isinstance(summ, list) or not all(isinstance(s, str) for s in summ):
        raise CorpusError(f"record {pid!r}: 'summary' must be a list of strings", path, lineno)
    ents = rec.get("entities")
    if ents is not None:
        if not isinstance(ents, list) or not all(
                isinstance(e, dict) and {"sent", "start", "end"} <= e.keys() for e in ents):
            raise CorpusError(f"record {pid!r}: bad 'entities'", path, lineno)
    cors = rec.get("corefs")
    if cors is not None and (not isinstance(cors, list)
                             or not all(isinstance(c, list) for c in cors)):
        raise CorpusError(f"record {pid!r}: bad 'corefs'", path, lineno)
    return RawPair(pid, list(doc), list(summ), ents, cors)


def load_corpus(path, split: str = "train") -> list[RawPair]:
    """Read a JSONL corpus; ``split`` is recorded for messages only."""
    if split not in ("train", "valid", "test"):
        raise ValueError(f"unknown split {split!r}")
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"{split} corpus not found", path)
    pairs: list[RawPair] = []
    seen: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"malformed JSON ({exc.msg})", path, lineno) from None
            pair = _parse_record(rec, path, lineno)
            if pair.id in seen:
                raise CorpusError(f"duplicate id {pair.id!r} (first on line {seen[pair.id]})",
                                  path, lineno)
            seen[pair.id] = lineno
            pairs.append(pair)
    return pairs


def write_corpus(path, pairs: Iterable[RawPair]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_json(), ensure_ascii=False) + "\n")


@dataclass
class Vocab:
    itos: list[str]
    stoi: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if tuple(self.itos[:6]) != RESERVED:
            raise ValueError("vocab must start with the six reserved tokens")
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("vocab tokens must be unique")

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, tok: str) -> bool:
        return tok.lower() in self.stoi

    def id(self, tok: str) -> int:
        if tok in RESERVED:
            return self.stoi[tok]
        return self.stoi.get(tok.lower(), UNK_ID)

    def ids(self, toks: Sequence[str]) -> list[int]:
        return [self.id(t) for t in toks]

    def decode(self, ids: Iterable[int], strip_markers: bool = True) -> list[str]:
        out = []
        for i in ids:
            tok = self.itos[int(i)]
            if strip_markers and tok in (PAD, BOS, EOS, CLS, SEP):
                continue
            out.append(tok)
        return out

    def to_json(self) -> list[str]:
        return list(self.itos)

    @classmethod
    def from_json(cls, tokens: list[str]) -> "Vocab":
        return cls(list(tokens))


def build_vocab(pairs: Sequence[RawPair], min_count: int = 1) -> Vocab:
    """Lowercased vocabulary over documents and summaries.

    Ids after the reserved block follow (count desc, token asc).
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    if not pairs:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    for p in pairs:
        for sent in list(p.document) + list(p.summary):
            counts.update(t.lower() for t in tokenize(sent))
    for r in RESERVED:
        counts.pop(r.lower(), None)
    kept = sorted((t for t, c in counts.items() if c >= min_count),
                  key=lambda t: (-counts[t], t))
    return Vocab(list(RESERVED) + [t for t in kept if t not in RESERVED])


@dataclass
class EncodedDoc:
    token_ids: list[int]
    segment_ids: list[int]
    positions: list[int]
    sentence_bounds: list[tuple[int, int]]
    # sentences kept after truncation; graph spans index into these
    n_sentences: int = 0

    def __len__(self) -> int:
        return len(self.token_ids)


def frame_sentences(sentences: Sequence[Sequence[str]], max_src_len: int) -> list[list[str]]:
    """Sentences that fit in ``max_src_len`` once framed by [CLS]/[SEP].

    Trailing sentences that would overflow are dropped whole; only an
    over-long first sentence is cut, keeping room for its [SEP].
    """
    if max_src_len < 3:
        raise ValueError("max_src_len must be >= 3")
    kept: list[list[str]] = []
    used = 0
    for toks in sentences:
        need = len(toks) + 2
        if used + need > max_src_len:
            if not kept:
                kept.append(list(toks[: max_src_len - 2]))
            break
        kept.append(list(toks))
        used += need
    return kept


def encode_sentences(sentences: Sequence[Sequence[str]], vocab: Vocab,
                     max_src_len: int) -> EncodedDoc:
    kept = frame_sentences(sentences, max_src_len)
    ids: list[int] = []
    segs: list[int] = []
    bounds: list[tuple[int, int]] = []
    for k, toks in enumerate(kept):
        start = len(ids)
        ids.extend([CLS_ID] + vocab.ids(toks) + [SEP_ID])
        segs.extend([k % 2] * (len(ids) - start))
        bounds.append((start, len(ids) - 1))
    if not ids:
        ids, segs, bounds = [CLS_ID, SEP_ID], [0, 0], [(0, 1)]
    return EncodedDoc(ids, segs, list(range(len(ids))), bounds, n_sentences=len(kept))


def encode_document(pair: RawPair, vocab: Vocab, max_src_len: int = 512) -> EncodedDoc:
    """Frame each sentence as [CLS] ... [SEP]; drop trailing sentences that overflow."""
    return encode_sentences(pair.doc_tokens(), vocab, max_src_len)


def encode_summary(pair: RawPair, vocab: Vocab, max_tgt_len: int = 64) -> list[int]:
    """[BOS] + first ``max_tgt_len`` summary tokens + [EOS]."""
    return [BOS_ID] + vocab.ids(pair.summary_tokens()[:max_tgt_len]) + [EOS_ID]

"""Versioned knowledge base with budgeted, provenance-tagged retrieval.

A release is a directory of text documents plus a manifest that pins
the release version and a content hash per document. Loading verifies
the hashes, so a silently edited document is detected instead of
quietly changing answers. Queries are scored with TF-IDF; an optional
vector hook can blend in a second score, and ships disabled.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

MANIFEST_NAME = "manifest.json"
DEFAULT_BUDGET_TOKENS = 512
TOKENS_PER_WORD = 1.3
DEFAULT_RELEASE = "release_2025.1"


def default_release_root() -> Path:
    """The knowledge release shipped inside the package."""
    from importlib import resources
    base = resources.files("xtalflow") / "data" / "knowledge" / DEFAULT_RELEASE
    return Path(str(base))

# Paths split on "/" so each component is searchable on its own.
_WORD = re.compile(r"[a-z0-9_.-]+")


class ReleaseError(ValueError):
    """Manifest missing, malformed, or hashes out of agreement."""


@dataclass(frozen=True)
class Chunk:
    chunk_id: str
    source_id: str
    url: str
    text: str
    tokens: int


@dataclass(frozen=True)
class ScoredChunk:
    chunk: Chunk
    score: float


@dataclass
class RetrievalResult:
    query: str
    release_version: str
    timestamp: str
    budget: int
    budget_used: int
    chunks: list[ScoredChunk] = field(default_factory=list)

    def provenance(self) -> list[dict]:
        """One record per selected chunk, carrying the four fields an
        answer must cite."""
        return [{
            "release_version": self.release_version,
            "source_id": sc.chunk.source_id,
            "url": sc.chunk.url,
            "timestamp": self.timestamp,
        } for sc in self.chunks]

    def to_payload(self) -> dict:
        return {
            "query": self.query,
            "release_version": self.release_version,
            "timestamp": self.timestamp,
            "budget": self.budget,
            "budget_used": self.budget_used,
            "chunks": [{
                "chunk_id": sc.chunk.chunk_id,
                "source_id": sc.chunk.source_id,
                "url": sc.chunk.url,
                "score": round(sc.score, 6),
                "tokens": sc.chunk.tokens,
            } for sc in self.chunks],
        }


def token_estimate(text: str) -> int:
    words = len(text.split())
    return math.ceil(words * TOKENS_PER_WORD)


def split_paragraphs(text: str) -> list[str]:
    """Blank-line separated paragraphs; a bare heading merges into the
    paragraph below it so it never forms a three-word chunk of its own."""
    parts = [p.strip() for p in re.split(r"\n\s*\n", text) if p.strip()]
    merged: list[str] = []
    pending = ""
    for part in parts:
        if all(line.lstrip().startswith("#") for line in part.splitlines()):
            pending = f"{pending}\n{part}".strip()
            continue
        merged.append(f"{pending}\n{part}".strip() if pending else part)
        pending = ""
    if pending:
        merged.append(pending)
    return merged


def _terms(text: str) -> list[str]:
    return _WORD.findall(text.lower())


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def build_manifest(root: Path, release_version: str, created_at: str,
                   sources: dict[str, dict] | None = None) -> dict:
    """Hash every document under `root` and write the manifest.

    `sources` may map a filename to {"source_id":..., "url":...};
    unlisted files get defaults derived from the filename.
    """
    root = Path(root)
    sources = sources or {}
    documents = []
    for path in sorted(root.iterdir()):
        if not path.is_file() or path.name == MANIFEST_NAME:
            continue
        meta = sources.get(path.name, {})
        documents.append({
            "file": path.name,
            "source_id": meta.get("source_id", path.stem),
            "url": meta.get("url", f"kb://{release_version}/{path.name}"),
            "sha256": _sha256_file(path),
        })
    if not documents:
        raise ReleaseError(f"no documents under {root}")
    manifest = {
        "release_version": release_version,
        "created_at": created_at,
        "documents": documents,
    }
    (root / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return manifest


class KnowledgeRelease:
    """An immutable, queryable snapshot of the reference documents."""

    def __init__(self, version: str, timestamp: str, chunks: list[Chunk]):
        self.version = version
        self.timestamp = timestamp
        self.chunks = chunks
        self._index()

    @classmethod
    def load(cls, root: Path, verify: bool = True) -> "KnowledgeRelease":
        root = Path(root)
        manifest_path = root / MANIFEST_NAME
        if not manifest_path.is_file():
            raise ReleaseError(f"no {MANIFEST_NAME} under {root}")
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ReleaseError(f"manifest does not parse: {exc}") from None
        for key in ("release_version", "created_at", "documents"):
            if key not in manifest:
                raise ReleaseError(f"manifest lacks {key!r}")
        chunks: list[Chunk] = []
        for doc in manifest["documents"]:
            path = root / doc["file"]
            if not path.is_file():
                raise ReleaseError(f"listed document missing: {doc['file']}")
            if verify and _sha256_file(path) != doc["sha256"]:
                raise ReleaseError(
                    f"document {doc['file']} does not match its manifest "
                    f"hash; the release has been modified")
            text = path.read_text(encoding="utf-8")
            for i, para in enumerate(split_paragraphs(text)):
                chunks.append(Chunk(
                    chunk_id=f"{doc['source_id']}#{i:03d}",
                    source_id=doc["source_id"],
                    url=doc["url"],
                    text=para,
                    tokens=token_estimate(para)))
        return cls(manifest["release_version"], manifest["created_at"],
                   chunks)

    def _index(self) -> None:
        self._freqs: list[dict[str, float]] = []
        df: dict[str, int] = {}
        for chunk in self.chunks:
            terms = _terms(chunk.text)
            counts: dict[str, float] = {}
            for t in terms:
                counts[t] = counts.get(t, 0.0) + 1.0
            total = max(len(terms), 1)
            self._freqs.append({t: c / total for t, c in counts.items()})
            for t in counts:
                df[t] = df.get(t, 0) + 1
        # No +1 floor: a term present in every chunk carries no signal,
        # which keeps stopwords from outranking the subject terms.
        n = max(len(self.chunks), 1)
        self._idf = {t: math.log((1 + n) / (1 + d)) for t, d in df.items()}

    def _tfidf_score(self, i: int, query_terms: list[str]) -> float:
        freqs = self._freqs[i]
        return sum(freqs.get(t, 0.0) * self._idf.get(t, 0.0)
                   for t in query_terms)

    def query(self, text: str, budget: int = DEFAULT_BUDGET_TOKENS,
              top_k: int = 8, vector_hook=None,
              vector_weight: float = 0.0) -> RetrievalResult:
        """Rank chunks and take the best until the token budget or
        `top_k` is reached. Selection stops at the first chunk that no
        longer fits, so a larger budget extends, never reshuffles, a
        smaller budget's selection."""
        query_terms = _terms(text)
        scored: list[ScoredChunk] = []
        for i, chunk in enumerate(self.chunks):
            score = self._tfidf_score(i, query_terms)
            if vector_hook is not None and vector_weight != 0.0:
                score += vector_weight * float(vector_hook(chunk, text))
            if score > 0.0:
                scored.append(ScoredChunk(chunk, score))
        scored.sort(key=lambda sc: (-sc.score, sc.chunk.chunk_id))
        selected: list[ScoredChunk] = []
        used = 0
        for sc in scored:
            if len(selected) >= top_k or used + sc.chunk.tokens > budget:
                break
            selected.append(sc)
            used += sc.chunk.tokens
        return RetrievalResult(
            query=text, release_version=self.version,
            timestamp=self.timestamp, budget=budget, budget_used=used,
            chunks=selected)

"""Brute-force ranking and retrieval metrics (mAP, UKB 4 x recall@4)."""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

ROLES = ("query", "target", "both")


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    role: str


def read_manifest(path) -> list[ManifestEntry]:
    """``path<TAB>label<TAB>role`` per line; role is query, target or both."""
    entries = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        p, label, role = parts
        if role not in ROLES:
            raise ValueError(f"{path}:{lineno}: role must be one of {ROLES}, got {role!r}")
        entries.append(ManifestEntry(p, label, role))
    return entries


def write_manifest(path, entries: Sequence[ManifestEntry]) -> None:
    text = "".join(f"{e.path}\t{e.label}\t{e.role}\n" for e in entries)
    Path(path).write_text(text, encoding="utf-8")


def rank(query, database, ids: Optional[Sequence] = None) -> list:
    """Database ids by ascending Euclidean distance; ties go to the smaller id."""
    q = np.asarray(query, dtype=np.float64)
    D = np.asarray(database, dtype=np.float64)
    if D.ndim != 2 or q.shape != (D.shape[1],):
        raise ValueError(f"query of shape {q.shape} does not match database of shape {D.shape}")
    ids = list(range(D.shape[0])) if ids is None else list(ids)
    if len(ids) != D.shape[0]:
        raise ValueError("one id per database row required")
    d2 = ((D - q) ** 2).sum(axis=1)
    id_order = np.argsort(np.array(ids, dtype=object), kind="stable")
    id_rank = np.empty(len(ids), dtype=np.intp)
    id_rank[id_order] = np.arange(len(ids))
    order = np.lexsort((id_rank, d2))
    return [ids[i] for i in order]


def average_precision(relevant_flags) -> float:
    """Mean of precision@r over the ranks r holding a relevant item."""
    flags = np.asarray(relevant_flags, dtype=bool)
    n_rel = int(flags.sum())
    if n_rel == 0:
        raise ValueError("average precision needs at least one relevant item")
    hits = np.cumsum(flags)
    ranks = np.nonzero(flags)[0] + 1
    return float((hits[flags] / ranks).sum() / n_rel)


def recall4(vectors, groups) -> float:
    """UKB score: mean number of same-group items among the top 4, the query included."""
    X = np.asarray(vectors, dtype=np.float64)
    groups = list(groups)
    if X.shape[0] != len(groups):
        raise ValueError("one group label per vector required")
    sizes = {}
    for g in groups:
        sizes[g] = sizes.get(g, 0) + 1
    bad = {g: s for g, s in sizes.items() if s != 4}
    if bad:
        raise ValueError(f"every group must contain exactly 4 items: {bad}")
    total = 0
    for i in range(X.shape[0]):
        top = rank(X[i], X)[:4]
        total += sum(groups[j] == groups[i] for j in top)
    return total / X.shape[0]


@dataclass
class EvalReport:
    per_query: list
    mean_ap: float
    skipped: list
    protocol: str

    def to_jsonl(self) -> str:
        lines = [json.dumps({"protocol": self.protocol})]
        lines += [json.dumps(r) for r in self.per_query]
        lines.append(json.dumps({"map": self.mean_ap, "skipped": self.skipped}))
        return "\n".join(lines) + "\n"


def retrieval_map(vectors, entries: Sequence[ManifestEntry], threads: int = 1,
                  protocol: str = "self-match excluded") -> EvalReport:
    """Rank the database for every query and score it by label equality.

    The query item itself is never part of its own ranking.
    """
    X = np.asarray(vectors, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(entries):
        raise ValueError(f"{X.shape[0] if X.ndim == 2 else 'malformed'} vectors for "
                         f"{len(entries)} manifest entries")
    ids = [e.path for e in entries]
    dupes = sorted({i for i in ids if ids.count(i) > 1}) if len(set(ids)) != len(ids) else []
    if dupes:
        raise ValueError(f"duplicate ids in manifest: {dupes}")
    db = [k for k, e in enumerate(entries) if e.role in ("target", "both")]
    queries = [k for k, e in enumerate(entries) if e.role in ("query", "both")]

    def one(qi):
        cand = [k for k in db if k != qi]
        order = rank(X[qi], X[cand], ids=[ids[k] for k in cand])
        lookup = {ids[k]: entries[k].label for k in cand}
        flags = [lookup[i] == entries[qi].label for i in order]
        n_rel = sum(flags)
        if n_rel == 0:
            return None
        return {"id": ids[qi], "ap": average_precision(flags), "num_relevant": n_rel}

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, queries))
    else:
        results = [one(q) for q in queries]
    per_query = [r for r in results if r is not None]
    skipped = [ids[q] for q, r in zip(queries, results) if r is None]
    mean_ap = float(np.mean([r["ap"] for r in per_query])) if per_query else 0.0
    return EvalReport(per_query=per_query, mean_ap=mean_ap, skipped=skipped, protocol=protocol)


def patch_eval(descriptor_file, manifest_file, threads: int = 1) -> EvalReport:
    from .fileio import read_vectors
    return retrieval_map(read_vectors(descriptor_file), read_manifest(manifest_file), threads,
                         protocol="patch retrieval, label relevance, self-match excluded")


def image_eval(vlad_file, manifest_file, threads: int = 1) -> EvalReport:
    from .fileio import read_vectors
    return retrieval_map(read_vectors(vlad_file), read_manifest(manifest_file), threads,
                         protocol="image retrieval, group relevance, self-match excluded")

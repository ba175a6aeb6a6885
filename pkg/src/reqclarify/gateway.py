"""Chat-completion and embedding access behind a record/replay store."""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import httpx
import numpy as np

from .exceptions import (
    DegenerateEmbeddingError,
    IntegrityError,
    MissingFixtureError,
    ReqClarifyError,
    TransportError,
    UsageError,
)
from .prompting import PromptBundle

log = logging.getLogger(__name__)

LLM_KEY_ENV = "REQCLARIFY_LLM_KEY"
EMBED_KEY_ENV = "REQCLARIFY_EMBED_KEY"
DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-4o"
DEFAULT_REPETITIONS = 10
BUNDLED_STORES = {"@fixture": "data/fixtures/replay"}


@dataclass(frozen=True)
class CompletionRequest:
    bundle: PromptBundle
    repetition_index: int = 0


@dataclass(frozen=True)
class CompletionResult:
    text: str
    latency: float
    backend_id: str
    cached: bool
    fingerprint: str = ""
    repetition_index: int = 0


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple
    model_id: str

    def __len__(self):
        return len(self.values)


def text_digest(text: str, model_id: str = "") -> str:
    return hashlib.sha256(f"{model_id}\x00{text}".encode("utf-8")).hexdigest()


def _resolve_store_path(path):
    if str(path) in BUNDLED_STORES:
        return Path(str(resources.files("reqclarify").joinpath(BUNDLED_STORES[str(path)])))
    return Path(path)


class ReplayStore:
    """Directory of JSON records, one per (fingerprint, repetition) and per embedding.

    Records are written once. Re-writing the same text is a no-op; a different
    text under an existing key is an integrity error.
    """

    _NAME = re.compile(r"^([0-9a-f]{64})-(\d+)\.json$")

    def __init__(self, path, read_only=False):
        self.path = _resolve_store_path(path)
        self.read_only = read_only
        self._lock = threading.Lock()

    def _completion_path(self, fp, index):
        return self.path / f"{fp}-{index:02d}.json"

    def _embedding_path(self, digest):
        return self.path / "embeddings" / f"{digest}.json"

    def get(self, fp: str, index: int):
        p = self._completion_path(fp, index)
        if not p.is_file():
            return None
        return json.loads(p.read_text(encoding="utf-8"))

    def put(self, fp: str, index: int, text: str, backend_id: str):
        record = {"fingerprint": fp, "repetition_index": index, "response": text,
                  "backend_id": backend_id,
                  "recorded_at": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")}
        self._write_once(self._completion_path(fp, index), record, "response")

    def get_embedding(self, digest: str):
        p = self._embedding_path(digest)
        if not p.is_file():
            return None
        return json.loads(p.read_text(encoding="utf-8"))

    def put_embedding(self, digest: str, values, model_id: str, text: str):
        record = {"digest": digest, "model_id": model_id, "text": text,
                  "values": [float(v) for v in values]}
        self._write_once(self._embedding_path(digest), record, "values")

    def _write_once(self, path: Path, record: dict, field: str):
        if self.read_only:
            raise UsageError(f"replay store {self.path} is read-only")
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            if path.exists():
                existing = json.loads(path.read_text(encoding="utf-8"))
                if existing.get(field) != record[field]:
                    raise IntegrityError(f"replay store already holds a different value at {path.name}")
                return
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(record, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
            os.replace(tmp, path)

    def keys(self):
        out = []
        if self.path.is_dir():
            for p in sorted(self.path.iterdir()):
                m = self._NAME.match(p.name)
                if m:
                    out.append((m.group(1), int(m.group(2))))
        return out


# --- chat backends -----------------------------------------------------------

class ChatBackend:
    backend_id = "abstract"

    def complete(self, bundle: PromptBundle, repetition_index: int = 0) -> str:
        raise NotImplementedError


def _post_with_retries(client, url, payload, *, max_retries, backoff, sleep):
    for attempt in range(max_retries + 1):
        try:
            resp = client.post(url, json=payload)
        except httpx.HTTPError as exc:
            if attempt == max_retries:
                raise TransportError(f"POST {url} failed: {exc}") from exc
            sleep(backoff * 2 ** attempt)
            continue
        if resp.status_code == 429 or resp.status_code >= 500:
            if attempt == max_retries:
                raise TransportError(f"POST {url}: HTTP {resp.status_code} after {attempt + 1} attempts")
            sleep(backoff * 2 ** attempt)
            continue
        if resp.status_code >= 400:
            raise TransportError(f"POST {url}: HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json()
    raise AssertionError("unreachable")


class OpenAIChatBackend(ChatBackend):
    """Any chat-completions style endpoint (``POST {base_url}/chat/completions``)."""

    def __init__(self, model=DEFAULT_MODEL, base_url=DEFAULT_BASE_URL, api_key=None, *,
                 timeout=120.0, max_retries=5, backoff=2.0, transport=None, sleep=time.sleep):
        api_key = api_key if api_key is not None else os.environ.get(LLM_KEY_ENV)
        if not api_key:
            raise UsageError(f"live mode needs an API key ({LLM_KEY_ENV})")
        self.model = model
        self.backend_id = f"chat:{model}"
        self.max_retries, self.backoff, self.sleep = max_retries, backoff, sleep
        self.http = httpx.Client(base_url=base_url.rstrip("/"), timeout=timeout, transport=transport,
                                 headers={"Authorization": f"Bearer {api_key}"})

    def complete(self, bundle, repetition_index=0):
        messages = []
        if bundle.system is not None:
            messages.append({"role": "system", "content": bundle.system})
        messages.append({"role": "user", "content": bundle.text})
        payload = {"model": self.model, "messages": messages,
                   "temperature": bundle.decoding.temperature,
                   "max_tokens": bundle.decoding.max_output_tokens}
        data = _post_with_retries(self.http, "/chat/completions", payload,
                                  max_retries=self.max_retries, backoff=self.backoff,
                                  sleep=self.sleep)
        try:
            return data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError):
            raise TransportError("chat response has no message content") from None


class CallableBackend(ChatBackend):
    """Wraps ``fn(bundle, repetition_index) -> str``; used for scripted fixtures."""

    def __init__(self, fn, backend_id="callable"):
        self.fn = fn
        self.backend_id = backend_id

    def complete(self, bundle, repetition_index=0):
        return self.fn(bundle, repetition_index)


# --- embedding backends ------------------------------------------------------

class HashingEmbedder:
    """Deterministic bag-of-words feature hashing; needs no network or model files."""

    local = True

    def __init__(self, dim=256):
        self.dim = dim
        self.model_id = f"hashing-{dim}"

    def __call__(self, text):
        from .metrics import tokenize
        vec = np.zeros(self.dim)
        for tok in tokenize(text):
            h = int.from_bytes(hashlib.blake2b(tok.encode("utf-8"), digest_size=8).digest(), "big")
            vec[h % self.dim] += 1.0
        return vec


class TableEmbedder:
    """Fixed text -> vector table."""

    local = True

    def __init__(self, table, model_id="table"):
        self.table = {k: tuple(float(x) for x in v) for k, v in table.items()}
        self.model_id = model_id

    def __call__(self, text):
        try:
            return np.array(self.table[text])
        except KeyError:
            raise MissingFixtureError(text_digest(text, self.model_id)) from None


class OpenAIEmbeddingBackend:
    local = False

    def __init__(self, model="text-embedding-3-small", base_url=DEFAULT_BASE_URL, api_key=None, *,
                 timeout=60.0, max_retries=5, backoff=2.0, transport=None, sleep=time.sleep):
        api_key = api_key if api_key is not None else os.environ.get(EMBED_KEY_ENV) \
            or os.environ.get(LLM_KEY_ENV)
        if not api_key:
            raise UsageError(f"embedding backend needs an API key ({EMBED_KEY_ENV})")
        self.model_id = model
        self.max_retries, self.backoff, self.sleep = max_retries, backoff, sleep
        self.http = httpx.Client(base_url=base_url.rstrip("/"), timeout=timeout, transport=transport,
                                 headers={"Authorization": f"Bearer {api_key}"})

    def __call__(self, text):
        data = _post_with_retries(self.http, "/embeddings", {"model": self.model_id, "input": text},
                                  max_retries=self.max_retries, backoff=self.backoff,
                                  sleep=self.sleep)
        return np.array(data["data"][0]["embedding"], dtype=float)


class SentenceTransformerEmbedder:
    local = True

    def __init__(self, model="all-MiniLM-L6-v2"):
        from sentence_transformers import SentenceTransformer  # optional extra
        self.model = SentenceTransformer(model)
        self.model_id = f"sbert:{model}"

    def __call__(self, text):
        return np.asarray(self.model.encode(text), dtype=float)


# --- gateway -----------------------------------------------------------------

class Gateway:
    """Entry point for model calls.

    ``mode="replay"`` answers only from the store and never calls a backend;
    ``mode="live"`` answers from the store when it can, otherwise calls the
    backend and appends the result.
    """

    def __init__(self, mode="replay", store=None, chat=None, embedder=None, *,
                 repetitions=DEFAULT_REPETITIONS, concurrency=4):
        if mode not in ("live", "replay"):
            raise UsageError(f"mode must be live or replay, got {mode!r}")
        if isinstance(store, (str, Path)):
            store = ReplayStore(store, read_only=(mode == "replay"))
        if mode == "replay" and store is None:
            raise UsageError("replay mode needs a replay store")
        if mode == "live" and chat is None:
            raise UsageError("live mode needs a chat backend")
        self.mode = mode
        self.store = store
        self.chat = chat
        self.embedder = embedder
        self.repetitions = repetitions
        self.concurrency = max(1, int(concurrency))
        self._vectors = {}
        self._vec_lock = threading.Lock()
        self._calls = []
        self._calls_lock = threading.Lock()

    # completions
    def complete(self, request: CompletionRequest) -> CompletionResult:
        idx = request.repetition_index
        if not 0 <= idx < self.repetitions:
            raise UsageError(f"repetition index {idx} outside 0..{self.repetitions - 1}")
        fp = request.bundle.fingerprint
        start = time.perf_counter()
        record = self.store.get(fp, idx) if self.store is not None else None
        if record is not None:
            result = CompletionResult(record["response"], time.perf_counter() - start,
                                      record.get("backend_id", ""), True, fp, idx)
        elif self.mode == "replay":
            raise MissingFixtureError(fp, idx)
        else:
            text = self.chat.complete(request.bundle, idx)
            if self.store is not None:
                self.store.put(fp, idx, text, self.chat.backend_id)
            result = CompletionResult(text, time.perf_counter() - start, self.chat.backend_id,
                                      False, fp, idx)
        with self._calls_lock:
            self._calls.append((fp, idx))
        return result

    def run_repeated(self, bundle: PromptBundle, k: int) -> list:
        if k < 1:
            raise UsageError("k must be >= 1")
        return self.map_complete([CompletionRequest(bundle, i) for i in range(k)])

    def map_complete(self, requests, return_exceptions=False) -> list:
        """Complete many requests concurrently; results keep the input order.

        With ``return_exceptions`` a failing request yields its exception in place
        of a result instead of aborting the batch.
        """
        requests = list(requests)

        def one(req):
            try:
                return self.complete(req)
            except ReqClarifyError as exc:
                if getattr(exc, "repetition_index", None) is None:
                    exc.repetition_index = req.repetition_index
                    exc.args = (f"{exc} [repetition {req.repetition_index}]",)
                if return_exceptions:
                    return exc
                raise

        if self.concurrency == 1 or len(requests) <= 1:
            return [one(r) for r in requests]
        with ThreadPoolExecutor(max_workers=self.concurrency) as pool:
            return list(pool.map(one, requests))

    # embeddings
    def embed(self, text: str) -> EmbeddingVector:
        if not text or not text.strip():
            raise UsageError("cannot embed empty text")
        backend = self.embedder
        model_id = getattr(backend, "model_id", "")
        digest = text_digest(text, model_id)
        with self._vec_lock:
            hit = self._vectors.get(digest)
        if hit is not None:
            return hit
        values = None
        if backend is not None and getattr(backend, "local", False):
            values = backend(text)
        else:
            record = self.store.get_embedding(digest) if self.store is not None else None
            if record is not None:
                values = record["values"]
            elif self.mode == "replay" or backend is None:
                raise MissingFixtureError(digest)
            else:
                values = backend(text)
                if self.store is not None:
                    self.store.put_embedding(digest, values, model_id, text)
        values = tuple(float(v) for v in np.asarray(values, dtype=float).ravel())
        if not any(values):
            raise DegenerateEmbeddingError(f"zero-norm embedding for {text[:40]!r}")
        vec = EmbeddingVector(values, model_id)
        with self._vec_lock:
            self._vectors[digest] = vec
        return vec

    @property
    def calls(self) -> list:
        with self._calls_lock:
            return list(self._calls)

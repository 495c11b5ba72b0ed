"""Send (image, prompt) pairs to a vision-capable chat model and cache the replies.

Two providers exist. ``http`` speaks the common chat-completions wire shape
(see docs/wire_format.md). ``replay`` serves recorded response texts from a
fixture directory and never touches the network.
"""
from __future__ import annotations

import base64
import hashlib
import io
import json
import logging
import os
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Protocol

import httpx
from PIL import Image, UnidentifiedImageError

from .errors import (
    FloodGaugeError,
    ImageDecodeError,
    MissingCredentials,
    MissingFixture,
    ProviderRejection,
    ProviderTimeout,
    StorageFailure,
)
from .prompt_builder import PromptTemplate

log = logging.getLogger(__name__)

API_KEY_ENV = "FLOODGAUGE_API_KEY"
DEFAULT_ENDPOINT = "https://api.openai.com/v1/chat/completions"
DEFAULT_MODEL = "gpt-4-vision"
RETRYABLE_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})
_MEDIA_TYPES = {"JPEG": "image/jpeg", "PNG": "image/png"}


@dataclass(frozen=True)
class ModelConfig:
    provider: str = "http"
    model_id: str = DEFAULT_MODEL
    endpoint_url: str = DEFAULT_ENDPOINT
    temperature: float = 0.0
    max_output_tokens: int = 1024
    timeout_s: float = 60.0
    max_retries: int = 3
    concurrency_limit: int = 4
    backoff_base_s: float = 1.0
    max_image_bytes: int = 20 * 1024 * 1024
    max_edge_px: int = 2048

    def __post_init__(self):
        if self.provider not in ("http", "replay"):
            raise ValueError(f"provider must be 'http' or 'replay', got {self.provider!r}")
        if not self.model_id:
            raise ValueError("model_id must be nonempty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.concurrency_limit <= 0:
            raise ValueError("concurrency_limit must be positive")
        if self.backoff_base_s < 0:
            raise ValueError("backoff_base_s must be >= 0")


@dataclass(frozen=True)
class LmmExchange:
    image_hash: str
    prompt_hash: str
    model_id: str
    response_text: str
    latency_ms: int
    timestamp: str
    from_cache: bool = False

    @property
    def key(self) -> str:
        return cache_key(self.image_hash, self.prompt_hash, self.model_id)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> LmmExchange:
        return cls(**data)


@dataclass(frozen=True)
class PreparedImage:
    data: bytes
    media_type: str
    image_hash: str


@dataclass(frozen=True)
class LmmRequest:
    image: PreparedImage
    prompt_text: str
    prompt_hash: str
    model_id: str

    @property
    def key(self) -> str:
        return cache_key(self.image.image_hash, self.prompt_hash, self.model_id)


def content_hash(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def cache_key(image_hash: str, prompt_hash: str, model_id: str) -> str:
    """Composite key for one exchange; a sha256 over the length-safe JSON triple."""
    if not image_hash or not prompt_hash or not model_id:
        raise ValueError("cache key components must be nonempty")
    blob = json.dumps([image_hash, prompt_hash, model_id], separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


def prepare_image(data: bytes, max_bytes: int = 20 * 1024 * 1024, max_edge_px: int = 2048) -> PreparedImage:
    """Validate a JPEG/PNG and downscale it if its long edge exceeds ``max_edge_px``.

    Images that need no resizing keep their original bytes, so their hash does
    not depend on the installed image library.
    """
    if len(data) > max_bytes:
        raise ImageDecodeError(f"image is {len(data)} bytes, over the {max_bytes}-byte cap")
    try:
        with Image.open(io.BytesIO(data)) as probe:
            fmt = probe.format
            probe.verify()
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(f"cannot decode image: {exc}") from None
    if fmt not in _MEDIA_TYPES:
        raise ImageDecodeError(f"unsupported image format {fmt!r}; expected JPEG or PNG")
    if max(img.size) > max_edge_px:
        img.thumbnail((max_edge_px, max_edge_px), Image.Resampling.LANCZOS)
        out = io.BytesIO()
        if fmt == "JPEG":
            img.convert("RGB").save(out, format="JPEG", quality=90)
        else:
            img.save(out, format="PNG")
        data = out.getvalue()
    return PreparedImage(data=data, media_type=_MEDIA_TYPES[fmt], image_hash=content_hash(data))


def build_request_payload(request: LmmRequest, cfg: ModelConfig) -> dict:
    encoded = base64.b64encode(request.image.data).decode("ascii")
    return {
        "model": request.model_id,
        "messages": [
            {
                "role": "user",
                "content": [
                    {"type": "text", "text": request.prompt_text},
                    {
                        "type": "image_url",
                        "image_url": {"url": f"data:{request.image.media_type};base64,{encoded}"},
                    },
                ],
            }
        ],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_output_tokens,
    }


class Provider(Protocol):
    def complete(self, request: LmmRequest, cfg: ModelConfig) -> str: ...


def _provider_message(response: httpx.Response) -> str:
    try:
        body = response.json()
    except ValueError:
        return response.text[:500]
    if isinstance(body, dict):
        err = body.get("error")
        if isinstance(err, dict) and err.get("message"):
            return str(err["message"])
        if isinstance(err, str):
            return err
    return response.text[:500]


class HttpProvider:
    """Chat-completions client with exponential backoff on retryable failures."""

    def __init__(
        self,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self._transport = transport
        self._sleep = sleep
        self._client: httpx.Client | None = None
        self._lock = threading.Lock()

    def _http(self, cfg: ModelConfig) -> httpx.Client:
        with self._lock:
            if self._client is None:
                self._client = httpx.Client(transport=self._transport, timeout=cfg.timeout_s)
            return self._client

    def _key(self) -> str:
        key = os.environ.get(API_KEY_ENV)
        if not key:
            raise MissingCredentials(f"set {API_KEY_ENV} to call the http provider")
        return key

    def complete(self, request: LmmRequest, cfg: ModelConfig) -> str:
        headers = {"Authorization": f"Bearer {self._key()}", "Content-Type": "application/json"}
        payload = build_request_payload(request, cfg)
        client = self._http(cfg)
        last_problem = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                self._sleep(cfg.backoff_base_s * 2 ** (attempt - 1))
            try:
                response = client.post(cfg.endpoint_url, json=payload, headers=headers, timeout=cfg.timeout_s)
            except (httpx.TimeoutException, httpx.TransportError) as exc:
                last_problem = f"{type(exc).__name__}: {exc}"
                log.warning("attempt %d/%d failed: %s", attempt + 1, cfg.max_retries + 1, last_problem)
                continue
            if response.status_code in RETRYABLE_STATUS:
                last_problem = f"HTTP {response.status_code}: {_provider_message(response)}"
                log.warning("attempt %d/%d failed: %s", attempt + 1, cfg.max_retries + 1, last_problem)
                continue
            if response.status_code >= 400:
                raise ProviderRejection(response.status_code, _provider_message(response))
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                raise ProviderRejection(response.status_code, "malformed completion body") from None
        raise ProviderTimeout(f"gave up after {cfg.max_retries + 1} attempts; last failure: {last_problem}")

    def close(self):
        if self._client is not None:
            self._client.close()


INDEX_NAME = "index.json"


class ReplayProvider:
    """Serves recorded responses: one ``<key>.txt`` file per key plus an ``index.json`` sidecar."""

    def __init__(self, fixtures_dir: str | Path):
        self.root = Path(fixtures_dir)
        index_path = self.root / INDEX_NAME
        try:
            self.index = json.loads(index_path.read_text(encoding="utf-8"))["entries"]
        except FileNotFoundError:
            raise MissingFixture(f"no replay index at {index_path}") from None

    def complete(self, request: LmmRequest, cfg: ModelConfig) -> str:
        entry = self.index.get(request.key)
        if entry is None:
            raise MissingFixture(
                f"no replay fixture for image {request.image.image_hash[:12]}, "
                f"prompt {request.prompt_hash[:12]}, model {request.model_id}"
            )
        return (self.root / entry["file"]).read_bytes().decode("utf-8")


def record_fixture(
    fixtures_dir: str | Path,
    image_hash: str,
    prompt_hash: str,
    model_id: str,
    response_text: str,
    label: str = "",
) -> str:
    """Add or replace one replay fixture; returns its key."""
    root = Path(fixtures_dir)
    root.mkdir(parents=True, exist_ok=True)
    index_path = root / INDEX_NAME
    index = json.loads(index_path.read_text(encoding="utf-8")) if index_path.exists() else {"version": 1, "entries": {}}
    key = cache_key(image_hash, prompt_hash, model_id)
    (root / f"{key}.txt").write_bytes(response_text.encode("utf-8"))
    index["entries"][key] = {
        "file": f"{key}.txt",
        "image_hash": image_hash,
        "prompt_hash": prompt_hash,
        "model_id": model_id,
        "label": label,
    }
    index["entries"] = dict(sorted(index["entries"].items()))
    _atomic_write(index_path, (json.dumps(index, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    return key


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class ResponseCache:
    """Content-addressed store of exchanges under ``<root>/exchanges/<k[:2]>/<k>.json``.

    Records are written to a temp file and renamed into place, so readers never
    see a partial record.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._dir = self.root / "exchanges"

    def _path(self, key: str) -> Path:
        return self._dir / key[:2] / f"{key}.json"

    def get(self, key: str) -> LmmExchange | None:
        try:
            raw = self._path(key).read_bytes()
        except FileNotFoundError:
            return None
        try:
            return LmmExchange.from_dict(json.loads(raw))
        except (ValueError, TypeError) as exc:
            log.warning("ignoring unreadable cache record %s: %s", key, exc)
            return None

    def put(self, exchange: LmmExchange) -> None:
        record = exchange.to_dict()
        record["from_cache"] = False
        data = json.dumps(record, sort_keys=True, indent=2).encode("utf-8") + b"\n"
        try:
            _atomic_write(self._path(exchange.key), data)
        except OSError as exc:
            raise StorageFailure(f"cannot write cache record: {exc}") from exc

    def keys(self) -> list[str]:
        if not self._dir.exists():
            return []
        return sorted(p.stem for p in self._dir.glob("*/*.json"))

    def __len__(self) -> int:
        return len(self.keys())

    def clear(self) -> int:
        removed = 0
        try:
            for key in self.keys():
                self._path(key).unlink(missing_ok=True)
                removed += 1
            for sub in list(self._dir.glob("*")) if self._dir.exists() else []:
                if sub.is_dir() and not any(sub.iterdir()):
                    sub.rmdir()
        except OSError as exc:
            raise StorageFailure(f"cannot clear cache: {exc}") from exc
        return removed


def make_provider(cfg: ModelConfig, fixtures_dir: str | Path | None = None) -> Provider:
    if cfg.provider == "replay":
        if fixtures_dir is None:
            raise MissingFixture("replay provider needs a fixtures directory")
        return ReplayProvider(fixtures_dir)
    return HttpProvider()


@dataclass
class LmmClient:
    cfg: ModelConfig
    provider: Provider
    cache: ResponseCache | None = None

    def request_for(self, image: bytes, prompt: PromptTemplate) -> LmmRequest:
        prepared = prepare_image(image, self.cfg.max_image_bytes, self.cfg.max_edge_px)
        return LmmRequest(prepared, prompt.text, prompt.checksum, self.cfg.model_id)

    def estimate(self, image: bytes, prompt: PromptTemplate) -> LmmExchange:
        return self.submit(self.request_for(image, prompt))

    def submit(self, request: LmmRequest) -> LmmExchange:
        image_hash = request.image.image_hash
        if self.cfg.provider == "replay":
            started = time.perf_counter()
            text = self.provider.complete(request, self.cfg)
            return LmmExchange(
                image_hash, request.prompt_hash, request.model_id, text,
                int((time.perf_counter() - started) * 1000), utc_now(), from_cache=True,
            )
        if self.cache is not None:
            hit = self.cache.get(request.key)
            if hit is not None:
                return LmmExchange(**{**hit.to_dict(), "from_cache": True})
        started = time.perf_counter()
        text = self.provider.complete(request, self.cfg)
        exchange = LmmExchange(
            image_hash, request.prompt_hash, request.model_id, text,
            int((time.perf_counter() - started) * 1000), utc_now(), from_cache=False,
        )
        if self.cache is not None:
            self.cache.put(exchange)
        return exchange

    def submit_many(self, requests: Iterable[LmmRequest]) -> list[LmmExchange | FloodGaugeError]:
        """Run requests with at most ``concurrency_limit`` in flight; errors are returned in place."""

        def run(req: LmmRequest):
            try:
                return self.submit(req)
            except FloodGaugeError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=self.cfg.concurrency_limit) as pool:
            return list(pool.map(run, requests))


def estimate_raw(
    image: bytes,
    prompt: PromptTemplate,
    cfg: ModelConfig,
    *,
    provider: Provider | None = None,
    cache: ResponseCache | None = None,
    fixtures_dir: str | Path | None = None,
) -> LmmExchange:
    if provider is None:
        provider = make_provider(cfg, fixtures_dir)
    return LmmClient(cfg, provider, cache).estimate(image, prompt)

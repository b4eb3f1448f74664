"""Chat-model providers: HTTP clients with vendor envelopes and replay archives."""

import asyncio
import json
import os
import re
import time
from pathlib import Path
from typing import Any, Protocol

import httpx
import structlog
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, ValidationError

from app.model import TokenUsage
from app.services.toolgen import ToolMode, ToolSet

logger = structlog.get_logger(__name__)

RETRYABLE_STATUS = frozenset({408, 429, 500, 502, 503, 504})


class ProviderError(Exception):
    """Base error of model providers."""


class TransportError(ProviderError):
    """Raised when a provider cannot be reached or rejects a request."""

    def __init__(self, message: str, status_code: int | None = None) -> None:
        """Initialize the error.

        Args:
            message (str): what failed.
            status_code (int | None, optional): HTTP status, if any.
        """
        super().__init__(message)
        self.status_code = status_code

    @property
    def retryable(self) -> bool:
        """Returns True for network failures, rate limits and server errors."""
        return self.status_code is None or self.status_code in RETRYABLE_STATUS


class MissingCredential(ProviderError):
    """Raised when the credential environment variable is not set."""


class ReplayMissing(ProviderError):
    """Raised when a replay archive has no entry for a request."""


class ChatMessage(BaseModel):
    """A chat message."""

    model_config = ConfigDict(frozen=True)

    role: str
    content: str


class ChatRequest(BaseModel):
    """A single-step request to a chat model."""

    model_config = ConfigDict(frozen=True)

    key: str
    model: str
    messages: tuple[ChatMessage, ...]
    system: str | None = None
    toolset: ToolSet | None = None
    response_schema: dict[str, Any] | None = None
    temperature: float | None = None
    top_p: float | None = None
    max_tokens: int = 1024


class NativeToolCall(BaseModel):
    """A tool call as emitted on a provider's native channel."""

    model_config = ConfigDict(frozen=True)

    name: str
    arguments: str | dict[str, Any]


class ChatResponse(BaseModel):
    """A parsed provider response with its raw payload."""

    model_config = ConfigDict(frozen=True)

    text: str | None = None
    tool_calls: tuple[NativeToolCall, ...] = ()
    usage: TokenUsage = TokenUsage()
    raw: dict[str, Any] = Field(default_factory=dict)
    envelope: str
    latency_ms: NonNegativeFloat = 0.0


class Envelope(Protocol):
    """Serializer between requests and one vendor's wire format."""

    name: str
    path: str

    def headers(self, api_key: str) -> dict[str, str]:
        """Returns authentication and version headers."""
        ...

    def build(self, request: ChatRequest) -> dict[str, Any]:
        """Returns the request body."""
        ...

    def parse(self, payload: dict[str, Any]) -> ChatResponse:
        """Returns the parsed response of a payload."""
        ...


def _schema_instruction(schema: dict[str, Any]) -> str:
    return (
        "Reply with a single JSON object and nothing else. "
        f"It must satisfy this JSON schema:\n{json.dumps(schema)}"
    )


class OpenAIEnvelope:
    """Chat-completions wire format with nested ``type``/``function`` tools."""

    name = "openai"
    path = "/chat/completions"

    def headers(self, api_key: str) -> dict[str, str]:
        """Returns the bearer authentication header."""
        return {"Authorization": f"Bearer {api_key}"}

    def build(self, request: ChatRequest) -> dict[str, Any]:
        """Returns a chat-completions request body."""
        messages = [{"role": "system", "content": request.system}] if request.system else []
        messages += [m.model_dump() for m in request.messages]
        body: dict[str, Any] = {"model": request.model, "messages": messages}

        toolset = request.toolset
        if toolset is not None and toolset.tools:
            body["tools"] = [tool.to_envelope() for tool in toolset.tools]
            body["parallel_tool_calls"] = toolset.parallel_tool_calls

        schema = request.response_schema
        if schema is None and toolset is not None:
            schema = toolset.structured_schema
        if schema is not None:
            body["response_format"] = {
                "type": "json_schema",
                "json_schema": {"name": schema.get("title", "Reply"), "schema": schema},
            }

        if request.temperature is not None:
            body["temperature"] = request.temperature
        if request.top_p is not None:
            body["top_p"] = request.top_p
        return body

    def parse(self, payload: dict[str, Any]) -> ChatResponse:
        """Parses a chat-completions response."""
        choices = payload.get("choices") or [{}]
        message = choices[0].get("message") or {}
        calls = tuple(
            NativeToolCall(
                name=call.get("function", {}).get("name", ""),
                arguments=call.get("function", {}).get("arguments", "{}"),
            )
            for call in message.get("tool_calls") or []
        )
        usage = payload.get("usage") or {}
        return ChatResponse(
            text=message.get("content"),
            tool_calls=calls,
            usage=TokenUsage(
                input_tokens=usage.get("prompt_tokens", 0),
                output_tokens=usage.get("completion_tokens", 0),
            ),
            raw=payload,
            envelope=self.name,
        )


class AnthropicEnvelope:
    """Messages wire format with flat tools and ``tool_use`` content blocks."""

    name = "anthropic"
    path = "/v1/messages"

    def headers(self, api_key: str) -> dict[str, str]:
        """Returns the key and version headers."""
        return {"x-api-key": api_key, "anthropic-version": "2023-06-01"}

    def build(self, request: ChatRequest) -> dict[str, Any]:
        """Returns a messages request body."""
        body: dict[str, Any] = {
            "model": request.model,
            "max_tokens": request.max_tokens,
            "messages": [m.model_dump() for m in request.messages],
        }
        system = [request.system] if request.system else []

        toolset = request.toolset
        if toolset is not None and toolset.tools:
            body["tools"] = [
                {
                    "name": tool.name,
                    "description": tool.description,
                    "input_schema": tool.to_schema(),
                }
                for tool in toolset.tools
            ]
            body["tool_choice"] = {
                "type": "auto",
                "disable_parallel_tool_use": not toolset.parallel_tool_calls,
            }

        schema = request.response_schema
        if schema is None and toolset is not None:
            schema = toolset.structured_schema
        if schema is not None:
            system.append(_schema_instruction(schema))

        if system:
            body["system"] = "\n\n".join(system)
        if request.temperature is not None:
            body["temperature"] = request.temperature
        if request.top_p is not None:
            body["top_p"] = request.top_p
        return body

    def parse(self, payload: dict[str, Any]) -> ChatResponse:
        """Parses a messages response."""
        blocks = payload.get("content") or []
        texts = [b.get("text", "") for b in blocks if b.get("type") == "text"]
        calls = tuple(
            NativeToolCall(name=b.get("name", ""), arguments=b.get("input") or {})
            for b in blocks
            if b.get("type") == "tool_use"
        )
        usage = payload.get("usage") or {}
        return ChatResponse(
            text="".join(texts) if texts else None,
            tool_calls=calls,
            usage=TokenUsage(
                input_tokens=usage.get("input_tokens", 0),
                output_tokens=usage.get("output_tokens", 0),
            ),
            raw=payload,
            envelope=self.name,
        )


ENVELOPES: dict[str, Envelope] = {
    OpenAIEnvelope.name: OpenAIEnvelope(),
    AnthropicEnvelope.name: AnthropicEnvelope(),
}


class RetryConfiguration(BaseModel):
    """Retry policy for transport failures."""

    attempts: int = Field(default=3, ge=1)
    backoff_seconds: float = Field(default=1.0, ge=0)
    timeout_seconds: float = Field(default=60.0, gt=0)


class ProviderConfig(BaseModel):
    """How to reach one model and in which mode to query it."""

    model_config = ConfigDict(frozen=True)

    provider: str = "openai"
    model: str
    endpoint: str = "https://api.openai.com/v1"
    api_key_env: str = "OPENAI_API_KEY"
    mode: ToolMode = ToolMode.UNIFIED
    temperature: float | None = None
    top_p: float | None = None
    retry: RetryConfiguration = Field(default_factory=RetryConfiguration)

    @property
    def parallel_tool_calls(self) -> bool:
        """Returns True when several tool calls per reply are allowed."""
        return self.mode == ToolMode.PARALLEL

    @property
    def structured_generation(self) -> bool:
        """Returns True when replies are constrained to a schema."""
        return self.mode == ToolMode.STRUCTURED

    @property
    def per_collection_tools(self) -> bool:
        """Returns True when one tool per collection is offered."""
        return self.mode == ToolMode.PER_COLLECTION

    @property
    def rationale_required(self) -> bool:
        """Returns True when tools require a rationale argument."""
        return self.mode == ToolMode.RATIONALE


class ChatProvider(Protocol):
    """Anything that answers single-step chat requests."""

    async def complete(self, request: ChatRequest) -> ChatResponse:
        """Returns the model's reply to a request."""
        ...


class HttpChatProvider:
    """Chat provider speaking a vendor envelope over HTTP."""

    def __init__(
        self,
        config: ProviderConfig,
        client: httpx.AsyncClient | None = None,
        sleep: Any = asyncio.sleep,
    ) -> None:
        """Initialize the provider.

        Args:
            config (ProviderConfig): endpoint, credential and retry settings.
            client (httpx.AsyncClient | None, optional): HTTP client to use.
            sleep (Any, optional): awaitable sleep used between retries.

        Raises:
            ProviderError: if the envelope is unknown.
        """
        if config.provider not in ENVELOPES:
            raise ProviderError(
                f"Unknown provider '{config.provider}', choose from {', '.join(ENVELOPES)}"
            )
        self.config = config
        self.envelope = ENVELOPES[config.provider]
        self._client = client or httpx.AsyncClient(timeout=config.retry.timeout_seconds)
        self._sleep = sleep

    def _api_key(self) -> str:
        api_key = os.environ.get(self.config.api_key_env)
        if not api_key:
            raise MissingCredential(
                f"Set the environment variable {self.config.api_key_env} "
                f"to query '{self.config.model}'"
            )
        return api_key

    async def _post(self, body: dict[str, Any], headers: dict[str, str]) -> dict[str, Any]:
        url = self.config.endpoint.rstrip("/") + self.envelope.path
        try:
            response = await self._client.post(url, json=body, headers=headers)
        except httpx.HTTPError as e:
            raise TransportError(f"Request to {url} failed: {e}") from e
        if response.status_code >= 400:
            raise TransportError(
                f"{url} answered {response.status_code}: {response.text[:200]}",
                status_code=response.status_code,
            )
        try:
            payload = response.json()
        except json.JSONDecodeError as e:
            raise TransportError(f"{url} returned invalid JSON: {e}") from e
        if not isinstance(payload, dict):
            raise TransportError(f"{url} returned a non-object payload")
        return payload

    async def complete(self, request: ChatRequest) -> ChatResponse:
        """Sends a request, retrying transport failures with exponential backoff.

        Args:
            request (ChatRequest): the request.

        Raises:
            MissingCredential: if no credential is configured.
            TransportError: when retries are exhausted or the error is final.

        Returns:
            ChatResponse: the parsed reply.
        """
        headers = self.envelope.headers(self._api_key())
        body = self.envelope.build(request)
        attempts = self.config.retry.attempts

        for attempt in range(1, attempts + 1):
            started = time.perf_counter()
            try:
                payload = await self._post(body, headers)
            except TransportError as e:
                if not e.retryable or attempt == attempts:
                    raise
                delay = self.config.retry.backoff_seconds * 2 ** (attempt - 1)
                logger.warning(
                    "provider_retry_scheduled",
                    model=self.config.model,
                    key=request.key,
                    attempt=attempt,
                    delay_seconds=delay,
                    reason=str(e),
                )
                await self._sleep(delay)
                continue

            latency = (time.perf_counter() - started) * 1000
            parsed = self.envelope.parse(payload)
            return parsed.model_copy(update={"latency_ms": round(latency, 3)})

        raise TransportError(f"No attempt made for '{request.key}'")  # pragma: no cover

    async def aclose(self) -> None:
        """Closes the HTTP client."""
        await self._client.aclose()


class ReplayEntry(BaseModel):
    """One recorded provider response."""

    record_id: str
    model: str
    envelope: str
    latency_ms: NonNegativeFloat = 0.0
    response: dict[str, Any]
    usage: TokenUsage = TokenUsage()


_UNSAFE = re.compile(r"[^A-Za-z0-9._-]+")


def _slug(value: str) -> str:
    return _UNSAFE.sub("_", value).strip("_") or "_"


class ReplayArchive:
    """Recorded responses stored as one file per model and record."""

    def __init__(self, root: Path) -> None:
        """Initialize the archive.

        Args:
            root (Path): archive directory.
        """
        self.root = root

    def path_for(self, model: str, record_id: str) -> Path:
        """Returns the file of a recorded response."""
        return self.root / _slug(model) / f"{_slug(record_id)}.json"

    def save(self, entry: ReplayEntry) -> Path:
        """Stores a response; existing entries are replaced."""
        path = self.path_for(entry.model, entry.record_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(entry.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return path

    def load(self, model: str, record_id: str) -> ReplayEntry:
        """Returns a recorded response.

        Raises:
            ReplayMissing: if nothing is recorded or the file is unreadable.
        """
        path = self.path_for(model, record_id)
        try:
            return ReplayEntry.model_validate_json(path.read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise ReplayMissing(
                f"No recorded response for model '{model}' and record '{record_id}' "
                f"in {self.root}"
            ) from e
        except (OSError, ValidationError) as e:
            raise ReplayMissing(f"Unreadable replay entry {path}: {e}") from e

    def models(self) -> list[str]:
        """Returns the recorded model directories."""
        if not self.root.exists():
            return []
        return sorted(p.name for p in self.root.iterdir() if p.is_dir())


class ReplayProvider:
    """Answers requests from a replay archive."""

    def __init__(self, archive: ReplayArchive) -> None:
        """Initialize the provider.

        Args:
            archive (ReplayArchive): recorded responses.
        """
        self.archive = archive

    async def complete(self, request: ChatRequest) -> ChatResponse:
        """Returns the recorded reply for the request's model and key.

        Raises:
            ReplayMissing: if no reply is recorded.
            ProviderError: if the recorded envelope is unknown.
        """
        entry = self.archive.load(request.model, request.key)
        envelope = ENVELOPES.get(entry.envelope)
        if envelope is None:
            raise ProviderError(
                f"Replay entry for '{request.key}' uses unknown envelope '{entry.envelope}'"
            )
        parsed = envelope.parse(entry.response)
        return parsed.model_copy(
            update={"usage": entry.usage, "latency_ms": entry.latency_ms}
        )


class RecordingProvider:
    """Forwards requests to a live provider and archives every reply."""

    def __init__(self, inner: ChatProvider, archive: ReplayArchive) -> None:
        """Initialize the provider.

        Args:
            inner (ChatProvider): live provider.
            archive (ReplayArchive): archive receiving replies.
        """
        self.inner = inner
        self.archive = archive

    async def complete(self, request: ChatRequest) -> ChatResponse:
        """Forwards the request and records the reply."""
        response = await self.inner.complete(request)
        self.archive.save(
            ReplayEntry(
                record_id=request.key,
                model=request.model,
                envelope=response.envelope,
                latency_ms=response.latency_ms,
                response=response.raw,
                usage=response.usage,
            )
        )
        return response

from collections.abc import AsyncGenerator, Iterable
from contextlib import asynccontextmanager
from pathlib import Path

import yaml
from pydantic import BaseModel, Field, ValidationError

from app.model import UseCase
from app.services.costs import PricingRegistry, load_pricing
from app.services.display import DisplayService
from app.services.engine import EngineConfiguration
from app.services.evaluation import EvaluationConfiguration
from app.services.generation import GenerationConfiguration
from app.services.harness import HarnessConfiguration
from app.services.providers import (
    ENVELOPES,
    ChatProvider,
    HttpChatProvider,
    ProviderConfig,
    ProviderError,
    RecordingProvider,
    ReplayArchive,
    ReplayProvider,
    RetryConfiguration,
)
from app.services.schema_registry import (
    ParseError,
    RegistryConfiguration,
    load_builtin_use_case,
    load_use_case_file,
)
from app.services.toolgen import ToolMode

CONFIG_PATH = Path("querybench.yaml")
REPLAY_PROVIDER = "replay"


class ConfigurationError(Exception):
    """Raised when the settings file cannot be loaded."""


class ProviderEndpoint(BaseModel):
    """Where a provider lives and which variable holds its credential."""

    envelope: str = "openai"
    endpoint: str
    api_key_env: str


def _default_providers() -> dict[str, ProviderEndpoint]:
    return {
        "openai": ProviderEndpoint(
            endpoint="https://api.openai.com/v1", api_key_env="OPENAI_API_KEY"
        ),
        "anthropic": ProviderEndpoint(
            envelope="anthropic",
            endpoint="https://api.anthropic.com",
            api_key_env="ANTHROPIC_API_KEY",
        ),
        "gemini": ProviderEndpoint(
            endpoint="https://generativelanguage.googleapis.com/v1beta/openai",
            api_key_env="GEMINI_API_KEY",
        ),
        "cohere": ProviderEndpoint(
            endpoint="https://api.cohere.ai/compatibility/v1",
            api_key_env="COHERE_API_KEY",
        ),
        "together": ProviderEndpoint(
            endpoint="https://api.together.xyz/v1", api_key_env="TOGETHER_API_KEY"
        ),
    }


class Settings(BaseModel):
    """Every configurable part of the benchmark."""

    registry: RegistryConfiguration = Field(default_factory=RegistryConfiguration)
    generation: GenerationConfiguration = Field(default_factory=GenerationConfiguration)
    engine: EngineConfiguration = Field(default_factory=EngineConfiguration)
    evaluation: EvaluationConfiguration = Field(default_factory=EvaluationConfiguration)
    harness: HarnessConfiguration = Field(default_factory=HarnessConfiguration)
    retry: RetryConfiguration = Field(default_factory=RetryConfiguration)
    providers: dict[str, ProviderEndpoint] = Field(default_factory=_default_providers)
    temperature: float | None = None
    top_p: float | None = None


def get_settings(path: Path | None = None) -> Settings:
    """Load the settings.

    Args:
        path (Path | None, optional): settings file. Defaults to
            ``querybench.yaml`` in the working directory, which may be absent.

    Raises:
        ConfigurationError: if an explicitly given file is missing or any file
            is invalid.

    Returns:
        Settings: loaded settings, defaults where the file is silent.
    """
    if path is None:
        path = CONFIG_PATH
        if not path.exists():
            return Settings()
    try:
        with path.open(encoding="utf-8") as stream:
            data = yaml.safe_load(stream)
        return Settings.model_validate(data or {})
    except (OSError, yaml.YAMLError, ValidationError) as e:
        raise ConfigurationError(f"Cannot load settings from {path}: {e}") from e


def get_provider_config(
    settings: Settings, provider: str, model: str, mode: ToolMode
) -> ProviderConfig:
    """Create the configuration of one model.

    Args:
        settings (Settings): loaded settings.
        provider (str): provider name, or ``replay``.
        model (str): model name.
        mode (ToolMode): harness mode.

    Raises:
        ProviderError: if the provider is unknown.

    Returns:
        ProviderConfig: the model configuration.
    """
    if provider == REPLAY_PROVIDER:
        return ProviderConfig(
            provider=REPLAY_PROVIDER,
            model=model,
            endpoint="",
            api_key_env="",
            mode=mode,
            temperature=settings.temperature,
            top_p=settings.top_p,
        )
    endpoint = settings.providers.get(provider)
    if endpoint is None:
        known = ", ".join([*settings.providers, REPLAY_PROVIDER])
        raise ProviderError(f"Unknown provider '{provider}', choose from {known}")
    if endpoint.envelope not in ENVELOPES:
        raise ProviderError(
            f"Provider '{provider}' uses unknown envelope '{endpoint.envelope}'"
        )
    return ProviderConfig(
        provider=endpoint.envelope,
        model=model,
        endpoint=endpoint.endpoint,
        api_key_env=endpoint.api_key_env,
        mode=mode,
        temperature=settings.temperature,
        top_p=settings.top_p,
        retry=settings.retry,
    )


@asynccontextmanager
async def open_provider(
    config: ProviderConfig, archive: Path | None = None
) -> AsyncGenerator[ChatProvider, None]:
    """Provide the chat provider of a model configuration.

    Replay configurations answer from the archive. Live providers record into
    the archive when one is given and close their HTTP client on exit.

    Args:
        config (ProviderConfig): model configuration.
        archive (Path | None, optional): replay archive directory.

    Raises:
        ProviderError: if replay is requested without an archive.

    Yields:
        ChatProvider: the provider.
    """
    if config.provider == REPLAY_PROVIDER:
        if archive is None:
            raise ProviderError("The replay provider needs --archive")
        yield ReplayProvider(ReplayArchive(archive))
        return

    client = HttpChatProvider(config)
    try:
        if archive is None:
            yield client
        else:
            yield RecordingProvider(client, ReplayArchive(archive))
    finally:
        await client.aclose()


def get_use_cases(
    names: Iterable[str], directory: Path | None, settings: Settings
) -> dict[str, UseCase]:
    """Load use cases by name.

    A file ``<directory>/<name>.json`` wins over the packaged use case.

    Args:
        names (Iterable[str]): use-case names.
        directory (Path | None): directory of generated use cases.
        settings (Settings): loaded settings.

    Raises:
        ParseError: if a use case is neither on disk nor packaged.

    Returns:
        dict[str, UseCase]: use cases keyed by name.
    """
    profile = settings.registry.profile
    use_cases: dict[str, UseCase] = {}
    for name in dict.fromkeys(names):
        path = directory / f"{name}.json" if directory is not None else None
        if path is not None and path.exists():
            use_cases[name] = load_use_case_file(path, profile)
        else:
            try:
                use_cases[name] = load_builtin_use_case(name, profile)
            except ParseError as e:
                where = f" or in {directory}" if directory is not None else ""
                raise ParseError(name, f"no use case found{where}: {e}") from e
    return use_cases


def get_pricing() -> PricingRegistry:
    """Create the packaged pricing registry."""
    return load_pricing()


def get_display_service() -> DisplayService:
    """Create a new instance of the display service.

    Returns:
        DisplayService: Service for formatting report values.
    """
    return DisplayService()

"""Test suite for settings and provider wiring."""

from pathlib import Path

import pytest

from app.dependencies import (
    ConfigurationError,
    Settings,
    get_provider_config,
    get_settings,
    get_use_cases,
    open_provider,
)
from app.model import UseCase
from app.services.providers import (
    HttpChatProvider,
    ProviderError,
    RecordingProvider,
    ReplayProvider,
)
from app.services.schema_registry import ParseError, dump_use_case
from app.services.toolgen import ToolMode


@pytest.fixture
def settings() -> Settings:
    """Provide default settings."""
    return Settings()


class TestGetSettings:
    """Test suite for get_settings."""

    def test_defaults_without_file(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        """Test that a missing default file means defaults."""
        monkeypatch.chdir(tmp_path)
        settings = get_settings()
        assert settings.engine.search.limit == 10
        assert settings.harness.concurrency == 4
        assert "anthropic" in settings.providers

    def test_file_overrides(self, tmp_path: Path) -> None:
        """Test that a file overrides only what it names."""
        path = tmp_path / "querybench.yaml"
        path.write_text(
            "engine:\n  search:\n    limit: 3\nretry:\n  attempts: 5\ntemperature: 0\n",
            encoding="utf-8",
        )
        settings = get_settings(path)
        assert settings.engine.search.limit == 3
        assert settings.engine.search.k1 == 1.5
        assert settings.retry.attempts == 5
        assert settings.temperature == 0.0

    @pytest.mark.parametrize(
        "content",
        ["engine: [1, 2", "harness:\n  concurrency: 0\n"],
        ids=["invalid_yaml", "invalid_value"],
    )
    def test_invalid_file(self, tmp_path: Path, content: str) -> None:
        """Test that broken settings are configuration errors."""
        path = tmp_path / "querybench.yaml"
        path.write_text(content, encoding="utf-8")
        with pytest.raises(ConfigurationError):
            get_settings(path)


class TestProviderWiring:
    """Test suite for provider configuration."""

    def test_anthropic_endpoint(self, settings: Settings) -> None:
        """Test that named providers resolve to envelope and credential variable."""
        config = get_provider_config(settings, "anthropic", "claude-3-5-sonnet", ToolMode.PARALLEL)
        assert config.provider == "anthropic"
        assert config.api_key_env == "ANTHROPIC_API_KEY"
        assert config.parallel_tool_calls

    def test_unknown_provider(self, settings: Settings) -> None:
        """Test that unknown providers are refused."""
        with pytest.raises(ProviderError, match="replay"):
            get_provider_config(settings, "pigeon", "m", ToolMode.UNIFIED)

    async def test_open_replay_provider(self, settings: Settings, tmp_path: Path) -> None:
        """Test that replay answers from the archive."""
        config = get_provider_config(settings, "replay", "m", ToolMode.UNIFIED)
        async with open_provider(config, tmp_path) as provider:
            assert isinstance(provider, ReplayProvider)
        with pytest.raises(ProviderError, match="--archive"):
            async with open_provider(config):
                pass

    async def test_live_provider_records_into_archive(
        self, settings: Settings, tmp_path: Path
    ) -> None:
        """Test that a live provider with an archive records its replies."""
        config = get_provider_config(settings, "openai", "gpt-4o", ToolMode.UNIFIED)
        async with open_provider(config, tmp_path) as provider:
            assert isinstance(provider, RecordingProvider)
        async with open_provider(config) as provider:
            assert isinstance(provider, HttpChatProvider)


class TestGetUseCases:
    """Test suite for get_use_cases."""

    def test_file_wins_over_packaged(
        self, settings: Settings, tmp_path: Path, restaurants: UseCase
    ) -> None:
        """Test that generated use cases shadow packaged ones."""
        local = restaurants.model_copy(update={"use_case_overview": "Local copy"})
        (tmp_path / "restaurants.json").write_text(dump_use_case(local), encoding="utf-8")
        use_cases = get_use_cases(["restaurants", "courses"], tmp_path, settings)
        assert use_cases["restaurants"].use_case_overview == "Local copy"
        assert use_cases["courses"].name == "courses"

    def test_unknown_use_case(self, settings: Settings, tmp_path: Path) -> None:
        """Test a name that is neither on disk nor packaged."""
        with pytest.raises(ParseError, match="no use case found"):
            get_use_cases(["dragons"], tmp_path, settings)

"""Shared fixtures for unit tests."""

from pathlib import Path

import pytest

from app.model import DatasetRecord, UseCase
from app.services.providers import ReplayArchive
from app.services.schema_registry import load_builtin_use_case
from tests.unit.factories import build_dataset, record_replay


@pytest.fixture
def restaurants() -> UseCase:
    """Provide the packaged restaurant use case."""
    return load_builtin_use_case("restaurants")


@pytest.fixture
def restaurant_dataset(restaurants: UseCase) -> list[DatasetRecord]:
    """Provide the 63 template records of the restaurant use case."""
    return build_dataset(restaurants)


@pytest.fixture
def replay_archive(
    tmp_path: Path, restaurants: UseCase, restaurant_dataset: list[DatasetRecord]
) -> ReplayArchive:
    """Provide an archive answering every restaurant record for two models.

    model-a always answers the ground truth. model-b answers without a tool
    every seventh record and routes the following one to a wrong collection.
    """
    archive = ReplayArchive(tmp_path / "replay")
    record_replay(archive, restaurants, restaurant_dataset)
    return archive

"""In-memory SQLite sandbox that runs compiled queries against seeded rows."""

from collections.abc import Mapping, Sequence
from typing import Any, Self

from sqlalchemy import Boolean, Column, Float, MetaData, Table, Text, insert
from sqlalchemy.ext.asyncio import AsyncEngine, create_async_engine
from sqlalchemy.pool import StaticPool
from sqlalchemy.types import TypeEngine

from app.model import DataType, UseCase

DATABASE_URL = "sqlite+aiosqlite:///:memory:"

_COLUMN_TYPES: dict[DataType, type[TypeEngine[Any]]] = {
    DataType.TEXT: Text,
    DataType.NUMBER: Float,
    DataType.BOOLEAN: Boolean,
}


class SqlSandbox:
    """Embedded relational engine holding the seeded collections of a use case.

    Every instance owns a private in-memory database. Tables are named after
    the collections and columns after the properties.
    """

    def __init__(self, url: str = DATABASE_URL) -> None:
        """Initialize the sandbox with its own engine.

        Args:
            url (str, optional): SQLAlchemy async URL. Defaults to in-memory SQLite.
        """
        self._engine: AsyncEngine = create_async_engine(
            url, poolclass=StaticPool, connect_args={"check_same_thread": False}
        )
        self._metadata = MetaData()

    async def __aenter__(self) -> Self:
        """Enter the sandbox context."""
        return self

    async def __aexit__(self, *exc_info: object) -> None:
        """Dispose the engine."""
        await self.dispose()

    async def load(
        self, use_case: UseCase, data: Mapping[str, Sequence[Mapping[str, Any]]]
    ) -> None:
        """Create one table per collection and insert its rows.

        Args:
            use_case (UseCase): use case defining the tables.
            data (Mapping[str, Sequence[Mapping[str, Any]]]): rows per collection.
        """
        tables: list[tuple[Table, Sequence[Mapping[str, Any]]]] = []
        for collection in use_case.collections:
            table = Table(
                collection.name,
                self._metadata,
                *(
                    Column(p.name, _COLUMN_TYPES[p.data_type], nullable=False)
                    for p in collection.properties
                ),
            )
            tables.append((table, data.get(collection.name, ())))

        async with self._engine.begin() as conn:
            await conn.run_sync(self._metadata.create_all)
            for table, rows in tables:
                if rows:
                    await conn.execute(insert(table), [dict(row) for row in rows])

    async def fetch(self, statement: str) -> list[tuple[Any, ...]]:
        """Run a raw statement and return all result rows.

        LIKE is made case-sensitive for the connection first.

        Args:
            statement (str): SQL text.

        Returns:
            list[tuple[Any, ...]]: result rows.
        """
        async with self._engine.connect() as conn:
            await conn.exec_driver_sql("PRAGMA case_sensitive_like = ON")
            result = await conn.exec_driver_sql(statement)
            return [tuple(row) for row in result.fetchall()]

    async def dispose(self) -> None:
        """Release the engine."""
        await self._engine.dispose()

"""Single-step function-calling runs, parallel-call scoring and judge rankings."""

import asyncio
import json
import string
from collections.abc import Mapping, Sequence
from datetime import UTC, datetime
from pathlib import Path

import structlog
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, ValidationError

from app.model import (
    DatasetRecord,
    OutcomeKind,
    PredictionOutcome,
    QueryRequest,
    TokenUsage,
    UseCase,
)
from app.services.costs import CostLedger
from app.services.evaluation import CallScore, EvaluationConfiguration, best_of
from app.services.generation import GeneratorFailure
from app.services.providers import (
    ChatMessage,
    ChatProvider,
    ChatRequest,
    ChatResponse,
    ProviderConfig,
    ProviderError,
    TransportError,
)
from app.services.queries import QueryValidationError, validate
from app.services.toolgen import (
    TOOL_NAME,
    ParsedCall,
    ToolCallParseError,
    ToolCallParser,
    ToolSet,
    build_toolset,
)

logger = structlog.get_logger(__name__)

STRUCTURED_INSTRUCTIONS = (
    "You can answer directly or call the function {tool_name} by setting "
    "use_tools and listing tool_calls.\n\n{tool_description}"
)
JUDGE_INSTRUCTIONS = (
    "You rank candidate database queries for a user request. Rank every "
    "candidate from 1 (best) to {count}; equally good candidates share a rank. "
    "Judge how well each query answers the request, not how it is formatted. "
    "Candidates marked NO QUERY answered in prose.\n\n"
    "Reply with a single JSON object with keys 'rankings' (a list of objects "
    "with 'candidate' and 'rank') and 'explanation'."
)


class HarnessError(Exception):
    """Base error of benchmark runs."""


class AbortAfterNFailures(HarnessError, ProviderError):
    """Raised when too many requests failed to reach the provider."""

    def __init__(self, failures: int, limit: int) -> None:
        """Initialize the error.

        Args:
            failures (int): failed requests.
            limit (int): configured limit.
        """
        super().__init__(
            f"Aborted after {failures} provider failures (limit {limit})"
        )
        self.failures = failures
        self.limit = limit


class OutcomeFileError(HarnessError):
    """Raised when an outcome or judgment file cannot be read."""


class HarnessConfiguration(BaseModel):
    """Configuration of benchmark runs."""

    concurrency: PositiveInt = 4
    max_failures: PositiveInt = 20
    max_tokens: PositiveInt = 1024


def _request(
    record: DatasetRecord,
    config: ProviderConfig,
    toolset: ToolSet,
    harness: HarnessConfiguration,
) -> ChatRequest:
    system = None
    if toolset.structured:
        system = STRUCTURED_INSTRUCTIONS.format(
            tool_name=TOOL_NAME, tool_description=toolset.structured_description or ""
        )
    return ChatRequest(
        key=record.record_id,
        model=config.model,
        messages=(ChatMessage(role="user", content=record.nl_command),),
        system=system,
        toolset=toolset,
        temperature=config.temperature,
        top_p=config.top_p,
        max_tokens=harness.max_tokens,
    )


def _malformed(
    record: DatasetRecord,
    config: ProviderConfig,
    diagnostics: Sequence[str],
    response: ChatResponse | None = None,
) -> PredictionOutcome:
    return PredictionOutcome(
        record_id=record.record_id,
        model=config.model,
        kind=OutcomeKind.MALFORMED,
        response_text=response.text if response else None,
        raw_payload=response.raw if response else None,
        diagnostics=tuple(diagnostics),
        usage=response.usage if response else TokenUsage(),
        latency_ms=response.latency_ms if response else 0.0,
    )


def _native_calls(
    response: ChatResponse, toolset: ToolSet, parser: ToolCallParser
) -> tuple[list[ParsedCall], list[str]]:
    native = list(response.tool_calls)
    if not toolset.parallel_tool_calls:
        native = native[:1]

    calls: list[ParsedCall] = []
    diagnostics: list[str] = []
    for position, call in enumerate(native):
        try:
            calls.append(parser.parse_call(call.name, call.arguments))
        except ToolCallParseError as e:
            diagnostics.extend(f"call {position}: {d}" for d in e.diagnostics)
    return calls, diagnostics


def _valid_calls(
    calls: Sequence[ParsedCall], use_case: UseCase
) -> tuple[list[ParsedCall], list[str]]:
    valid: list[ParsedCall] = []
    diagnostics: list[str] = []
    for call in calls:
        try:
            validate(call.query, use_case)
        except QueryValidationError as e:
            diagnostics.extend(str(error) for error in e.errors)
        else:
            valid.append(call)
    return valid, diagnostics


async def run_single_step(
    record: DatasetRecord,
    provider: ChatProvider,
    config: ProviderConfig,
    toolset: ToolSet,
    use_case: UseCase,
    harness: HarnessConfiguration | None = None,
) -> PredictionOutcome:
    """Sends one command with the tools and parses the first reply.

    No second model turn is made. Replies whose calls cannot be parsed or
    validated become MALFORMED outcomes. With parallel tool calls the calls
    that do validate are kept and the failures of their siblings are recorded
    as diagnostics.

    Args:
        record (DatasetRecord): record to answer.
        provider (ChatProvider): model provider.
        config (ProviderConfig): model and mode.
        toolset (ToolSet): tools of the record's use case in the provider's mode.
        use_case (UseCase): use case the record belongs to.
        harness (HarnessConfiguration | None, optional): run configuration.

    Raises:
        ProviderError: if the provider cannot answer, including transport
            failures that survive the retries.

    Returns:
        PredictionOutcome: the parsed outcome.
    """
    harness = harness or HarnessConfiguration()
    request = _request(record, config, toolset, harness)
    response = await provider.complete(request)

    parser = ToolCallParser(use_case)
    calls: list[ParsedCall]
    diagnostics: list[str] = []
    if toolset.structured:
        try:
            reply = parser.parse_structured(response.text or "")
        except ToolCallParseError as e:
            return _malformed(record, config, e.diagnostics, response)
        use_tools, calls, rationale = reply.use_tools, list(reply.calls), reply.rationale
    else:
        if len(response.tool_calls) > 1 and not toolset.parallel_tool_calls:
            logger.warning(
                "extra_tool_calls_dropped",
                model=config.model,
                record_id=record.record_id,
                dropped=len(response.tool_calls) - 1,
            )
        calls, diagnostics = _native_calls(response, toolset, parser)
        use_tools = bool(response.tool_calls)
        rationale = next((c.rationale for c in calls if c.rationale), None)

    if not use_tools:
        return PredictionOutcome(
            record_id=record.record_id,
            model=config.model,
            kind=OutcomeKind.NO_TOOL,
            response_text=response.text,
            rationale=rationale,
            usage=response.usage,
            latency_ms=response.latency_ms,
        )

    calls, invalid = _valid_calls(calls, use_case)
    diagnostics.extend(invalid)
    if not calls:
        return _malformed(record, config, diagnostics, response)

    return PredictionOutcome(
        record_id=record.record_id,
        model=config.model,
        kind=OutcomeKind.TOOL_CALL,
        queries=tuple(call.query for call in calls),
        response_text=response.text,
        diagnostics=tuple(diagnostics),
        rationale=rationale,
        usage=response.usage,
        latency_ms=response.latency_ms,
    )


def score_parallel(
    outcome: PredictionOutcome,
    truth: QueryRequest,
    config: EvaluationConfiguration | None = None,
) -> CallScore:
    """Scores a multi-call outcome by its highest-scoring call.

    Args:
        outcome (PredictionOutcome): tool-call outcome.
        truth (QueryRequest): ground-truth query.
        config (EvaluationConfiguration | None, optional): scorer configuration.

    Returns:
        CallScore: exact match if any call matches, the best AST score with
            its routing, and the number of calls.
    """
    queries = outcome.queries if outcome.kind == OutcomeKind.TOOL_CALL else ()
    return best_of(queries, truth, config)


def mean_calls_per_query(outcomes: Sequence[PredictionOutcome]) -> float:
    """Returns the mean number of tool calls over outcomes with a tool call."""
    calls = [len(o.queries) for o in outcomes if o.kind == OutcomeKind.TOOL_CALL]
    return sum(calls) / len(calls) if calls else 0.0


class BenchmarkRun(BaseModel):
    """Outcomes of one model over a dataset with its token ledger."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    outcomes: list[PredictionOutcome]
    ledger: CostLedger


class _Breaker:
    def __init__(self, limit: int) -> None:
        self.limit = limit
        self.failures: list[TransportError] = []

    @property
    def tripped(self) -> bool:
        return len(self.failures) >= self.limit


async def run_benchmark(
    dataset: Sequence[DatasetRecord],
    use_cases: Mapping[str, UseCase],
    provider: ChatProvider,
    config: ProviderConfig,
    harness: HarnessConfiguration | None = None,
    token_budget: int = 1024,
) -> BenchmarkRun:
    """Runs every record through the provider in the provider's mode.

    Requests run concurrently under the configured cap. A request that still
    fails after the provider's retries fails the run: it is never scored as a
    model answer. Once ``max_failures`` requests have failed no new request
    is sent. Outcomes are ordered by record id and usage is collected into
    the ledger afterwards.

    Args:
        dataset (Sequence[DatasetRecord]): records to answer.
        use_cases (Mapping[str, UseCase]): use cases by name.
        provider (ChatProvider): model provider.
        config (ProviderConfig): model and mode.
        harness (HarnessConfiguration | None, optional): run configuration.
        token_budget (int, optional): token budget of the tool descriptions.

    Raises:
        HarnessError: if a record references an unknown use case.
        BudgetExceeded: if a description does not fit the budget.
        AbortAfterNFailures: when the failure limit is reached.
        TransportError: when fewer requests than the limit failed.
        ProviderError: for other provider failures.

    Returns:
        BenchmarkRun: outcomes and ledger.
    """
    harness = harness or HarnessConfiguration()
    missing = sorted({r.schema_ref for r in dataset} - set(use_cases))
    if missing:
        raise HarnessError(f"Dataset references unknown use cases: {', '.join(missing)}")

    toolsets = {
        name: build_toolset(use_cases[name], config.mode, token_budget)
        for name in dict.fromkeys(r.schema_ref for r in dataset)
    }
    semaphore = asyncio.Semaphore(harness.concurrency)
    breaker = _Breaker(harness.max_failures)

    async def answer(record: DatasetRecord) -> PredictionOutcome | None:
        async with semaphore:
            if breaker.tripped:
                return None
            try:
                return await run_single_step(
                    record,
                    provider,
                    config,
                    toolsets[record.schema_ref],
                    use_cases[record.schema_ref],
                    harness,
                )
            except TransportError as e:
                logger.warning(
                    "provider_request_failed",
                    model=config.model,
                    record_id=record.record_id,
                    status_code=e.status_code,
                )
                breaker.failures.append(e)
                return None

    results = await asyncio.gather(*(answer(record) for record in dataset))
    if breaker.tripped:
        raise AbortAfterNFailures(len(breaker.failures), breaker.limit)
    if breaker.failures:
        first = breaker.failures[0]
        raise TransportError(
            f"{len(breaker.failures)} of {len(dataset)} requests failed after "
            f"retries, first: {first}",
            status_code=first.status_code,
        )

    outcomes = sorted((o for o in results if o is not None), key=lambda o: o.record_id)
    ledger = CostLedger()
    for outcome in outcomes:
        ledger.record(config.model, outcome.usage)

    logger.info(
        "benchmark_run_completed",
        model=config.model,
        mode=config.mode,
        records=len(outcomes),
        no_tool=sum(o.kind == OutcomeKind.NO_TOOL for o in outcomes),
        malformed=sum(o.kind == OutcomeKind.MALFORMED for o in outcomes),
    )
    return BenchmarkRun(outcomes=outcomes, ledger=ledger)


class RunMetadata(BaseModel):
    """What a run used, written next to its outcomes."""

    provider: str
    model: str
    mode: str
    parallel_tool_calls: bool
    structured_generation: bool
    per_collection_tools: bool
    rationale_required: bool
    seed: int
    temperature: float | None = None
    top_p: float | None = None
    dataset: str
    records: int
    started_at: datetime
    finished_at: datetime

    @classmethod
    def describe(
        cls,
        config: ProviderConfig,
        seed: int,
        dataset: Path,
        records: int,
        started_at: datetime,
    ) -> "RunMetadata":
        """Returns the metadata of a finished run."""
        return cls(
            provider=config.provider,
            model=config.model,
            mode=config.mode,
            parallel_tool_calls=config.parallel_tool_calls,
            structured_generation=config.structured_generation,
            per_collection_tools=config.per_collection_tools,
            rationale_required=config.rationale_required,
            seed=seed,
            temperature=config.temperature,
            top_p=config.top_p,
            dataset=str(dataset),
            records=records,
            started_at=started_at,
            finished_at=datetime.now(UTC),
        )


def write_outcomes(path: Path, outcomes: Sequence[PredictionOutcome]) -> None:
    """Writes outcomes as one JSON object per line."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as stream:
        for outcome in outcomes:
            stream.write(outcome.model_dump_json() + "\n")


def read_outcomes(path: Path) -> list[PredictionOutcome]:
    """Reads outcomes written by write_outcomes.

    Raises:
        OutcomeFileError: if the file is missing or a line is invalid.
    """
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise OutcomeFileError(f"Cannot read outcomes from {path}: {e}") from e

    outcomes: list[PredictionOutcome] = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            outcomes.append(PredictionOutcome.model_validate_json(line))
        except ValidationError as e:
            raise OutcomeFileError(f"{path}:{number}: invalid outcome: {e}") from e
    return outcomes


class JudgeRanking(BaseModel):
    """Rank of one anonymized candidate."""

    candidate: str
    rank: PositiveInt


class JudgeReply(BaseModel):
    """What the judge model returns."""

    rankings: list[JudgeRanking]
    explanation: str = ""


class JudgeVerdict(BaseModel):
    """Judge ranks of every model's answer to one record."""

    model_config = ConfigDict(frozen=True)

    record_id: str
    ranks: dict[str, PositiveInt]
    explanation: str = ""
    candidates: dict[str, list[str]] = Field(default_factory=dict)


def _candidate_text(outcome: PredictionOutcome) -> str:
    if outcome.kind == OutcomeKind.TOOL_CALL:
        return json.dumps(
            [q.to_arguments() for q in outcome.queries], sort_keys=True
        )
    if outcome.kind == OutcomeKind.NO_TOOL:
        return f"NO QUERY: {outcome.response_text or ''}"
    return "NO QUERY: malformed reply"


def _anonymize(outcomes: Mapping[str, PredictionOutcome]) -> dict[str, list[str]]:
    by_text: dict[str, list[str]] = {}
    for model, outcome in outcomes.items():
        by_text.setdefault(_candidate_text(outcome), []).append(model)
    if len(by_text) > len(string.ascii_uppercase):
        raise GeneratorFailure(
            f"Cannot label {len(by_text)} distinct candidates with single letters"
        )
    return {
        letter: models
        for letter, models in zip(string.ascii_uppercase, by_text.values(), strict=False)
    }


def _judge_prompt(record: DatasetRecord, texts: Mapping[str, str]) -> str:
    lines = [f"Request: {record.nl_command}", "", "Candidates:"]
    lines += [f"{letter}: {text}" for letter, text in texts.items()]
    return "\n".join(lines)


async def judge_predictions(
    record: DatasetRecord,
    outcomes: Mapping[str, PredictionOutcome],
    judge: ChatProvider,
    judge_model: str,
) -> JudgeVerdict:
    """Asks a judge model to rank the models' answers to one record.

    Identical answers are merged and shown under letters without model names;
    ranks map back to every model that produced the answer. A single distinct
    answer is ranked first without asking the judge.

    Args:
        record (DatasetRecord): the record.
        outcomes (Mapping[str, PredictionOutcome]): answers keyed by model.
        judge (ChatProvider): judge provider, live or replayed.
        judge_model (str): judge model name.

    Raises:
        GeneratorFailure: if the judge cannot be reached or its reply is unusable.

    Returns:
        JudgeVerdict: ranks per model with the judge's explanation.
    """
    candidates = _anonymize(outcomes)
    if len(candidates) <= 1:
        return JudgeVerdict(
            record_id=record.record_id,
            ranks=dict.fromkeys(outcomes, 1),
            explanation="All models produced the same answer.",
            candidates=candidates,
        )

    texts = {
        letter: _candidate_text(outcomes[models[0]])
        for letter, models in candidates.items()
    }
    request = ChatRequest(
        key=f"judge-{record.record_id}",
        model=judge_model,
        messages=(ChatMessage(role="user", content=_judge_prompt(record, texts)),),
        system=JUDGE_INSTRUCTIONS.format(count=len(candidates)),
        response_schema=JudgeReply.model_json_schema(),
    )
    try:
        response = await judge.complete(request)
        reply = JudgeReply.model_validate_json(response.text or "")
    except (ProviderError, ValidationError) as e:
        raise GeneratorFailure(
            f"Judge '{judge_model}' failed on record '{record.record_id}': {e}"
        ) from e

    given = {r.candidate: r.rank for r in reply.rankings}
    if set(given) != set(candidates) or max(given.values()) > len(candidates):
        raise GeneratorFailure(
            f"Judge '{judge_model}' ranked {sorted(given.items())} for record "
            f"'{record.record_id}', expected ranks 1..{len(candidates)} "
            f"for {', '.join(candidates)}"
        )

    ranks = {
        model: given[letter] for letter, models in candidates.items() for model in models
    }
    return JudgeVerdict(
        record_id=record.record_id,
        ranks={model: ranks[model] for model in outcomes},
        explanation=reply.explanation,
        candidates=candidates,
    )


def write_judgments(path: Path, verdicts: Sequence[JudgeVerdict]) -> None:
    """Writes judge verdicts as one JSON object per line."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        "".join(v.model_dump_json() + "\n" for v in verdicts), encoding="utf-8"
    )


def read_judgments(path: Path) -> list[JudgeVerdict]:
    """Reads judge verdicts written by write_judgments.

    Raises:
        OutcomeFileError: if the file is missing or a line is invalid.
    """
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
        return [JudgeVerdict.model_validate_json(line) for line in lines if line.strip()]
    except (OSError, ValidationError) as e:
        raise OutcomeFileError(f"Cannot read judgments from {path}: {e}") from e


def rank_lists(verdicts: Sequence[JudgeVerdict]) -> dict[str, list[int]]:
    """Collects every model's ranks across verdicts."""
    lists: dict[str, list[int]] = {}
    for verdict in verdicts:
        for model, rank in verdict.ranks.items():
            lists.setdefault(model, []).append(rank)
    return lists


def outcomes_by_record(
    runs: Sequence[Sequence[PredictionOutcome]],
) -> dict[str, dict[str, PredictionOutcome]]:
    """Regroups per-model outcomes into per-record answers keyed by model."""
    grouped: dict[str, dict[str, PredictionOutcome]] = {}
    for outcomes in runs:
        for outcome in outcomes:
            grouped.setdefault(outcome.record_id, {})[outcome.model] = outcome
    return grouped

"""Iterative impression refinement driven by Rouge-1 agreement with retrieved exemplars."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

from .backends import Backend, BackendError, CompletionResult
from .corpus import RadiologyReport
from .labeler import RuleSet, label_report
from .prompts import (
    DEFAULT_TOKEN_BUDGET,
    ExemplarReport,
    FeedbackExemplar,
    Polarity,
    Prompt,
    PromptTemplateConfig,
    build_dynamic_prompt,
    build_iterative_prompt,
)
from .rouge import mean_rouge1_against
from .similarity import LabelIndex, SearchConfig, top_k_similar


@dataclass(frozen=True)
class OptimizerConfig:
    """``good_capacity`` / ``bad_capacity`` of None mean "as many as fit the budget"."""

    n_similar: int = 15
    threshold: float = 0.7
    max_iterations: int = 17
    good_capacity: int | None = 1
    bad_capacity: int | None = None
    token_budget: int = DEFAULT_TOKEN_BUDGET
    early_stop_at: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.n_similar < 1:
            raise ValueError("n_similar must be >= 1")
        for name in ("good_capacity", "bad_capacity"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be >= 0 or None")


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    response: str
    score: float
    classification: Polarity
    prompt_messages: int = 0

    def to_dict(self) -> dict:
        return {
            "iter": self.iter,
            "response": self.response,
            "score": self.score,
            "classification": self.classification.value,
            "prompt_messages": self.prompt_messages,
        }


@dataclass
class OptimizationTrace:
    records: list[IterationRecord] = field(default_factory=list)
    exemplar_ids: list[str] = field(default_factory=list)
    prompt_tokens: int = 0
    completion_tokens: int = 0
    completions: list[CompletionResult] = field(default_factory=list)

    @property
    def best(self) -> IterationRecord | None:
        # first maximum wins on ties
        best = None
        for r in self.records:
            if best is None or r.score > best.score:
                best = r
        return best

    @property
    def final_response(self) -> str | None:
        return self.best.response if self.records else None

    @property
    def final_score(self) -> float | None:
        return self.best.score if self.records else None

    def to_dict(self) -> dict:
        return {
            "records": [r.to_dict() for r in self.records],
            "exemplar_ids": list(self.exemplar_ids),
            "final_response": self.final_response,
            "final_score": self.final_score,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
        }


class OptimizationError(BackendError):
    """A backend failure mid-run; ``trace`` holds the iterations completed so far."""

    def __init__(self, cause: BackendError, trace: OptimizationTrace):
        super().__init__(f"backend failed after {len(trace.records)} iteration(s): {cause}")
        self.trace = trace


@dataclass(frozen=True)
class FeedbackState:
    goods: tuple[FeedbackExemplar, ...] = ()
    bads: tuple[FeedbackExemplar, ...] = ()

    @property
    def empty(self) -> bool:
        return not self.goods and not self.bads

    def texts(self) -> set[str]:
        return {f.response for f in self.goods + self.bads}


def evaluate_response(response: str, exemplars: Sequence[ExemplarReport]) -> float:
    """Mean Rouge-1 F1 of ``response`` against the exemplar impressions.

    Only the retrieved exemplars are consulted; the test report's own
    reference impression is not an input.
    """
    if not exemplars:
        raise ValueError("at least one exemplar is required")
    return mean_rouge1_against(response, [e.impression for e in exemplars])


def classify(score: float, cfg: OptimizerConfig) -> Polarity:
    return Polarity.GOOD if score > cfg.threshold else Polarity.BAD


def update_feedback(state: FeedbackState, record: IterationRecord, cfg: OptimizerConfig) -> FeedbackState:
    if record.response in state.texts():
        return state
    fb = FeedbackExemplar(record.response, record.classification, record.score)
    if record.classification is Polarity.GOOD:
        cap = cfg.good_capacity
        if cap == 0:
            return state
        if cap == 1:
            if not state.goods or fb.score > state.goods[0].score:
                return replace(state, goods=(fb,))
            return state
        goods = state.goods + (fb,)
        if cap is not None:
            # keep the `cap` best, in arrival order
            keep = sorted(range(len(goods)), key=lambda i: (-goods[i].score, i))[:cap]
            goods = tuple(goods[i] for i in sorted(keep))
        return replace(state, goods=goods)
    cap = cfg.bad_capacity
    if cap == 0:
        return state
    bads = state.bads + (fb,)
    if cap is not None:
        bads = bads[-cap:]
    return replace(state, bads=bads)


def optimize(
    test_findings: str,
    exemplars: Sequence[ExemplarReport],
    backend: Backend,
    cfg: OptimizerConfig | None = None,
    template: PromptTemplateConfig | None = None,
    prompts_out: list[Prompt] | None = None,
) -> OptimizationTrace:
    """Run ``cfg.max_iterations`` generate/evaluate/feedback rounds for one report.

    Iteration 0 sends the few-shot prompt; later iterations send it extended
    with the current good/bad feedback (or unchanged while no feedback exists).
    The final answer is the highest-scoring response of the whole run.

    Raises:
        OptimizationError: wrapping a backend failure, with the partial trace.
    """
    cfg = cfg or OptimizerConfig()
    template = template or PromptTemplateConfig()
    dynamic = build_dynamic_prompt(test_findings, exemplars, template)
    trace = OptimizationTrace(exemplar_ids=[e.report_id for e in exemplars])
    state = FeedbackState()
    for it in range(cfg.max_iterations):
        if it == 0 or state.empty:
            prompt = dynamic
        else:
            goods = state.goods[0] if cfg.good_capacity == 1 and state.goods else state.goods
            prompt = build_iterative_prompt(dynamic, goods or None, state.bads, template, cfg.token_budget)
        if prompts_out is not None:
            prompts_out.append(prompt)
        try:
            result = backend.complete(prompt)
        except BackendError as exc:
            raise OptimizationError(exc, trace) from exc
        trace.completions.append(result)
        trace.prompt_tokens += result.prompt_tokens
        trace.completion_tokens += result.completion_tokens
        score = evaluate_response(result.text, exemplars)
        record = IterationRecord(it, result.text, score, classify(score, cfg), len(prompt))
        trace.records.append(record)
        state = update_feedback(state, record, cfg)
        if cfg.early_stop_at is not None and score >= cfg.early_stop_at:
            break
    return trace


def retrieve_exemplars(
    findings: str,
    corpus: dict[str, RadiologyReport] | Sequence[RadiologyReport],
    index: LabelIndex,
    search: SearchConfig,
    rules: RuleSet | None = None,
    query_id: str | None = None,
) -> list[ExemplarReport]:
    """Label ``findings`` and return the closest corpus reports as exemplars."""
    if not isinstance(corpus, dict):
        corpus = {r.id: r for r in corpus}
    query = label_report(findings, rules)
    hits = top_k_similar(query, index, search, query_id=query_id)
    out = []
    for rid, _ in hits:
        r = corpus[rid]
        out.append(ExemplarReport(r.findings, r.impression, rid))
    return out

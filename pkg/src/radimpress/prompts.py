"""Role-tagged chat prompts: the retrieval few-shot prompt and its feedback extension."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

FINDINGS_PLACEHOLDER = "{findings}"
DEFAULT_TOKEN_BUDGET = 3600


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


class Polarity(str, Enum):
    GOOD = "good"
    BAD = "bad"


class PromptError(ValueError):
    pass


class PromptBudgetError(PromptError):
    pass


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        if not self.content:
            raise PromptError("message content must be non-empty")

    def to_dict(self) -> dict:
        return {"role": self.role.value, "content": self.content}


@dataclass(frozen=True)
class Prompt:
    messages: tuple[ChatMessage, ...]

    def __post_init__(self):
        msgs = tuple(self.messages)
        object.__setattr__(self, "messages", msgs)
        if not msgs or msgs[0].role is not Role.SYSTEM:
            raise PromptError("prompt must start with a system message")
        if msgs[-1].role is not Role.USER:
            raise PromptError("prompt must end with a user message")

    def __len__(self) -> int:
        return len(self.messages)

    @property
    def roles(self) -> list[Role]:
        return [m.role for m in self.messages]

    def to_wire(self) -> list[dict]:
        return [m.to_dict() for m in self.messages]


@dataclass(frozen=True)
class ExemplarReport:
    findings: str
    impression: str
    report_id: str = ""

    def __post_init__(self):
        if not self.findings.strip() or not self.impression.strip():
            raise PromptError("exemplar findings and impression must be non-empty")


@dataclass(frozen=True)
class FeedbackExemplar:
    response: str
    polarity: Polarity
    score: float


@dataclass(frozen=True)
class PromptTemplateConfig:
    task_description: str = (
        "You are a chest radiologist. Summarize the FINDINGS of a chest radiology report "
        "into a concise IMPRESSION."
    )
    question_template: str = "Summarize the following FINDINGS into an IMPRESSION.\nFINDINGS: {findings}"
    good_preamble: str = "Below is an excellent impression of the FINDINGS above"
    bad_preamble: str = "Below is a negative impression of the FINDINGS above"
    optimization_rules: str = (
        "Regenerate the impression so it is consistent with the excellent impression "
        "and avoids the negative impression."
    )
    length_limit_sentence: str = "Keep the impression under {max_words} words."
    max_words: int = 60

    def __post_init__(self):
        n = self.question_template.count(FINDINGS_PLACEHOLDER)
        if n != 1:
            raise PromptError(f"question_template must contain exactly one {FINDINGS_PLACEHOLDER}, found {n}")

    def question(self, findings: str) -> str:
        # str.replace, not format(): findings may contain braces
        return self.question_template.replace(FINDINGS_PLACEHOLDER, findings)

    def length_limit(self) -> str:
        return self.length_limit_sentence.replace("{max_words}", str(self.max_words))


def load_template(path) -> PromptTemplateConfig:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    known = {f.name for f in fields(PromptTemplateConfig)}
    unknown = set(obj) - known
    if unknown:
        raise PromptError(f"unknown template fields: {sorted(unknown)}")
    return PromptTemplateConfig(**obj)


def save_template(cfg: PromptTemplateConfig, path) -> None:
    Path(path).write_text(json.dumps(asdict(cfg), indent=2) + "\n", encoding="utf-8")


def build_dynamic_prompt(
    test_findings: str,
    exemplars: Sequence[ExemplarReport],
    cfg: PromptTemplateConfig | None = None,
) -> Prompt:
    """System task description, one User/Assistant pair per exemplar, then the query."""
    cfg = cfg or PromptTemplateConfig()
    if not exemplars:
        raise PromptError("at least one exemplar is required")
    msgs = [ChatMessage(Role.SYSTEM, cfg.task_description)]
    for ex in exemplars:
        msgs.append(ChatMessage(Role.USER, cfg.question(ex.findings)))
        msgs.append(ChatMessage(Role.ASSISTANT, ex.impression))
    msgs.append(ChatMessage(Role.USER, cfg.question(test_findings)))
    return Prompt(tuple(msgs))


def estimate_tokens(prompt: Prompt | Iterable[ChatMessage]) -> int:
    """ceil(chars / 4) per message plus 4 tokens of per-message overhead."""
    messages = prompt.messages if isinstance(prompt, Prompt) else prompt
    return sum(math.ceil(len(m.content) / 4) + 4 for m in messages)


def _feedback_pair(fb: FeedbackExemplar, cfg: PromptTemplateConfig) -> list[ChatMessage]:
    preamble = cfg.good_preamble if fb.polarity is Polarity.GOOD else cfg.bad_preamble
    return [ChatMessage(Role.USER, preamble), ChatMessage(Role.ASSISTANT, fb.response)]


def build_iterative_prompt(
    dynamic: Prompt,
    good: FeedbackExemplar | Sequence[FeedbackExemplar] | None,
    bads: Sequence[FeedbackExemplar],
    cfg: PromptTemplateConfig | None = None,
    budget: int = DEFAULT_TOKEN_BUDGET,
) -> Prompt:
    """Insert feedback pairs before the final query and rewrite the query.

    Bad exemplars come first (oldest first) and the good one last, so the
    good response is the most recent in context. Oldest bad exemplars are
    dropped until the estimate fits ``budget``; good exemplars never are.

    Raises:
        PromptError: if there is no feedback at all.
        PromptBudgetError: if the prompt cannot fit even with every bad dropped.
    """
    cfg = cfg or PromptTemplateConfig()
    if good is None:
        goods: list[FeedbackExemplar] = []
    elif isinstance(good, FeedbackExemplar):
        goods = [good]
    else:
        goods = list(good)
    bads = list(bads)
    if not goods and not bads:
        raise PromptError("iterative prompt needs at least one good or bad exemplar")

    head = list(dynamic.messages[:-1])
    final = ChatMessage(
        Role.USER,
        "\n".join([cfg.optimization_rules, cfg.length_limit(), dynamic.messages[-1].content]),
    )
    good_msgs = [m for g in goods for m in _feedback_pair(g, cfg)]
    fixed_cost = estimate_tokens(head + good_msgs + [final])
    bad_costs = [estimate_tokens(_feedback_pair(b, cfg)) for b in bads]

    drop = 0
    while drop < len(bads) and fixed_cost + sum(bad_costs[drop:]) > budget:
        drop += 1
    kept = bads[drop:]
    if fixed_cost + sum(bad_costs[drop:]) > budget or not (kept or goods):
        raise PromptBudgetError(
            f"token budget {budget} too small: prompt needs {fixed_cost} without any bad exemplar"
        )
    bad_msgs = [m for b in kept for m in _feedback_pair(b, cfg)]
    return Prompt(tuple(head + bad_msgs + good_msgs + [final]))


def dump_prompt(prompt: Prompt, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_prompt(prompt), encoding="utf-8")


def dumps_prompt(prompt: Prompt) -> str:
    return "".join(json.dumps(m.to_dict(), ensure_ascii=False) + "\n" for m in prompt.messages)


def load_prompt(path) -> Prompt:
    msgs = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            obj = json.loads(line)
            msgs.append(ChatMessage(Role(obj["role"]), obj["content"]))
    return Prompt(tuple(msgs))

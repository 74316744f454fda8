"""Retrieval-driven few-shot prompting with Rouge-feedback refinement for radiology impressions."""
from .corpus import (
    CorpusStats,
    MissingSection,
    RadiologyReport,
    compute_stats,
    filter_eligible,
    load_corpus,
    parse_report,
    save_corpus,
)
from .labeler import LabelCode, RuleSet, default_rules, label_report, load_rules
from .optimizer import OptimizationTrace, OptimizerConfig, classify, evaluate_response, optimize
from .prompts import (
    ChatMessage,
    ExemplarReport,
    FeedbackExemplar,
    Polarity,
    Prompt,
    PromptTemplateConfig,
    Role,
    build_dynamic_prompt,
    build_iterative_prompt,
    estimate_tokens,
)
from .rouge import RougeScore, mean_rouge1_against, rouge_l, rouge_n, tokenize
from .similarity import IndexEntry, LabelIndex, SearchConfig, euclidean_distance, systematic_sample, top_k_similar

__version__ = "0.1.0"

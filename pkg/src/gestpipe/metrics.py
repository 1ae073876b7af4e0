"""Corpus text-similarity metrics: BLEU@4 and ROUGE-L.

Pinned conventions (the fidelity contract, cross-checked against independent
reference implementations in the test suite):

- tokenizer: lowercase, punctuation split into its own tokens, whitespace split;
- BLEU: modified n-gram precisions n=1..4 with max-clip over references,
  brevity penalty against the closest reference length (ties to the shorter),
  add-one smoothing applied only to zero higher-order (n >= 2) counts, and a
  zero score when there is no unigram overlap;
- ROUGE-L: LCS precision/recall with balanced F1; multi-reference by max F1.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

_PUNCT_RE = re.compile(r"([^\w\s])")

Tokens = Sequence[str]


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace after separating punctuation."""
    return _PUNCT_RE.sub(r" \1 ", text.lower()).split()


def _ngram_counts(tokens: Tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate: Tokens, references: Sequence[Tokens]) -> float:
    """BLEU@4 for one candidate against one or more references, in [0, 1]."""
    m = len(candidate)
    if m == 0 or not references:
        return 0.0

    log_precision_sum = 0.0
    for n in range(1, 5):
        cand_counts = _ngram_counts(candidate, n)
        max_ref_counts: Counter = Counter()
        for ref in references:
            for ngram, count in _ngram_counts(ref, n).items():
                if count > max_ref_counts[ngram]:
                    max_ref_counts[ngram] = count
        clipped = sum(min(count, max_ref_counts[ngram]) for ngram, count in cand_counts.items())
        total = max(m - n + 1, 0)
        if n == 1:
            if clipped == 0:
                return 0.0
            precision = clipped / total
        elif clipped == 0:
            precision = (clipped + 1) / (total + 1)
        else:
            precision = clipped / total
        log_precision_sum += math.log(precision) / 4.0

    ref_length = min((len(ref) for ref in references), key=lambda r: (abs(r - m), r))
    brevity = 1.0 if m > ref_length else math.exp(1.0 - ref_length / m)
    return brevity * math.exp(log_precision_sum)


def _lcs_length(a: Tokens, b: Tokens) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for token_a in a:
        current = [0]
        for j, token_b in enumerate(b, start=1):
            if token_a == token_b:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(candidate: Tokens, reference: Tokens) -> tuple[float, float, float]:
    """(precision, recall, F1) from the longest common subsequence."""
    if not candidate or not reference:
        return (0.0, 0.0, 0.0)
    lcs = _lcs_length(candidate, reference)
    if lcs == 0:
        return (0.0, 0.0, 0.0)
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    f1 = 2 * precision * recall / (precision + recall)
    return (precision, recall, f1)


def rouge_l_best(candidate: Tokens, references: Sequence[Tokens]) -> tuple[float, float, float]:
    """Multi-reference ROUGE-L: the (P, R, F1) triple of the max-F1 reference."""
    best = (0.0, 0.0, 0.0)
    for ref in references:
        triple = rouge_l(candidate, ref)
        if triple[2] > best[2]:
            best = triple
    return best


# ---------------------------------------------------------------------------
# Corpus evaluation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalPair:
    candidate: str
    references: tuple[str, ...]
    video_id: str

    def __post_init__(self) -> None:
        if not self.references:
            raise ValueError(f"EvalPair for {self.video_id!r} has no references")


@dataclass(frozen=True)
class EvalRow:
    video_id: str
    group: str
    bleu4: float
    rouge_p: float
    rouge_r: float
    rouge_f1: float


@dataclass(frozen=True)
class MetricMeans:
    bleu4: float
    rouge_p: float
    rouge_r: float
    rouge_f1: float
    count: int


@dataclass
class EvalReport:
    rows: list[EvalRow] = field(default_factory=list)
    group_means: dict[str, MetricMeans] = field(default_factory=dict)
    overall: MetricMeans | None = None

    def to_tsv(self) -> str:
        lines = ["video_id\tgroup\tbleu4\trouge_p\trouge_r\trouge_f1"]
        for row in self.rows:
            lines.append(
                f"{row.video_id}\t{row.group}\t{row.bleu4:.6f}\t{row.rouge_p:.6f}"
                f"\t{row.rouge_r:.6f}\t{row.rouge_f1:.6f}"
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        if not self.rows:
            return "evaluation report: no pairs\n"
        lines = [f"evaluation report: {len(self.rows)} video(s)"]
        for group in sorted(self.group_means):
            means = self.group_means[group]
            lines.append(
                f"  {group} (n={means.count}): bleu4={means.bleu4:.4f} "
                f"rouge_p={means.rouge_p:.4f} rouge_r={means.rouge_r:.4f} rouge_f1={means.rouge_f1:.4f}"
            )
        assert self.overall is not None
        lines.append(
            f"  overall (n={self.overall.count}): bleu4={self.overall.bleu4:.4f} "
            f"rouge_p={self.overall.rouge_p:.4f} rouge_r={self.overall.rouge_r:.4f} "
            f"rouge_f1={self.overall.rouge_f1:.4f}"
        )
        return "\n".join(lines) + "\n"


def _means(rows: Iterable[EvalRow]) -> MetricMeans:
    rows = list(rows)
    n = len(rows)
    return MetricMeans(
        bleu4=sum(r.bleu4 for r in rows) / n,
        rouge_p=sum(r.rouge_p for r in rows) / n,
        rouge_r=sum(r.rouge_r for r in rows) / n,
        rouge_f1=sum(r.rouge_f1 for r in rows) / n,
        count=n,
    )


def evaluate_corpus(pairs: Sequence[EvalPair], grouping: Mapping[str, str] | None = None) -> EvalReport:
    """Per-video metrics plus per-group and overall arithmetic means.

    ``grouping`` maps video ids to a dataset key; unmapped videos fall into
    the "all" group. An empty pair list yields an empty report.
    """
    rows = []
    for pair in pairs:
        cand_tokens = tokenize(pair.candidate)
        ref_tokens = [tokenize(ref) for ref in pair.references]
        b = bleu4(cand_tokens, ref_tokens)
        p, r, f1 = rouge_l_best(cand_tokens, ref_tokens)
        group = grouping.get(pair.video_id, "all") if grouping else "all"
        rows.append(EvalRow(pair.video_id, group, b, p, r, f1))
    rows.sort(key=lambda row: (row.group, row.video_id))
    if not rows:
        return EvalReport()
    by_group: dict[str, list[EvalRow]] = {}
    for row in rows:
        by_group.setdefault(row.group, []).append(row)
    return EvalReport(
        rows=rows,
        group_means={group: _means(group_rows) for group, group_rows in by_group.items()},
        overall=_means(rows),
    )

"""Independent reference implementations used as test oracles.

Everything here is deliberately written with different data structures and
algorithms than the package code it checks: exhaustive scans instead of
sliding windows, fixpoint interval merging instead of single-pass folding,
Fraction arithmetic for BLEU, a full DP table for the LCS, and a standalone
recursive-descent grammar checker for DOT output.
"""

from __future__ import annotations

import math
from fractions import Fraction


# ---------------------------------------------------------------------------
# Temporal voting: O(n * w) exhaustive window scan
# ---------------------------------------------------------------------------


def vote_oracle(observations, radius: int, min_count: int):
    """Survivors of the single-pass vote, by scanning the whole stream per item.

    ``observations`` is any sequence with person_id / label / frame_index
    attributes; the result preserves input order.
    """
    survivors = []
    for obs in observations:
        window_frames = set()
        for other in observations:
            if other.person_id != obs.person_id or other.label != obs.label:
                continue
            if abs(other.frame_index - obs.frame_index) <= radius:
                window_frames.add(other.frame_index)
        if len(window_frames) >= min_count:
            survivors.append(obs)
    return survivors


# ---------------------------------------------------------------------------
# Event aggregation + unification: exhaustive interval merging
# ---------------------------------------------------------------------------


def aggregate_unify_oracle(observations, unify_max_gap: int, min_presence: float):
    """Expected events as a set of comparable tuples.

    Returns {(person_id, label, start, end, candidates)} where candidates is a
    frozenset of (object_label, presence) pairs. Runs of consecutive frames
    become intervals; same-key intervals merge under the gap rule until no
    merge applies (true fixpoint); presence is recomputed over final spans.
    """
    streams: dict[tuple[int, str], dict[int, set[str]]] = {}
    for obs in observations:
        per_frame = streams.setdefault((obs.person_id, obs.label), {})
        per_frame.setdefault(obs.frame_index, set()).update(obs.objects)

    expected = set()
    for (person_id, label), per_frame in streams.items():
        frames = sorted(per_frame)
        intervals = []
        start = prev = frames[0]
        for frame in frames[1:]:
            if frame - prev > 1:
                intervals.append((start, prev))
                start = frame
            prev = frame
        intervals.append((start, prev))

        # runs of consecutive frames are disjoint and sorted, so the merge
        # closure is exactly: fuse neighbours while the gap stays in bounds
        fused = [intervals[0]]
        for start, end in intervals[1:]:
            prev_start, prev_end = fused[-1]
            if 0 <= start - prev_end <= unify_max_gap:
                fused[-1] = (prev_start, max(prev_end, end))
            else:
                fused.append((start, end))
        intervals = fused

        for start, end in intervals:
            span = end - start + 1
            counts: dict[str, int] = {}
            for frame in range(start, end + 1):
                for obj in per_frame.get(frame, ()):
                    counts[obj] = counts.get(obj, 0) + 1
            candidates = frozenset(
                (obj, count / span) for obj, count in counts.items() if count / span >= min_presence
            )
            expected.add((person_id, label, start, end, candidates))
    return expected


# ---------------------------------------------------------------------------
# Actor grouping: naive run-length reference
# ---------------------------------------------------------------------------


def grouping_oracle(sorted_person_ids):
    """Run-length encode a person-id sequence into (person_id, run_length)."""
    runs = []
    for person_id in sorted_person_ids:
        if runs and runs[-1][0] == person_id:
            runs[-1] = (person_id, runs[-1][1] + 1)
        else:
            runs.append((person_id, 1))
    return runs


# ---------------------------------------------------------------------------
# BLEU@4: Fraction arithmetic, list-based n-gram counting
# ---------------------------------------------------------------------------


def bleu4_oracle(candidate, references):
    m = len(candidate)
    if m == 0 or not references:
        return 0.0

    product = Fraction(1)
    for n in range(1, 5):
        cand_ngrams = [tuple(candidate[i : i + n]) for i in range(m - n + 1)]
        clipped = 0
        for gram in set(cand_ngrams):
            best_ref = 0
            for ref in references:
                ref_ngrams = [tuple(ref[i : i + n]) for i in range(len(ref) - n + 1)]
                best_ref = max(best_ref, ref_ngrams.count(gram))
            clipped += min(cand_ngrams.count(gram), best_ref)
        denom = max(m - n + 1, 0)
        if n == 1:
            if clipped == 0:
                return 0.0
            product *= Fraction(clipped, denom)
        elif clipped == 0:
            product *= Fraction(1, denom + 1)
        else:
            product *= Fraction(clipped, denom)

    ref_lengths = sorted((len(ref) for ref in references), key=lambda r: (abs(r - m), r))
    closest = ref_lengths[0]
    brevity = 1.0 if m > closest else math.exp(1.0 - closest / m)
    return brevity * float(product) ** 0.25


def rouge_l_oracle(candidate, reference):
    """(P, R, F1) via the classic full DP table."""
    if not candidate or not reference:
        return (0.0, 0.0, 0.0)
    rows, cols = len(candidate), len(reference)
    table = [[0] * (cols + 1) for _ in range(rows + 1)]
    for i in range(1, rows + 1):
        for j in range(1, cols + 1):
            if candidate[i - 1] == reference[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    lcs = table[rows][cols]
    if lcs == 0:
        return (0.0, 0.0, 0.0)
    p = lcs / rows
    r = lcs / cols
    return (p, r, 2 * p * r / (p + r))


# ---------------------------------------------------------------------------
# DOT grammar checker (subset: digraph with node/edge statements + attrs)
# ---------------------------------------------------------------------------


class DotSyntaxError(ValueError):
    pass


def _tokenize_dot(text: str):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        char = text[i]
        if char.isspace():
            i += 1
            continue
        if char == '"':
            j = i + 1
            while j < n:
                if text[j] == "\\":
                    if j + 1 >= n:
                        raise DotSyntaxError("dangling escape in string")
                    j += 2
                    continue
                if text[j] == '"':
                    break
                j += 1
            if j >= n:
                raise DotSyntaxError("unterminated quoted string")
            tokens.append(("STR", text[i : j + 1]))
            i = j + 1
            continue
        if char in "{}[];,=":
            tokens.append((char, char))
            i += 1
            continue
        if text.startswith("->", i):
            tokens.append(("EDGE", "->"))
            i += 2
            continue
        if char.isalnum() or char == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_."):
                j += 1
            tokens.append(("ID", text[i:j]))
            i = j
            continue
        raise DotSyntaxError(f"unexpected character {char!r} at offset {i}")
    return tokens


def check_dot(text: str) -> None:
    """Raise DotSyntaxError unless ``text`` is a well-formed DOT digraph."""
    tokens = _tokenize_dot(text)
    pos = 0

    def peek():
        return tokens[pos][0] if pos < len(tokens) else None

    def take(expected_kind=None, expected_value=None):
        nonlocal pos
        if pos >= len(tokens):
            raise DotSyntaxError(f"unexpected end of input, wanted {expected_kind}")
        kind, value = tokens[pos]
        if expected_kind is not None and kind != expected_kind:
            raise DotSyntaxError(f"expected {expected_kind}, got {kind} {value!r}")
        if expected_value is not None and value != expected_value:
            raise DotSyntaxError(f"expected {expected_value!r}, got {value!r}")
        pos += 1
        return value

    def take_name():
        if peek() in ("ID", "STR"):
            return take()
        raise DotSyntaxError(f"expected identifier, got {peek()}")

    def attr_list():
        take("[")
        if peek() != "]":
            while True:
                take_name()
                take("=")
                take_name()
                if peek() == ",":
                    take(",")
                    continue
                break
        take("]")

    keyword = take("ID")
    if keyword != "digraph":
        raise DotSyntaxError(f"expected 'digraph', got {keyword!r}")
    if peek() in ("ID", "STR"):
        take()
    take("{")
    while peek() != "}":
        take_name()
        while peek() == "EDGE":
            take("EDGE")
            take_name()
        if peek() == "[":
            attr_list()
        if peek() == ";":
            take(";")
    take("}")
    if pos != len(tokens):
        raise DotSyntaxError("trailing tokens after closing brace")

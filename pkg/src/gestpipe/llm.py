"""Prompt assembly and completion execution.

Three prompt builders (description, scene, jury) plus a small HTTP client for
chat-completions style endpoints. The client supports live, record, and
replay modes; replay keys responses by a content hash of the bundle so tests
run with no network. Credentials come from a named environment variable and
are never logged or serialized.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from gestpipe.protolang import ProtoDocument

logger = logging.getLogger(__name__)

DEFAULT_TOKEN_BUDGET = 32768

#: Normative system instructions for the final-description prompt. The model
#: rewrites the proto-language naturally, resolves each object menu (at most
#: one pick, a new object, or none), and may rename or drop actions that do
#: not fit the context.
DESCRIPTION_INSTRUCTIONS = """\
You are given a schematic description of a video. It lists, per person and in
chronological order, the actions performed, their time spans in seconds, and
for some actions a menu of objects that might be involved, written as
"possibly involving: a | b | c".

Rewrite it as a natural, fluent, and accurate description of the video:
- Keep every person distinct and do not invent additional people.
- For each object menu, pick at most the single most plausible object for the
  context. You may pick a new object that is not present in the list,
  or you may not pick an object at all.
- You may change the name of an action, or you may delete an action and
  everything tied to it, if it does not fit the context.
- Keep the order of events and their relative timing; do not quote frame
  numbers or raw second values verbatim unless natural.
- Write one flowing paragraph, no lists or headings.
"""

#: Scene-classification instruction, sent to a small vision-language model.
SCENE_PROMPT = (
    "In what scene does the action take place? Simply name the scene with no "
    "further explanations. Use very few words, just like a classification "
    "task, e.g., classroom, park, football field, mountain trail, living "
    "room, street."
)

JURY_FRAME_COUNT = 10

_JURY_INSTRUCTIONS = """\
You are shown {frame_count} uniformly sampled frames from one video and
{candidate_count} candidate descriptions of that video, labeled {labels}.
Rank the descriptions from best to worst based on richness and factual
correctness, and give each one a score between 1 and 10 (10 is best).

Answer in exactly this format:
RANKING: <labels from best to worst separated by " > ">
SCORE <label>: <integer 1-10>   (one line per label)
"""


class PromptBudgetError(ValueError):
    """User content exceeds the configured token-estimate budget."""


class EmptyProtoError(ValueError):
    """Nothing to describe: the proto document has no statements."""


class CompletionError(RuntimeError):
    """Base class for completion failures."""


class CompletionTimeoutError(CompletionError):
    pass


class CompletionHTTPError(CompletionError):
    def __init__(self, status: int, detail: str = ""):
        super().__init__(f"endpoint returned status {status}{': ' + detail if detail else ''}")
        self.status = status


class MissingCredentialError(CompletionError):
    pass


class ReplayMissError(CompletionError):
    """No recorded response for this bundle in replay mode."""


@dataclass(frozen=True)
class PromptBundle:
    system_instructions: str
    user_content: str
    attachments: tuple[str, ...] | None = None

    def content_hash(self) -> str:
        payload = json.dumps(
            {
                "system": self.system_instructions,
                "user": self.user_content,
                "attachments": list(self.attachments) if self.attachments else None,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionConfig:
    endpoint_url: str = "http://localhost:8000/v1/chat/completions"
    model_name: str = "default"
    api_key_env_name: str | None = None
    temperature: float = 0.7
    max_output_tokens: int = 1024
    timeout: float = 60.0
    retry_count: int = 2
    retry_backoff: float = 0.5
    max_concurrency: int = 4


def estimate_tokens(text: str) -> int:
    """Cheap length-based token estimate used for budget checks."""
    return math.ceil(len(text) / 4)


def _check_budget(user_content: str, token_budget: int) -> None:
    estimated = estimate_tokens(user_content)
    if estimated > token_budget:
        raise PromptBudgetError(f"user content estimates to {estimated} tokens, budget is {token_budget}")


def build_description_prompt(proto: ProtoDocument, token_budget: int = DEFAULT_TOKEN_BUDGET) -> PromptBundle:
    """Prompt that turns a proto document into the final description."""
    if not proto.statements:
        raise EmptyProtoError("proto document has no statements to describe")
    user_content = proto.to_text()
    _check_budget(user_content, token_budget)
    return PromptBundle(system_instructions=DESCRIPTION_INSTRUCTIONS, user_content=user_content)


def build_scene_prompt() -> str:
    """Constant scene-classification instruction."""
    return SCENE_PROMPT


def candidate_label(index: int) -> str:
    """Display label for the candidate at a shuffled position: A, B, ... Z, AA..."""
    letters = ""
    index += 1
    while index:
        index, rem = divmod(index - 1, 26)
        letters = chr(ord("A") + rem) + letters
    return letters


def build_jury_prompt(
    frame_refs: list[str],
    candidates: list[str],
    seed: int = 0,
    token_budget: int = DEFAULT_TOKEN_BUDGET,
) -> tuple[PromptBundle, tuple[int, ...]]:
    """Ranking prompt over anonymized, seed-shuffled candidate descriptions.

    Requires exactly ten frame references and at least two candidates.
    Returns the bundle and the permutation used: ``permutation[i]`` is the
    original index of the candidate displayed at position i. Feed it to
    :func:`depermute_ranking` to de-bias the response.
    """
    if len(frame_refs) != JURY_FRAME_COUNT:
        raise ValueError(f"expected exactly {JURY_FRAME_COUNT} frame references, got {len(frame_refs)}")
    if len(candidates) < 2:
        raise ValueError(f"need at least 2 candidate descriptions, got {len(candidates)}")
    permutation = list(range(len(candidates)))
    random.Random(seed).shuffle(permutation)
    labels = [candidate_label(i) for i in range(len(candidates))]
    sections = [
        f"Description {label}:\n{candidates[original]}"
        for label, original in zip(labels, permutation)
    ]
    user_content = "\n\n".join(sections)
    _check_budget(user_content, token_budget)
    instructions = _JURY_INSTRUCTIONS.format(
        frame_count=JURY_FRAME_COUNT,
        candidate_count=len(candidates),
        labels=", ".join(labels),
    )
    bundle = PromptBundle(
        system_instructions=instructions,
        user_content=user_content,
        attachments=tuple(frame_refs),
    )
    return bundle, tuple(permutation)


def label_to_position(label: str) -> int:
    """Inverse of :func:`candidate_label`."""
    position = 0
    for char in label:
        position = position * 26 + (ord(char) - ord("A") + 1)
    return position - 1


def depermute_ranking(permutation: tuple[int, ...], ranked_labels: list[str]) -> list[int]:
    """Map a best-to-worst label ranking back to original candidate indexes."""
    return [permutation[label_to_position(label)] for label in ranked_labels]


def parse_jury_response(text: str, candidate_count: int) -> tuple[list[str], dict[str, int]]:
    """Parse the documented RANKING / SCORE response format (nothing fancier)."""
    ranking: list[str] = []
    scores: dict[str, int] = {}
    for line in text.splitlines():
        line = line.strip()
        if line.upper().startswith("RANKING:"):
            ranking = [part.strip() for part in line.split(":", 1)[1].split(">") if part.strip()]
        elif line.upper().startswith("SCORE "):
            head, _, value = line.partition(":")
            label = head.split()[1].strip()
            try:
                scores[label] = int(value.strip())
            except ValueError:
                continue
    if len(ranking) != candidate_count:
        raise ValueError(f"expected a ranking of {candidate_count} labels, parsed {ranking}")
    return ranking, scores


class ReplayStore:
    """Directory of recorded responses keyed by bundle content hash."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def _path(self, bundle: PromptBundle) -> Path:
        return self.directory / f"{bundle.content_hash()}.json"

    def get(self, bundle: PromptBundle) -> str | None:
        path = self._path(bundle)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["response"]

    def put(self, bundle: PromptBundle, response: str) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self._path(bundle)
        path.write_text(json.dumps({"response": response}, ensure_ascii=False, indent=2), encoding="utf-8")
        return path


_RETRYABLE_STATUSES = frozenset({408, 429, 500, 502, 503, 504})


class CompletionClient:
    """Execute prompt bundles against a chat-completions HTTP endpoint.

    Modes: ``live`` (network only), ``replay`` (recorded responses only; a
    miss is an error), ``record`` (network, then persist the response).
    """

    def __init__(self, cfg: CompletionConfig, mode: str = "live", replay: ReplayStore | None = None):
        if mode not in ("live", "replay", "record"):
            raise ValueError(f"unknown completion mode {mode!r}")
        if mode in ("replay", "record") and replay is None:
            raise ValueError(f"mode {mode!r} requires a replay store")
        self.cfg = cfg
        self.mode = mode
        self.replay = replay
        self._semaphore = threading.Semaphore(cfg.max_concurrency)

    def complete(self, bundle: PromptBundle) -> str:
        if self.mode == "replay":
            response = self.replay.get(bundle)
            if response is None:
                raise ReplayMissError(f"no recorded response for bundle {bundle.content_hash()[:12]}")
            return response
        text = self._complete_live(bundle)
        if self.mode == "record":
            self.replay.put(bundle, text)
        return text

    def _api_key(self) -> str | None:
        if not self.cfg.api_key_env_name:
            return None
        key = os.environ.get(self.cfg.api_key_env_name)
        if not key:
            raise MissingCredentialError(
                f"environment variable {self.cfg.api_key_env_name} is not set"
            )
        return key

    def _payload(self, bundle: PromptBundle) -> dict:
        if bundle.attachments:
            content: object = [{"type": "text", "text": bundle.user_content}] + [
                {"type": "image_url", "image_url": {"url": ref}} for ref in bundle.attachments
            ]
        else:
            content = bundle.user_content
        return {
            "model": self.cfg.model_name,
            "messages": [
                {"role": "system", "content": bundle.system_instructions},
                {"role": "user", "content": content},
            ],
            "temperature": self.cfg.temperature,
            "max_tokens": self.cfg.max_output_tokens,
        }

    def _complete_live(self, bundle: PromptBundle) -> str:
        key = self._api_key()
        headers = {"Content-Type": "application/json"}
        if key is not None:
            headers["Authorization"] = f"Bearer {key}"
        payload = self._payload(bundle)

        attempts = self.cfg.retry_count + 1
        last_error: CompletionError | None = None
        for attempt in range(attempts):
            if attempt:
                delay = self.cfg.retry_backoff * (2 ** (attempt - 1))
                logger.info("retrying completion (attempt %d/%d) after %.2fs", attempt + 1, attempts, delay)
                time.sleep(delay)
            try:
                with self._semaphore:
                    response = requests.post(
                        self.cfg.endpoint_url,
                        json=payload,
                        headers=headers,
                        timeout=self.cfg.timeout,
                    )
            except requests.Timeout:
                last_error = CompletionTimeoutError(f"timed out after {self.cfg.timeout}s")
                continue
            except requests.RequestException as exc:
                last_error = CompletionError(f"request failed: {exc.__class__.__name__}")
                continue
            if response.status_code == 200:
                return self._extract_text(response)
            if response.status_code in _RETRYABLE_STATUSES:
                last_error = CompletionHTTPError(response.status_code)
                continue
            raise CompletionHTTPError(response.status_code, response.text[:200])
        assert last_error is not None
        raise last_error

    @staticmethod
    def _extract_text(response: requests.Response) -> str:
        try:
            data = response.json()
            return data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise CompletionError(f"malformed completion response: {exc.__class__.__name__}") from None

"""Conversations, providers, and structured-output extraction.

Two providers ship in the box: a generic HTTP chat-completion client
(OpenAI-compatible wire shape, key from ``CHECKMATE_LLM_API_KEY``,
temperature 0) and a scripted replay provider that serves canned
responses from a JSON array, in order, for offline and deterministic
runs.  A conversation is an append-only message list; ``send`` appends
the user turn and the provider's reply atomically, retrying transient
provider failures with exponential backoff.
"""

import json
import os
import threading
import time
from dataclasses import dataclass, field

from .errors import (
    NoJsonFound,
    ProviderError,
    RetriesExhausted,
    SchemaMismatch,
    ScriptExhausted,
)

DEFAULT_TEMPERATURE = 0.0
API_KEY_ENV = "CHECKMATE_LLM_API_KEY"


@dataclass(frozen=True)
class Message:
    role: str  # "system" | "user" | "assistant"
    text: str


@dataclass(frozen=True)
class LlmResponse:
    text: str
    usage: dict = None
    provider_meta: dict = None


@dataclass
class Conversation:
    id: str
    provider_tag: str
    messages: list = field(default_factory=list)

    def transcript(self):
        return [{"role": m.role, "text": m.text} for m in self.messages]


class TransientProviderError(ProviderError):
    """Provider failure worth retrying (connectivity, 429, 5xx)."""


class ScriptedProvider:
    """Replays responses from a list; raises ScriptExhausted when empty.

    The script file format is a JSON array of strings.  A single script
    may be shared by several conversations; responses are consumed
    globally in order, guarded by a lock.
    """

    tag = "scripted"

    def __init__(self, responses):
        self._responses = list(responses)
        self._lock = threading.Lock()
        self.consumed = 0

    @classmethod
    def from_file(cls, path):
        from pathlib import Path

        data = json.loads(Path(path).read_text())
        if not isinstance(data, list) or not all(isinstance(r, str) for r in data):
            raise ProviderError(f"script {path} must be a JSON array of strings")
        return cls(data)

    @property
    def remaining(self):
        return len(self._responses) - self.consumed

    def complete(self, messages):
        with self._lock:
            if self.consumed >= len(self._responses):
                raise ScriptExhausted()
            text = self._responses[self.consumed]
            self.consumed += 1
        return LlmResponse(text=text, usage=None, provider_meta={"index": self.consumed - 1})


class HttpProvider:
    """Minimal chat-completion client over HTTP.

    POSTs ``{base_url}/chat/completions`` with the usual message array.
    The API key comes from the CHECKMATE_LLM_API_KEY environment
    variable unless given explicitly.  ``post`` is injectable for tests.
    """

    tag = "http"

    def __init__(self, base_url, model, api_key=None, temperature=DEFAULT_TEMPERATURE,
                 timeout=120.0, post=None):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.temperature = temperature
        self.timeout = timeout
        if post is None:
            import requests

            post = requests.post
        self._post = post

    def complete(self, messages):
        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": m.role, "content": m.text} for m in messages],
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout,
            )
        except Exception as exc:  # connectivity problems are retryable
            raise TransientProviderError(f"request failed: {exc}")
        if resp.status_code in (429, 500, 502, 503, 504):
            raise TransientProviderError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except Exception as exc:
            raise ProviderError(f"malformed completion payload: {exc}")
        return LlmResponse(
            text=text,
            usage=body.get("usage"),
            provider_meta={"model": body.get("model", self.model)},
        )


def start_conversation(system_text, provider, conv_id):
    """New conversation seeded with a non-empty system message."""
    if not system_text or not system_text.strip():
        raise ProviderError("system prompt must be non-empty")
    conv = Conversation(id=conv_id, provider_tag=provider.tag)
    conv.provider = provider
    conv.messages.append(Message(role="system", text=system_text))
    return conv


def send(conv, user_text, max_retries=3, backoff=0.5, sleep=time.sleep):
    """Append the user turn, obtain the assistant reply, append it.

    Transient provider failures retry with exponential backoff up to
    ``max_retries`` extra attempts; the conversation is only mutated
    once a reply is in hand, so a failed send leaves it unchanged.
    """
    provider = conv.provider
    pending = conv.messages + [Message(role="user", text=user_text)]
    attempt = 0
    while True:
        try:
            response = provider.complete(pending)
            break
        except TransientProviderError as exc:
            attempt += 1
            if attempt > max_retries:
                raise RetriesExhausted(attempt, exc)
            sleep(backoff * (2 ** (attempt - 1)))
    conv.messages.append(Message(role="user", text=user_text))
    conv.messages.append(Message(role="assistant", text=response.text))
    return response


def conversation_to_dict(conv):
    return {
        "id": conv.id,
        "provider": conv.provider_tag,
        "messages": conv.transcript(),
    }


# -- structured output extraction ------------------------------------------

SCHEMAS = ("function_selection", "approximation_output", "makefile")

_DECISIONS = {"approximate": "approximate", "do not approximate": "do_not_approximate"}


def _balanced_objects(text):
    """Yield every balanced {...} substring, left to right, outermost
    first, honoring JSON string escapes."""
    i, n = 0, len(text)
    while i < n:
        if text[i] != "{":
            i += 1
            continue
        depth = 0
        in_string = False
        escaped = False
        for j in range(i, n):
            c = text[j]
            if in_string:
                if escaped:
                    escaped = False
                elif c == "\\":
                    escaped = True
                elif c == '"':
                    in_string = False
                continue
            if c == '"':
                in_string = True
            elif c == "{":
                depth += 1
            elif c == "}":
                depth -= 1
                if depth == 0:
                    yield text[i:j + 1]
                    break
        i += 1


def first_json_object(text):
    """First balanced, parseable JSON object in ``text`` and its offset."""
    for candidate in _balanced_objects(text):
        try:
            obj = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj, text.index(candidate)
    raise NoJsonFound()


def _strip_fences(text):
    lines = text.strip().splitlines()
    if lines and lines[0].startswith("```"):
        lines = lines[1:]
        if lines and lines[-1].strip() == "```":
            lines = lines[:-1]
    return "\n".join(lines)


def _check_selection(obj):
    if "target_functions" not in obj:
        raise SchemaMismatch("target_functions")
    targets = obj["target_functions"]
    if not isinstance(targets, dict) or not targets:
        raise SchemaMismatch("target_functions", "must be a non-empty object")
    normalized = {}
    for name, decision in targets.items():
        key = str(decision).strip().lower()
        if key not in _DECISIONS:
            raise SchemaMismatch(
                "target_functions",
                f'{name}: decision must be "approximate" or "do not approximate"',
            )
        normalized[name] = _DECISIONS[key]
    summary = obj.get("code_summary", {})
    if not isinstance(summary, dict):
        raise SchemaMismatch("code_summary", "must be an object")
    return {"target_functions": normalized, "code_summary": dict(summary)}


def _normalize_knob_map(value, field_name):
    """Accept Listing-5 style [{name: v}, ...] or a flat {name: v} map."""
    if isinstance(value, dict):
        return dict(value)
    if isinstance(value, list):
        out = {}
        for entry in value:
            if not isinstance(entry, dict) or len(entry) != 1:
                raise SchemaMismatch(field_name, "entries must be single-key objects")
            ((k, v),) = entry.items()
            if k in out:
                raise SchemaMismatch(field_name, f"duplicate knob {k!r}")
            out[k] = v
        return out
    raise SchemaMismatch(field_name, "must be a list of single-key objects or an object")


def _check_approximation(obj):
    for key in ("apx_code", "knob_variables", "knob_ranges", "knob_increments"):
        if key not in obj:
            raise SchemaMismatch(key)
    if not isinstance(obj["apx_code"], str) or not obj["apx_code"].strip():
        raise SchemaMismatch("apx_code", "must be a non-empty string")
    variables = obj["knob_variables"]
    if not isinstance(variables, list) or not all(isinstance(v, str) for v in variables):
        raise SchemaMismatch("knob_variables", "must be a list of strings")
    ranges = _normalize_knob_map(obj["knob_ranges"], "knob_ranges")
    for name, bounds in ranges.items():
        if (
            not isinstance(bounds, list)
            or len(bounds) != 2
            or not all(isinstance(b, (int, float)) and not isinstance(b, bool) for b in bounds)
        ):
            raise SchemaMismatch("knob_ranges", f"{name}: must be [lo, hi] numbers")
    increments = _normalize_knob_map(obj["knob_increments"], "knob_increments")
    for name, kind in increments.items():
        if kind not in ("Integer", "Real"):
            raise SchemaMismatch("knob_increments", f'{name}: must be "Integer" or "Real"')
    return {
        "apx_code": obj["apx_code"],
        "knob_variables": list(variables),
        "knob_ranges": ranges,
        "knob_increments": increments,
    }


def extract_json(response, schema_id):
    """Parse a provider response against one of the known schemas.

    ``function_selection`` and ``approximation_output`` scan for the
    first balanced JSON object (code fences and surrounding prose are
    tolerated) and validate it; ``makefile`` returns raw text with any
    code fence stripped.  Raises NoJsonFound / SchemaMismatch.
    """
    text = response.text if isinstance(response, LlmResponse) else str(response)
    if schema_id == "makefile":
        return _strip_fences(text)
    if schema_id not in SCHEMAS:
        raise SchemaMismatch("schema", f"unknown schema {schema_id!r}")
    obj, _ = first_json_object(text)
    if schema_id == "function_selection":
        return _check_selection(obj)
    return _check_approximation(obj)


def prose_before_json(text):
    """Free text preceding the first parseable JSON object ('' if none)."""
    try:
        _, idx = first_json_object(text)
    except NoJsonFound:
        return text.strip()
    return text[:idx].strip()

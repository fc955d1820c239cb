"""In-context-learning prompt construction and a generic endpoint client.

A prompt is k template-rendered exemplar clauses joined by a separator,
followed by the test clause: the template rendered with the test source and
truncated at the target placeholder, so the model completes the translation.
The client speaks the common chat-completions JSON shape and works against
any HTTP endpoint that accepts it; requests are sent with bounded
concurrency, transient failures are retried with exponential backoff, and
results are returned in input order. Raw exchanges can be persisted to a
JSON-lines audit file; the auth token is read from an environment variable
and never written anywhere.
"""

import json
import os
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import requests


class IclAuthError(RuntimeError):
    """The endpoint rejected our credentials; retrying will not help."""


@dataclass(frozen=True)
class PromptTemplate:
    pattern: str
    separator: str = "\n"

    def __post_init__(self):
        for ph in ("{src}", "{tgt}"):
            if self.pattern.count(ph) != 1:
                raise ValueError(
                    f"template must contain {ph} exactly once: {self.pattern!r}"
                )

    def render(self, src: str, tgt: str) -> str:
        return self.pattern.replace("{src}", src).replace("{tgt}", tgt)

    def render_test(self, src: str) -> str:
        """Render the completion clause: everything from {tgt} on is dropped."""
        head = self.pattern.split("{tgt}")[0]
        return head.replace("{src}", src)


@dataclass(frozen=True)
class Exemplar:
    x: str
    y: str

    def __post_init__(self):
        if not self.x or not self.y:
            raise ValueError("exemplar sides must be non-empty")


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    auth_env: str | None = None
    timeout: float = 30.0
    concurrency: int = 4
    max_retries: int = 3
    backoff_base: float = 0.5
    max_tokens: int = 256

    def __post_init__(self):
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


def build_prompt(template: PromptTemplate, exemplars, test_source: str) -> str:
    """Concatenate rendered exemplar clauses and the truncated test clause."""
    clauses = [template.render(e.x, e.y) for e in exemplars]
    clauses.append(template.render_test(test_source))
    return template.separator.join(clauses)


def sample_exemplars(train, k: int = 20, seed: int = 0) -> list[Exemplar]:
    """Seeded uniform sample without replacement from a parallel corpus."""
    pairs = list(train)
    if k > len(pairs):
        raise ValueError(f"cannot sample {k} exemplars from {len(pairs)} pairs")
    chosen = random.Random(seed).sample(pairs, k)
    return [Exemplar(x=p.source, y=p.target) for p in chosen]


def _extract_text(payload) -> str:
    choice = payload["choices"][0]
    if "message" in choice:
        return choice["message"]["content"]
    return choice["text"]


def run_icl(
    config: EndpointConfig,
    prompts,
    test_limit: int = 1000,
    audit_path=None,
    sleep=time.sleep,
) -> list[str]:
    """Send up to test_limit greedy completion requests; outputs keep input order.

    Transient failures (HTTP 429/5xx, connection errors, bad JSON) are
    retried max_retries times with exponential backoff; a request that still
    fails yields an empty hypothesis. Authentication failures raise at once.
    """
    prompts = list(prompts)[:test_limit]
    if not prompts:
        raise ValueError("no prompts to send")
    headers = {"Content-Type": "application/json"}
    if config.auth_env:
        token = os.environ.get(config.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"

    auth_failed = threading.Event()
    records = [None] * len(prompts)

    def worker(idx: int):
        prompt = prompts[idx]
        body = {
            "model": config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "max_tokens": config.max_tokens,
        }
        attempts = 0
        last_status = None
        last_body = ""
        while attempts <= config.max_retries and not auth_failed.is_set():
            attempts += 1
            try:
                resp = requests.post(config.base_url, json=body,
                                     headers=headers, timeout=config.timeout)
                last_status = resp.status_code
                last_body = resp.text
                if resp.status_code in (401, 403):
                    auth_failed.set()
                    return idx, "", attempts, last_status, last_body
                if resp.status_code == 200:
                    try:
                        text = _extract_text(resp.json())
                        return idx, text, attempts, last_status, last_body
                    except (ValueError, KeyError, IndexError, TypeError):
                        pass  # malformed response body: retry
            except requests.RequestException:
                last_status = None
                last_body = ""
            if attempts <= config.max_retries:
                sleep(config.backoff_base * (2 ** (attempts - 1)))
        return idx, "", attempts, last_status, last_body

    with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
        for idx, text, attempts, status, raw in pool.map(worker,
                                                         range(len(prompts))):
            records[idx] = {
                "index": idx,
                "prompt": prompts[idx],
                "status": status,
                "attempts": attempts,
                "response": raw,
                "hypothesis": text,
            }

    if auth_failed.is_set():
        raise IclAuthError(f"endpoint {config.base_url} rejected credentials")

    if audit_path is not None:
        with open(audit_path, "w", encoding="utf-8", newline="\n") as f:
            for rec in records:
                f.write(json.dumps(rec, ensure_ascii=False) + "\n")
    return [rec["hypothesis"] for rec in records]

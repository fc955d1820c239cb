import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from pbsmt.corpus import ParallelCorpus, SentencePair
from pbsmt.icl import (
    EndpointConfig,
    Exemplar,
    IclAuthError,
    PromptTemplate,
    build_prompt,
    run_icl,
    sample_exemplars,
)


class MockEndpoint:
    """A scriptable chat-completions endpoint running on localhost."""

    def __init__(self, script=None):
        self.script = script or {}
        self.requests = []
        self.lock = threading.Lock()
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                body = json.loads(
                    self.rfile.read(int(self.headers["Content-Length"]))
                )
                with outer.lock:
                    outer.requests.append({
                        "body": body,
                        "auth": self.headers.get("Authorization"),
                    })
                    seen = sum(
                        1 for r in outer.requests
                        if r["body"] == body
                    )
                prompt = body["messages"][0]["content"]
                action = outer.script.get(prompt)
                if action == "fail-once" and seen == 1:
                    self.send_response(503)
                    self.end_headers()
                    return
                if action == "always-fail":
                    self.send_response(500)
                    self.end_headers()
                    return
                if action == "unauthorized":
                    self.send_response(401)
                    self.end_headers()
                    return
                if action == "garbage":
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.end_headers()
                    self.wfile.write(b"{not json")
                    return
                reply = f"echo:{prompt}"
                payload = {"choices": [{"message": {"content": reply}}]}
                data = json.dumps(payload).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever,
                                       daemon=True)
        self.thread.start()

    @property
    def url(self):
        host, port = self.server.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture
def endpoint():
    ep = MockEndpoint()
    yield ep
    ep.close()


def config_for(ep, **kw):
    kw.setdefault("concurrency", 4)
    kw.setdefault("max_retries", 2)
    kw.setdefault("backoff_base", 0.0)
    return EndpointConfig(base_url=ep.url, model="mock-model", **kw)


TEMPLATE = PromptTemplate(pattern="{src} = {tgt}", separator="\n")


def test_build_prompt_formula():
    exemplars = [Exemplar("s1", "t1"), Exemplar("s2", "t2")]
    assert build_prompt(TEMPLATE, exemplars, "s3") == "s1 = t1\ns2 = t2\ns3 = "


def test_build_prompt_zero_shot():
    assert build_prompt(TEMPLATE, [], "s3") == "s3 = "


def test_build_prompt_k20_clause_count():
    exemplars = [Exemplar(f"x{i}", f"y{i}") for i in range(20)]
    prompt = build_prompt(TEMPLATE, exemplars, "test")
    clauses = prompt.split("\n")
    assert len(clauses) == 21
    assert clauses[:-1] == [f"x{i} = y{i}" for i in range(20)]
    assert clauses[-1] == "test = "


def test_build_prompt_matches_naive_assembly():
    import random

    rng = random.Random(60)
    for _ in range(100):
        sep = rng.choice(["\n", " ", " ||| "])
        pattern = rng.choice([
            "{src} => {tgt}", "Q: {src}\nA: {tgt}", "<{src}>[{tgt}]",
        ])
        template = PromptTemplate(pattern=pattern, separator=sep)
        k = rng.randint(0, 8)
        exemplars = [Exemplar(f"in{i}", f"out{i}") for i in range(k)]
        test_src = f"probe{rng.randrange(100)}"
        naive = sep.join(
            [pattern.replace("{src}", e.x).replace("{tgt}", e.y)
             for e in exemplars]
            + [pattern.split("{tgt}")[0].replace("{src}", test_src)]
        )
        assert build_prompt(template, exemplars, test_src) == naive


def test_template_requires_both_placeholders():
    with pytest.raises(ValueError):
        PromptTemplate(pattern="{src} only")
    with pytest.raises(ValueError):
        PromptTemplate(pattern="{src} {tgt} {tgt}")


def test_sample_exemplars_deterministic():
    corpus = ParallelCorpus(
        pairs=tuple(SentencePair(i, f"s{i}", f"t{i}") for i in range(50))
    )
    a = sample_exemplars(corpus, k=20, seed=9)
    b = sample_exemplars(corpus, k=20, seed=9)
    assert a == b
    assert len(a) == 20
    assert len({e.x for e in a}) == 20  # without replacement


def test_sample_exemplars_exhaustive_is_permutation():
    corpus = ParallelCorpus(
        pairs=tuple(SentencePair(i, f"s{i}", f"t{i}") for i in range(10))
    )
    sample = sample_exemplars(corpus, k=10, seed=1)
    assert sorted(e.x for e in sample) == [f"s{i}" for i in range(10)]
    assert sample_exemplars(corpus, k=0, seed=1) == []


def test_sample_exemplars_k_too_large():
    corpus = ParallelCorpus(pairs=(SentencePair(0, "a", "b"),))
    with pytest.raises(ValueError):
        sample_exemplars(corpus, k=2, seed=0)


def test_run_icl_order_preserved(endpoint):
    prompts = [f"p{i}" for i in range(25)]
    out = run_icl(config_for(endpoint), prompts, test_limit=1000)
    assert out == [f"echo:p{i}" for i in range(25)]


def test_run_icl_respects_limit(endpoint):
    prompts = [f"p{i}" for i in range(10)]
    out = run_icl(config_for(endpoint), prompts, test_limit=3)
    assert out == ["echo:p0", "echo:p1", "echo:p2"]
    assert len(endpoint.requests) == 3


def test_run_icl_single_request(endpoint):
    out = run_icl(config_for(endpoint), ["only"], test_limit=1)
    assert out == ["echo:only"]
    assert len(endpoint.requests) == 1


def test_run_icl_retries_transient_failure(endpoint):
    endpoint.script["flaky"] = "fail-once"
    out = run_icl(config_for(endpoint), ["flaky", "ok"], test_limit=10)
    assert out == ["echo:flaky", "echo:ok"]
    flaky_hits = [r for r in endpoint.requests
                  if r["body"]["messages"][0]["content"] == "flaky"]
    assert len(flaky_hits) == 2  # one failure, one retry


def test_run_icl_exhausted_retries_yield_empty(endpoint):
    endpoint.script["dead"] = "always-fail"
    out = run_icl(config_for(endpoint), ["dead", "ok"], test_limit=10)
    assert out == ["", "echo:ok"]


def test_run_icl_malformed_json_yields_empty(endpoint):
    endpoint.script["junk"] = "garbage"
    out = run_icl(config_for(endpoint), ["junk", "ok"], test_limit=10)
    assert out == ["", "echo:ok"]


def test_run_icl_auth_failure_raises(endpoint):
    endpoint.script["p0"] = "unauthorized"
    with pytest.raises(IclAuthError):
        run_icl(config_for(endpoint), ["p0"], test_limit=10)


def test_run_icl_body_shape_and_temperature(endpoint):
    run_icl(config_for(endpoint), ["check"], test_limit=1)
    body = endpoint.requests[0]["body"]
    assert body["model"] == "mock-model"
    assert body["temperature"] == 0
    assert body["messages"] == [{"role": "user", "content": "check"}]


def test_run_icl_audit_has_no_token(endpoint, tmp_path, monkeypatch):
    monkeypatch.setenv("MOCK_ICL_TOKEN", "sekrit-token-123")
    audit = tmp_path / "audit.jsonl"
    config = config_for(endpoint, auth_env="MOCK_ICL_TOKEN")
    run_icl(config, ["a", "b"], test_limit=10, audit_path=audit)
    # the header reached the server but never the audit trail
    assert endpoint.requests[0]["auth"] == "Bearer sekrit-token-123"
    text = audit.read_text()
    assert "sekrit-token-123" not in text
    lines = [json.loads(line) for line in text.splitlines()]
    assert [rec["index"] for rec in lines] == [0, 1]
    assert [rec["prompt"] for rec in lines] == ["a", "b"]
    assert all(rec["status"] == 200 for rec in lines)


def test_run_icl_no_prompts_rejected(endpoint):
    with pytest.raises(ValueError):
        run_icl(config_for(endpoint), [], test_limit=10)


def test_endpoint_config_validation():
    with pytest.raises(ValueError):
        EndpointConfig(base_url="http://x", model="m", concurrency=0)
    with pytest.raises(ValueError):
        EndpointConfig(base_url="http://x", model="m", timeout=0)

"""Logit providers: synthetic determinism and demonstration influence, trace
record/replay losslessness, call auditing, and the remote wire protocol
against a stub HTTP server (with every exchange validated against the shared
wire schemas in fixtures/wire/).
"""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from dpsmozo.dist import log_softmax, sym_renyi_divergence
from dpsmozo.errors import ProviderError, RemoteTransportError, UncoveredContextError
from dpsmozo.providers import (
    CallAuditProvider,
    Demonstration,
    PromptContext,
    RecordingProvider,
    RemoteProvider,
    SyntheticEmbedder,
    SyntheticProvider,
    TraceProvider,
    build_provider,
    context_key,
    load_demo_pool,
)

WIRE_SCHEMAS = Path(__file__).resolve().parent.parent / "fixtures" / "wire"


def wire_schema(name: str) -> dict:
    return json.loads((WIRE_SCHEMAS / f"{name}.schema.json").read_text())


def ctx(query="q", prefix=(), demos=(), template="default"):
    return PromptContext(
        query_text=query, prefix_token_ids=prefix, template_id=template, demonstrations=demos
    )


DEMO_A = Demonstration("a", "in a", "out a")
DEMO_B = Demonstration("b", "in b", "out b")


class TestSyntheticProvider:
    def test_pure_function_of_context(self):
        first = SyntheticProvider(vocab_size=16, seed=3)
        second = SyntheticProvider(vocab_size=16, seed=3)
        c = ctx("query", prefix=(1, 2), demos=(DEMO_A,))
        np.testing.assert_array_equal(first.logits(c).scores, second.logits(c).scores)
        np.testing.assert_array_equal(first.logits(c).scores, first.logits(c).scores)

    def test_distinct_contexts_distinct_logits(self):
        provider = SyntheticProvider(vocab_size=16, seed=3)
        base = provider.logits(ctx("query")).scores
        for other in (ctx("other"), ctx("query", prefix=(1,)), ctx("query", template="alt")):
            assert not np.array_equal(base, provider.logits(other).scores)

    def test_gamma_zero_removes_demonstration_influence(self):
        provider = SyntheticProvider(vocab_size=16, seed=5, gamma=0.0)
        zero = provider.logits(ctx("q")).scores
        one = provider.logits(ctx("q", demos=(DEMO_A,))).scores
        np.testing.assert_array_equal(zero, one)

    def test_divergence_grows_with_gamma(self):
        """The one-shot/zero-shot divergence is nondecreasing in gamma: the
        demonstration effect moves the logits along a fixed ray."""
        c0, c1 = ctx("q"), ctx("q", demos=(DEMO_A,))
        divergences = []
        for gamma in (0.0, 0.25, 0.5, 1.0, 2.0):
            provider = SyntheticProvider(vocab_size=16, seed=5, gamma=gamma)
            divergences.append(
                sym_renyi_divergence(
                    log_softmax(provider.logits(c1)), log_softmax(provider.logits(c0)), 2.0
                )
            )
        assert divergences[0] == 0.0
        assert all(lo <= hi + 1e-12 for lo, hi in zip(divergences, divergences[1:]))

    def test_demonstration_effects_are_additive(self):
        provider = SyntheticProvider(vocab_size=16, seed=7, gamma=0.8)
        base = provider.logits(ctx("q")).scores
        one_a = provider.logits(ctx("q", demos=(DEMO_A,))).scores - base
        one_b = provider.logits(ctx("q", demos=(DEMO_B,))).scores - base
        both = provider.logits(ctx("q", demos=(DEMO_A, DEMO_B))).scores - base
        np.testing.assert_allclose(both, one_a + one_b, rtol=0, atol=1e-12)

    def test_eos_bonus_scales_with_prefix_length(self):
        # logit_scale=0 zeroes every table, leaving only the bonus term
        provider = SyntheticProvider(vocab_size=8, logit_scale=0.0, eos_bonus_per_token=0.5)
        np.testing.assert_array_equal(provider.logits(ctx("q")).scores, np.zeros(8))
        scores = provider.logits(ctx("q", prefix=(1, 2, 3))).scores
        expected = np.zeros(8)
        expected[7] = 1.5
        np.testing.assert_array_equal(scores, expected)

    def test_label_boost_targets_matching_query_only(self):
        demo = Demonstration("m", "the query", "the label")
        provider = SyntheticProvider(vocab_size=16, seed=1, query_match_label_boost=50.0)
        plain = SyntheticProvider(vocab_size=16, seed=1)
        label_token = provider.token_for_label("the label")
        boosted = provider.logits(ctx("the query", demos=(demo,))).scores
        unboosted = plain.logits(ctx("the query", demos=(demo,))).scores
        assert boosted[label_token] == pytest.approx(unboosted[label_token] + 50.0)
        # a non-matching query gets no boost
        np.testing.assert_array_equal(
            provider.logits(ctx("other", demos=(demo,))).scores,
            plain.logits(ctx("other", demos=(demo,))).scores,
        )

    def test_token_for_label_stable_and_in_range(self):
        provider = SyntheticProvider(vocab_size=16)
        for label in ("a", "b", "out 3"):
            tok = provider.token_for_label(label)
            assert 0 <= tok < 16
            assert tok == provider.token_for_label(label)

    def test_detokenize_format(self):
        assert SyntheticProvider(vocab_size=8).detokenize([0, 5]) == "t0 t5"

    def test_constructor_validation(self):
        with pytest.raises(ValueError):
            SyntheticProvider(vocab_size=1)
        with pytest.raises(ValueError):
            SyntheticProvider(vocab_size=65)
        with pytest.raises(ValueError):
            SyntheticProvider(vocab_size=8, eos_token_id=8)


class TestSyntheticEmbedder:
    def test_unit_norm_rows(self):
        embedder = SyntheticEmbedder(dim=64, seed=0)
        vectors = embedder.embed([f"text {i}" for i in range(20)])
        assert vectors.shape == (20, 64)
        np.testing.assert_allclose(np.linalg.norm(vectors, axis=1), 1.0, rtol=0, atol=1e-12)

    def test_same_text_same_vector(self):
        embedder = SyntheticEmbedder(dim=32, seed=0)
        a, b = embedder.embed(["hello", "hello"])
        np.testing.assert_array_equal(a, b)

    def test_distinct_texts_are_not_collinear(self):
        embedder = SyntheticEmbedder(dim=64, seed=0)
        vectors = embedder.embed([f"text {i}" for i in range(1000)])
        gram = vectors @ vectors.T
        off_diagonal = gram[~np.eye(1000, dtype=bool)]
        assert np.max(np.abs(off_diagonal)) < 0.99


class TestDemoPoolLoading:
    def write(self, tmp_path, rows):
        path = tmp_path / "pool.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        return path

    def test_round_trip(self, tmp_path):
        path = self.write(tmp_path, [{"id": "a", "input": "x", "output": "y"}])
        pool = load_demo_pool(path)
        assert pool == [Demonstration("a", "x", "y")]

    def test_duplicate_id_rejected(self, tmp_path):
        rows = [{"id": "a", "input": "x", "output": "y"}] * 2
        with pytest.raises(ValueError, match="duplicate"):
            load_demo_pool(self.write(tmp_path, rows))

    def test_missing_field_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="missing field"):
            load_demo_pool(self.write(tmp_path, [{"id": "a", "input": "x"}]))

    def test_empty_pool_rejected(self, tmp_path):
        path = tmp_path / "pool.jsonl"
        path.write_text("")
        with pytest.raises(ValueError, match="empty"):
            load_demo_pool(path)


class TestTraceRoundTrip:
    def record_some(self, with_demo=True):
        provider = RecordingProvider(SyntheticProvider(vocab_size=12, seed=9))
        contexts = [ctx("q one"), ctx("q one", prefix=(3,)), ctx("q two", prefix=(3, 4))]
        if with_demo:
            contexts.append(ctx("q one", demos=(DEMO_A,)))
        for c in contexts:
            provider.logits(c)
        return provider, contexts

    def test_sidecar_replay_is_bit_exact(self, tmp_path):
        provider, contexts = self.record_some()
        path = tmp_path / "trace.jsonl"
        provider.write_trace(path)
        assert path.with_suffix(".jsonl.bin").exists()
        replay = TraceProvider.from_files(path)
        assert replay.vocab_size == 12
        for c in contexts:
            np.testing.assert_array_equal(
                replay.logits(c).scores, provider.inner.logits(c).scores
            )

    def test_json_only_replay_rounds_at_nine_digits(self, tmp_path):
        provider, contexts = self.record_some()
        path = tmp_path / "trace.jsonl"
        provider.write_trace(path, sidecar=False)
        assert not path.with_suffix(".jsonl.bin").exists()
        replay = TraceProvider.from_files(path)
        for c in contexts:
            np.testing.assert_allclose(
                replay.logits(c).scores, provider.inner.logits(c).scores, rtol=1e-8
            )

    def test_uncovered_context_rejected(self, tmp_path):
        provider, _ = self.record_some()
        path = tmp_path / "trace.jsonl"
        provider.write_trace(path)
        replay = TraceProvider.from_files(path)
        with pytest.raises(UncoveredContextError):
            replay.logits(ctx("never recorded"))

    def test_empty_trace_rejected(self, tmp_path):
        path = tmp_path / "trace.jsonl"
        RecordingProvider(SyntheticProvider(vocab_size=8)).write_trace(path)
        with pytest.raises(ValueError, match="empty"):
            TraceProvider.from_files(path)

    def test_sidecar_length_mismatch_rejected(self, tmp_path):
        provider, _ = self.record_some()
        path = tmp_path / "trace.jsonl"
        provider.write_trace(path)
        sidecar = path.with_suffix(".jsonl.bin")
        sidecar.write_bytes(sidecar.read_bytes()[:-8])
        with pytest.raises(ValueError, match="sidecar length"):
            TraceProvider.from_files(path)

    def test_inconsistent_vocab_rejected(self, tmp_path):
        rows = [
            {"demo_ids": [], "query_sha": "00", "prefix": [], "template_id": "default",
             "vocab_size": 4, "eos_token_id": 3, "logits": [0.0, 1.0, 2.0, 3.0]},
            {"demo_ids": [], "query_sha": "01", "prefix": [], "template_id": "default",
             "vocab_size": 5, "eos_token_id": 3, "logits": [0.0, 1.0, 2.0, 3.0, 4.0]},
        ]
        path = tmp_path / "trace.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        with pytest.raises(ValueError, match="inconsistent vocab_size"):
            TraceProvider.from_files(path)


class TestCallAudit:
    def test_records_every_context_key(self):
        audit = CallAuditProvider(SyntheticProvider(vocab_size=8))
        audit.logits(ctx("q"))
        audit.logits(ctx("q", demos=(DEMO_A,)))
        audit.logits(ctx("q", demos=(DEMO_B,), prefix=(1,)))
        assert len(audit.calls) == 3
        assert audit.calls[0] == context_key(ctx("q"))
        assert audit.demo_ids_touched() == {"a", "b"}


class TestBuildProvider:
    def test_synthetic_from_spec(self):
        provider = build_provider({"kind": "synthetic", "vocab_size": 8, "seed": 4})
        assert isinstance(provider, SyntheticProvider)
        assert provider.vocab_size == 8 and provider.seed == 4

    def test_trace_from_spec(self, tmp_path):
        recorder = RecordingProvider(SyntheticProvider(vocab_size=8))
        recorder.logits(ctx("q"))
        path = tmp_path / "trace.jsonl"
        recorder.write_trace(path)
        provider = build_provider({"kind": "trace", "path": str(path)})
        assert isinstance(provider, TraceProvider)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown provider kind"):
            build_provider({"kind": "mystery"})


def make_stub_server(state):
    """Tiny threaded HTTP server speaking the inference wire protocol.

    ``state`` collects every request (route, payload) and carries failure
    injection knobs: ``fail_next`` (count of 500s to serve before succeeding)
    and ``reject_logits`` (serve 422 on /v1/logits).
    """

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def _send(self, code, payload):
            body = json.dumps(payload).encode("utf-8")
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _maybe_fail(self):
            if state["fail_next"] > 0:
                state["fail_next"] -= 1
                self._send(500, {"detail": "injected failure"})
                return True
            return False

        def do_GET(self):
            state["requests"].append(("GET", self.path, None))
            if self._maybe_fail():
                return
            if self.path == "/v1/model":
                self._send(200, {
                    "model_id": "stub", "vocab_size": 8, "eos_token_id": 7,
                    "embedding_dim": 4,
                })
            else:
                self._send(404, {"detail": "no such route"})

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            payload = json.loads(self.rfile.read(length)) if length else {}
            state["requests"].append(("POST", self.path, payload))
            if self._maybe_fail():
                return
            if self.path == "/v1/logits":
                if state["reject_logits"]:
                    self._send(422, {"detail": "rejected by stub"})
                    return
                # deterministic scores a test can recompute from the payload
                base = float(len(payload["query_text"]) + len(payload["prefix_token_ids"]))
                self._send(200, {"logits": [base + i for i in range(8)], "vocab_size": 8})
            elif self.path == "/v1/embed":
                vectors = [[1.0, 0.0, 0.0, 0.0] for _ in payload["texts"]]
                self._send(200, {"vectors": vectors, "dim": 4})
            elif self.path == "/v1/tokenize":
                self._send(200, {"token_ids": list(payload["text"].encode("utf-8"))})
            elif self.path == "/v1/detokenize":
                self._send(200, {"text": bytes(payload["token_ids"]).decode("utf-8")})
            else:
                self._send(404, {"detail": "no such route"})

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


@pytest.fixture()
def stub():
    state = {"requests": [], "fail_next": 0, "reject_logits": False}
    server = make_stub_server(state)
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}", state
    finally:
        server.shutdown()
        server.server_close()


class TestRemoteProvider:
    def test_model_info_fetched_eagerly(self, stub):
        url, state = stub
        provider = RemoteProvider(url)
        assert provider.vocab_size == 8
        assert provider.eos_token_id == 7
        assert provider.embedding_dim == 4
        assert ("GET", "/v1/model", None) in state["requests"]
        jsonschema.validate(provider.model_info, wire_schema("model_info_response"))

    def test_logits_round_trip_and_wire_shape(self, stub):
        url, state = stub
        provider = RemoteProvider(url)
        got = provider.logits(ctx("query", prefix=(1, 2), demos=(DEMO_A,)))
        np.testing.assert_array_equal(got.scores, np.arange(8.0) + 7.0)
        sent = [p for (m, route, p) in state["requests"] if route == "/v1/logits"][-1]
        jsonschema.validate(sent, wire_schema("logits_request"))
        assert sent["demonstration"] == {"input": "in a", "output": "out a"}
        assert sent["prefix_token_ids"] == [1, 2]

    def test_zero_shot_request_carries_null_demonstration(self, stub):
        url, state = stub
        provider = RemoteProvider(url)
        provider.logits(ctx("query"))
        sent = [p for (m, route, p) in state["requests"] if route == "/v1/logits"][-1]
        jsonschema.validate(sent, wire_schema("logits_request"))
        assert sent["demonstration"] is None

    def test_multi_demonstration_rejected_before_any_request(self, stub):
        url, state = stub
        provider = RemoteProvider(url)
        before = len(state["requests"])
        with pytest.raises(ProviderError, match="at most one demonstration"):
            provider.logits(ctx("q", demos=(DEMO_A, DEMO_B)))
        assert len(state["requests"]) == before

    def test_embed_tokenize_detokenize(self, stub):
        url, state = stub
        provider = RemoteProvider(url)
        vectors = provider.embed(["a", "b"])
        assert vectors.shape == (2, 4)
        token_ids = provider.tokenize("hi")
        assert token_ids == [104, 105]
        assert provider.detokenize(token_ids) == "hi"
        for route, schema in (
            ("/v1/embed", "embed_request"),
            ("/v1/tokenize", "tokenize_request"),
            ("/v1/detokenize", "detokenize_request"),
        ):
            sent = [p for (m, r, p) in state["requests"] if r == route][-1]
            jsonschema.validate(sent, wire_schema(schema))

    def test_client_rejection_is_not_retried(self, stub):
        url, state = stub
        provider = RemoteProvider(url)
        state["reject_logits"] = True
        before = len(state["requests"])
        with pytest.raises(ProviderError, match="rejected"):
            provider.logits(ctx("q"))
        assert len(state["requests"]) == before + 1

    def test_server_errors_retried_until_success(self, stub):
        url, state = stub
        provider = RemoteProvider(url, max_attempts=3, backoff=0.01)
        state["fail_next"] = 2
        got = provider.logits(ctx("q"))
        assert got.scores.size == 8
        assert state["fail_next"] == 0

    def test_persistent_server_errors_surface_with_attempt_count(self, stub):
        url, state = stub
        provider = RemoteProvider(url, max_attempts=3, backoff=0.01)
        state["fail_next"] = 99
        with pytest.raises(RemoteTransportError) as excinfo:
            provider.logits(ctx("q"))
        assert excinfo.value.attempts == 3

    def test_unreachable_host_raises_transport_error(self):
        with pytest.raises(RemoteTransportError):
            RemoteProvider("http://127.0.0.1:9", max_attempts=2, backoff=0.01)

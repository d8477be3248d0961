"""Wire-protocol conformance against the live service."""

import numpy as np
import pytest
import requests

from conftest import N_WORDS

V = N_WORDS + 5  # words plus special tokens


def post(url, route, payload):
    return requests.post(url + route, json=payload, timeout=30)


class TestHealthAndVocab:
    def test_healthz(self, sidecar_url):
        assert requests.get(sidecar_url + "/healthz", timeout=10).status_code == 200

    def test_vocab_shape(self, sidecar_url):
        body = requests.get(sidecar_url + "/v1/vocab", timeout=10).json()
        assert len(body["tokens"]) == V
        assert body["mask_string"] in body["tokens"]
        assert all(isinstance(t, str) for t in body["tokens"])

    def test_vocab_roundtrips_into_primary_vocabulary(self, sidecar_url, tmp_path):
        from tokencom.vocab import Vocabulary

        body = requests.get(sidecar_url + "/v1/vocab", timeout=10).json()
        path = tmp_path / "vocab.txt"
        path.write_text("\n".join(body["tokens"]) + "\n", encoding="utf-8")
        vocab = Vocabulary.from_file(path)
        assert vocab.size == V
        assert vocab.mask_sentinel == V
        assert vocab.entries[4] == body["mask_string"]


class TestPriorsConformance:
    def test_randomized_requests_conform(self, sidecar_url):
        """Schema validity and normalization within 1e-4 on 100 random requests."""
        rng = np.random.default_rng(99)
        for _ in range(100):
            t = int(rng.integers(2, 33))
            tokens = rng.integers(0, V, size=t).tolist()
            n_blank = int(rng.integers(1, min(4, t) + 1))
            positions = sorted(rng.choice(t, size=n_blank, replace=False).tolist())
            for p in positions:
                tokens[p] = -1
            top_k = int(rng.integers(1, V + 1))
            resp = post(sidecar_url, "/v1/priors", {"tokens": tokens, "positions": positions, "top_k": top_k})
            assert resp.status_code == 200
            blocks = resp.json()["positions"]
            assert sorted(b["index"] for b in blocks) == positions
            for block in blocks:
                entries = block["entries"]
                assert len(entries) == top_k
                ids = [e["id"] for e in entries]
                assert all(isinstance(i, int) and 0 <= i < V for i in ids)
                assert len(set(ids)) == top_k
                logps = np.array([e["logp"] for e in entries], dtype=float)
                assert (np.diff(logps) <= 1e-12).all()  # sorted by descending probability
                total = float(np.exp(logps).sum())
                tail = block["tail_logp"]
                if tail is not None:
                    total += float(np.exp(tail))
                assert abs(total - 1.0) <= 1e-4

    def test_full_coverage_has_null_tail(self, sidecar_url):
        tokens = [-1] + [5] * 4
        resp = post(sidecar_url, "/v1/priors", {"tokens": tokens, "positions": [0], "top_k": V})
        block = resp.json()["positions"][0]
        assert block["tail_logp"] is None
        assert len(block["entries"]) == V

    def test_deterministic_inference(self, sidecar_url):
        payload = {"tokens": [7, -1, 12, 30], "positions": [1], "top_k": 8}
        a = post(sidecar_url, "/v1/priors", payload).json()
        b = post(sidecar_url, "/v1/priors", payload).json()
        assert a == b

    def test_context_changes_distribution(self, sidecar_url):
        a = post(sidecar_url, "/v1/priors", {"tokens": [7, -1, 12], "positions": [1], "top_k": 5}).json()
        b = post(sidecar_url, "/v1/priors", {"tokens": [8, -1, 40], "positions": [1], "top_k": 5}).json()
        assert a != b


class TestPriorsErrors:
    def test_unblanked_position_is_422(self, sidecar_url):
        resp = post(sidecar_url, "/v1/priors", {"tokens": [1, 2, 3], "positions": [1], "top_k": 4})
        assert resp.status_code == 422
        assert "error" in resp.json()

    def test_out_of_range_token_is_400(self, sidecar_url):
        resp = post(sidecar_url, "/v1/priors", {"tokens": [V + 4, -1], "positions": [1], "top_k": 4})
        assert resp.status_code == 400
        assert "error" in resp.json()

    def test_bad_top_k_is_400(self, sidecar_url):
        resp = post(sidecar_url, "/v1/priors", {"tokens": [-1, 2], "positions": [0], "top_k": V + 1})
        assert resp.status_code == 400

    def test_position_out_of_range_is_400(self, sidecar_url):
        resp = post(sidecar_url, "/v1/priors", {"tokens": [-1, 2], "positions": [5], "top_k": 2})
        assert resp.status_code == 400

    def test_overlong_sequence_is_400(self, sidecar_url):
        tokens = [-1] + [1] * 60  # beyond the configured 48-token cap
        resp = post(sidecar_url, "/v1/priors", {"tokens": tokens, "positions": [0], "top_k": 2})
        assert resp.status_code == 400

    def test_malformed_body_is_400(self, sidecar_url):
        resp = post(sidecar_url, "/v1/priors", {"tokens": "nope"})
        assert resp.status_code == 400
        assert "error" in resp.json()


class TestEmbed:
    def test_identical_inputs_identical_vectors(self, sidecar_url):
        a = post(sidecar_url, "/v1/embed", {"tokens": [5, 6, 7]}).json()["embedding"]
        b = post(sidecar_url, "/v1/embed", {"tokens": [5, 6, 7]}).json()["embedding"]
        assert a == b

    def test_dimension_constant(self, sidecar_url):
        a = post(sidecar_url, "/v1/embed", {"tokens": [5, 6, 7]}).json()["embedding"]
        b = post(sidecar_url, "/v1/embed", {"tokens": [9] * 20}).json()["embedding"]
        assert len(a) == len(b) > 0

    def test_self_cosine_is_one(self, sidecar_url):
        vec = np.array(post(sidecar_url, "/v1/embed", {"tokens": [5, 6, 7]}).json()["embedding"])
        cos = float(vec @ vec / (np.linalg.norm(vec) ** 2))
        assert cos == pytest.approx(1.0, abs=1e-6)

    def test_masked_tokens_allowed(self, sidecar_url):
        resp = post(sidecar_url, "/v1/embed", {"tokens": [5, -1, 7]})
        assert resp.status_code == 200


class TestRemoteClientIntegration:
    """The primary's HTTP client against the live service (not a stub)."""

    def test_query_through_client(self, sidecar_url, tmp_path):
        from tokencom.priors import RemotePrior
        from tokencom.vocab import Vocabulary

        body = requests.get(sidecar_url + "/v1/vocab", timeout=10).json()
        vocab = Vocabulary(tuple(body["tokens"]))
        model = RemotePrior(vocab, sidecar_url, top_k=8)
        ctx = np.array([7, vocab.mask_sentinel, 12, 30])
        dist = model.query(ctx, [1])[1]
        assert dist.probs().sum() == pytest.approx(1.0, abs=1e-6)
        assert (dist.probs() > 0).all()

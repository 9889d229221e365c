"""Question-text / answer-text / answer-speech triplet construction.

Questions come from a pluggable client: a deterministic mock template by
default, or a minimal JSON-over-HTTP endpoint named by an environment
variable. Records are processed with bounded concurrency; output order
always matches input order and every input ends up as exactly one
triplet or one reported failure.
"""

import json
import os
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import torch

from ..formats import load_tokens, read_wav, save_tokens

ENDPOINT_ENV = "SPEECHBRIDGE_QUESTION_URL"


@dataclass(frozen=True)
class QtatsTriplet:
    q_txt: str
    a_txt: str
    a_sph: tuple      # speech token indices


def mock_question(answer_text: str) -> str:
    """Deterministic reverse question: template over the first 6 words."""
    if not answer_text.strip():
        raise ValueError("empty answer text")
    head = " ".join(answer_text.split()[:6])
    return f"Which statement is true about: {head}?"


class MockQuestionClient:
    def generate(self, answer_text: str) -> str:
        return mock_question(answer_text)


class RemoteQuestionClient:
    """POST {"prompt": ...} -> {"text": ...} with bounded retries."""

    def __init__(self, url, retries=3, timeout=10.0):
        self.url = url
        self.retries = retries
        self.timeout = timeout

    def generate(self, answer_text: str) -> str:
        body = json.dumps({"prompt": answer_text}).encode("utf-8")
        last = None
        for _ in range(self.retries):
            try:
                req = urllib.request.Request(
                    self.url, data=body, headers={"Content-Type": "application/json"})
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return json.loads(resp.read())["text"]
            except Exception as e:       # noqa: BLE001 - retry any transport error
                last = e
        raise RuntimeError(f"question endpoint failed after {self.retries} tries: {last}")


def get_question_client():
    url = os.environ.get(ENDPOINT_ENV)
    return RemoteQuestionClient(url) if url else MockQuestionClient()


def _build_one(record, client, tokenizer):
    wave = read_wav(record.audio_path)
    tokens = tokenizer.tokenize_offline(torch.from_numpy(wave))
    q = client.generate(record.transcript)
    return QtatsTriplet(q, record.transcript, tuple(int(t) for t in tokens))


def build_qtats(records, client, tokenizer, max_workers=4):
    """Returns (triplets, failures); len(triplets) + len(failures) == len(records).

    failures: list of (record, error string). Order of triplets follows
    the input order regardless of completion order.
    """
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = [pool.submit(_build_one, r, client, tokenizer) for r in records]
        triplets, failures = [], []
        for record, fut in zip(records, futures):
            try:
                triplets.append(fut.result())
            except Exception as e:      # noqa: BLE001 - skip-and-report policy
                failures.append((record, f"{type(e).__name__}: {e}"))
    return triplets, failures


def save_triplets(path, triplets, token_dir):
    """Line-delimited records referencing one token file per triplet."""
    os.makedirs(token_dir, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for i, t in enumerate(triplets):
            tok_path = os.path.join(token_dir, f"utt_{i:05d}.solt")
            save_tokens(tok_path, np.asarray(t.a_sph, dtype=np.int64))
            f.write(json.dumps({
                "q_txt": t.q_txt, "a_txt": t.a_txt, "tokens_path": tok_path,
            }, ensure_ascii=False) + "\n")


def load_triplets(path):
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            d = json.loads(line)
            tokens, _ = load_tokens(d["tokens_path"])
            out.append(QtatsTriplet(d["q_txt"], d["a_txt"], tuple(int(t) for t in tokens)))
    return out

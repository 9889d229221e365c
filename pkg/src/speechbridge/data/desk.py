"""Small deterministic corpora for desk-scale training and tests.

Utterances are synthesized from symbol strings. For QA-style projector
training the answer text is a deterministic function of the question
symbols, so the mapping is learnable without any external model. For
generator training, triplets follow the question/answer-text/answer-speech
layout: the record's audio is the spoken answer, and the question text
comes from the mock template.
"""

import torch

from .qtats import QtatsTriplet, mock_question
from .synth import SynthSpec, make_corpus


def qa_answer(symbols: str) -> str:
    """Canonical answer text for a synthesized question utterance."""
    return f"it is {symbols[0]}"


def build_asr_corpus(spec: SynthSpec = None, count: int = 24, seed: int = 0,
                     min_len: int = 3, max_len: int = 8):
    """(waveform, labels, transcript) triples for CTC and ASR training."""
    spec = spec or SynthSpec()
    return make_corpus(spec, count, min_len=min_len, max_len=max_len, seed=seed)


def build_qa_corpus(spec: SynthSpec = None, count: int = 24, seed: int = 100,
                    min_len: int = 3, max_len: int = 6):
    """(question wave, question symbols, answer text) triples."""
    spec = spec or SynthSpec()
    return [(wave, transcript, qa_answer(transcript))
            for wave, _, transcript in make_corpus(spec, count, min_len=min_len,
                                                   max_len=max_len, seed=seed)]


def build_triplets(tokenizer, corpus=None, count: int = 50, seed: int = 200,
                   spec: SynthSpec = None):
    """Question / answer-text / answer-speech-token triplets.

    Each record's audio is treated as the spoken answer; its transcript is
    the answer text; the question is the deterministic mock template.
    """
    corpus = corpus if corpus is not None else build_asr_corpus(
        spec, count, seed=seed, min_len=3, max_len=5)
    triplets = []
    with torch.no_grad():
        for wave, _, transcript in corpus:
            tokens = tokenizer.tokenize_offline(
                torch.as_tensor(wave, dtype=torch.float32))
            triplets.append(QtatsTriplet(
                mock_question(transcript), transcript,
                tuple(int(t) for t in tokens)))
    return triplets


def build_detok_corpus(tokenizer, corpus=None, count: int = 16, seed: int = 300,
                       spec: SynthSpec = None):
    """(log-mel frames, streamed tokens) pairs on the output clock.

    Audio is lifted from the 16 kHz input rate to the 24 kHz output rate
    before mel analysis; tokens come from the streaming tokenizer path.
    """
    from scipy.signal import resample_poly
    from ..melspec import log_mel
    corpus = corpus if corpus is not None else build_asr_corpus(
        spec, count, seed=seed, min_len=3, max_len=6)
    items = []
    with torch.no_grad():
        for wave, _, _ in corpus:
            w = torch.as_tensor(wave, dtype=torch.float32)
            tokens = tokenizer.stream_utterance(w)
            wave24 = resample_poly(wave, 3, 2).astype("float32")
            n_frames = -(-tokens.shape[0] * 15 // 2)   # ceil(n * 7.5)
            mel = torch.from_numpy(log_mel(wave24))[:n_frames]
            if mel.shape[0] < n_frames:
                pad = mel[-1:].expand(n_frames - mel.shape[0], -1)
                mel = torch.cat((mel, pad), dim=0)
            items.append((mel, tokens))
    return items

"""Error-rate metrics and latency measurement."""

import time
from dataclasses import dataclass

import numpy as np
import torch


def edit_distance(ref, hyp):
    """Minimal (substitutions, insertions, deletions) turning ref into hyp.

    Ties between minimal alignments are broken deterministically in favor
    of a substitution over an insert-plus-delete pair.
    """
    ref, hyp = list(ref), list(hyp)
    R, H = len(ref), len(hyp)
    # cell = (cost, s, i, d); candidate tuples carry a move-preference key
    # (0 diagonal, 1 delete, 2 insert) so min() is deterministic on ties
    row = [(h, 0, h, 0) for h in range(H + 1)]
    for r in range(1, R + 1):
        prev, row = row, [(r, 0, 0, r)] + [None] * H
        for h in range(1, H + 1):
            miss = int(ref[r - 1] != hyp[h - 1])
            dc, ds, di, dd = prev[h - 1]
            uc, us, ui, ud = prev[h]
            lc, ls, li, ld = row[h - 1]
            best = min((dc + miss, 0, ds + miss, di, dd),
                       (uc + 1, 1, us, ui, ud + 1),
                       (lc + 1, 2, ls, li + 1, ld))
            row[h] = (best[0],) + best[2:]
    _, s, i, d = row[H]
    return s, i, d


@dataclass(frozen=True)
class MetricReport:
    """Corpus error rates; the S/I/D counts are from the word alignment."""
    wer: float
    cer: float
    substitutions: int
    insertions: int
    deletions: int
    ref_words: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions


def _tokenize(text, mode):
    if mode == "wer":
        return text.split()
    if mode == "cer":
        return list(text)                   # Unicode scalar values
    raise ValueError(f"unknown mode {mode!r}")


def _rate(refs, hyps, mode):
    S = I = D = N = 0
    for ref, hyp in zip(refs, hyps):
        s, i, d = edit_distance(_tokenize(ref, mode), _tokenize(hyp, mode))
        S, I, D = S + s, I + i, D + d
        N += len(_tokenize(ref, mode))
    return (S + I + D) / max(N, 1), S, I, D, N


def error_report(refs, hyps) -> MetricReport:
    """WER and CER over paired reference/hypothesis strings."""
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references vs {len(hyps)} hypotheses")
    w, S, I, D, N = _rate(refs, hyps, "wer")
    c, *_ = _rate(refs, hyps, "cer")
    return MetricReport(wer=w, cer=c, substitutions=S, insertions=I,
                        deletions=D, ref_words=N)


def wer(refs, hyps) -> float:
    return _rate(refs, hyps, "wer")[0]


def cer(refs, hyps) -> float:
    return _rate(refs, hyps, "cer")[0]


# ---------------------------------------------------------------------------
# latency

LATENCY_STAGES = ("tokenizer", "backbone", "generator", "detokenizer")


@dataclass(frozen=True)
class LatencyTrace:
    """Per-stage wall-clock milliseconds for one response."""
    entries: tuple                      # ((stage, ms), ...), one per stage
    response_audio_s: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "entries",
                           tuple((str(s), float(ms)) for s, ms in self.entries))
        seen = [s for s, _ in self.entries]
        missing = [s for s in LATENCY_STAGES if s not in seen]
        if missing:
            raise ValueError(f"latency trace missing stages: {missing}")
        unknown = [s for s in seen if s not in LATENCY_STAGES]
        if unknown:
            raise ValueError(f"latency trace has unknown stages: {unknown}")
        if len(seen) != len(set(seen)):
            raise ValueError("latency trace repeats a stage")
        if any(ms < 0 for _, ms in self.entries):
            raise ValueError("latency entries must be >= 0")

    @property
    def stage_ms(self) -> dict:
        return dict(self.entries)

    @property
    def total_ms(self) -> float:
        return float(sum(ms for _, ms in self.entries))


def latency_report(trace: LatencyTrace, precision=0.1):
    """Aligned per-stage table. Returns (text, exact total in ms).

    The total row is the exact sum of the entries, rendered at the given
    reporting precision (default one decimal, 0.1 ms).
    """
    decimals = max(0, -int(np.floor(np.log10(precision))))
    by_stage = trace.stage_ms
    rows = [(s, f"{by_stage[s]:.{decimals}f}") for s in LATENCY_STAGES]
    total = trace.total_ms
    rows.append(("total", f"{total:.{decimals}f}"))
    w0 = max(len(r[0]) for r in rows)
    w1 = max(len(r[1]) for r in rows)
    lines = [f"latency breakdown for {trace.response_audio_s:g} s of response audio",
             f"{'stage':<{w0}}  {'ms':>{w1}}", f"{'-' * w0}  {'-' * w1}"]
    lines += [f"{name:<{w0}}  {ms:>{w1}}" for name, ms in rows]
    return "\n".join(lines), total


def chunk_latency_probe(tokenizer, durations_s=(2.0, 5.0, 10.0), seed=0,
                        amplitude=0.1, repeats=3):
    """Wall-clock per-chunk tokenizer cost across utterance durations.

    Streams noise utterances chunk by chunk on a single thread, averaging
    each chunk position over ``repeats`` passes, and fits a linear trend
    over the per-chunk times (first chunk excluded as warmup). Returns
    {duration: {chunks, ms, mean_ms, max_ms, max_over_mean,
    slope_ms_per_chunk, drift_ratio}}.
    """
    spc = tokenizer.cfg.samples_per_chunk
    gen = torch.Generator().manual_seed(seed)
    old_threads = torch.get_num_threads()
    torch.set_num_threads(1)
    out = {}
    try:
        with torch.no_grad():
            # untimed warmup pass so allocator and kernel setup costs land
            # before measurement
            warm = amplitude * torch.randn(2 * spc, generator=gen)
            st = tokenizer.new_state()
            for c in range(2):
                tokenizer.tokenize_chunk(st, warm[c * spc:(c + 1) * spc])
            for dur in durations_s:
                n_chunks = max(int(np.ceil(dur * tokenizer.cfg.sample_rate / spc)), 2)
                wave = amplitude * torch.randn(n_chunks * spc, generator=gen)
                acc = np.zeros(n_chunks)
                for _ in range(repeats):
                    state = tokenizer.new_state()
                    for c in range(n_chunks):
                        t0 = time.perf_counter()
                        tokenizer.tokenize_chunk(state, wave[c * spc:(c + 1) * spc])
                        acc[c] += time.perf_counter() - t0
                ms = (acc * 1e3 / repeats).tolist()
                body = np.asarray(ms[1:])       # first chunk pays warmup costs
                slope = float(np.polyfit(np.arange(body.size), body, 1)[0]) \
                    if body.size >= 2 else 0.0
                mean = float(body.mean())
                out[dur] = {
                    "chunks": n_chunks,
                    "ms": ms,
                    "mean_ms": mean,
                    "max_ms": float(body.max()),
                    "max_over_mean": float(body.max()) / mean,
                    "slope_ms_per_chunk": slope,
                    "drift_ratio": slope * max(body.size - 1, 1) / mean,
                }
    finally:
        torch.set_num_threads(old_threads)
    return out

"""Error rates and latency accounting."""

import pytest
import torch

from speechbridge.evaluate import (
    LATENCY_STAGES,
    LatencyTrace,
    MetricReport,
    cer,
    chunk_latency_probe,
    edit_distance,
    error_report,
    latency_report,
    wer,
)
from speechbridge.tokenizer import SpeechTokenizer


# edit distance ----------------------------------------------------------------

def test_edit_distance_basics():
    assert edit_distance("abc", "abc") == (0, 0, 0)
    assert edit_distance("abc", "axc") == (1, 0, 0)
    assert edit_distance("abc", "abxc") == (0, 1, 0)
    assert edit_distance("abc", "ac") == (0, 0, 1)
    assert edit_distance("", "ab") == (0, 2, 0)
    assert edit_distance("ab", "") == (0, 0, 2)
    assert edit_distance([], []) == (0, 0, 0)


def test_edit_distance_prefers_substitution_on_ties():
    # "a" -> "b" can be sub (cost 1) or del+ins (cost 2); sub must win
    assert edit_distance("a", "b") == (1, 0, 0)
    # total cost is minimal regardless of tie-breaking
    s, i, d = edit_distance("kitten", "sitting")
    assert s + i + d == 3 and (s, i, d) == (2, 1, 0)


def test_edit_distance_symmetric_cost():
    a, b = list("abcadb"), list("badcab")
    assert sum(edit_distance(a, b)) == sum(edit_distance(b, a))


# error rates --------------------------------------------------------------------

def test_wer_and_cer():
    refs = ["the cat sat", "on the mat"]
    hyps = ["the cat sat", "on a mat"]
    assert wer(refs, hyps) == pytest.approx(1 / 6)
    assert cer(["abcd"], ["abxd"]) == pytest.approx(1 / 4)
    assert wer(["hello"], ["hello"]) == 0.0


def test_error_report_counts():
    report = error_report(["a b c", "d e"], ["a x c y", "d"])
    assert isinstance(report, MetricReport)
    assert report.ref_words == 5
    assert report.substitutions == 1
    assert report.insertions == 1
    assert report.deletions == 1
    assert report.errors == 3
    assert report.wer == pytest.approx(3 / 5)


def test_error_report_length_mismatch():
    with pytest.raises(ValueError, match="references"):
        error_report(["a"], ["a", "b"])


def test_empty_reference_rate_is_insertions_over_floor():
    # guarded denominator: no reference words at all
    assert wer([""], ["spurious"]) == 1.0


# latency ------------------------------------------------------------------------

def test_latency_trace_validation():
    good = LatencyTrace(tuple(zip(LATENCY_STAGES, (1.0, 2.0, 3.0, 4.0))))
    assert good.total_ms == 10.0
    assert good.stage_ms["backbone"] == 2.0
    with pytest.raises(ValueError, match="missing"):
        LatencyTrace((("tokenizer", 1.0),))
    with pytest.raises(ValueError, match="unknown"):
        LatencyTrace(tuple(zip(LATENCY_STAGES, (1, 2, 3, 4))) + (("vocoder", 1.0),))
    with pytest.raises(ValueError, match="repeats"):
        LatencyTrace(tuple(zip(LATENCY_STAGES, (1, 2, 3, 4))) + (("tokenizer", 1.0),))
    with pytest.raises(ValueError, match=">= 0"):
        LatencyTrace(tuple(zip(LATENCY_STAGES, (1, 2, 3, -4))))


def test_latency_report_sums_at_reporting_precision():
    trace = LatencyTrace(tuple(zip(LATENCY_STAGES, (54.32, 123.16, 29.33, 1139.0))))
    text, total = latency_report(trace)
    assert total == pytest.approx(1345.81, abs=1e-9)
    assert f"{total:.1f}" == "1345.8"
    assert "tokenizer" in text and "total" in text
    lines = text.splitlines()
    assert lines[-1].split()[-1] == "1345.8"


def test_latency_report_precision_argument():
    trace = LatencyTrace(tuple(zip(LATENCY_STAGES, (1.234, 2.345, 3.456, 4.567))))
    text, _ = latency_report(trace, precision=0.01)
    assert "11.60" in text


def test_chunk_latency_probe_shape():
    tok = SpeechTokenizer(seed=0).eval()
    probe = chunk_latency_probe(tok, durations_s=(1.28,), repeats=1)
    stats = probe[1.28]
    assert stats["chunks"] == 2
    assert len(stats["ms"]) == 2
    assert stats["mean_ms"] > 0
    assert "drift_ratio" in stats and "slope_ms_per_chunk" in stats

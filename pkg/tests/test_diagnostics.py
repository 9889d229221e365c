"""Quick-mode gradient audit; the full suite runs in the acceptance tests."""

from speechbridge.diagnostics import GRADCHECK_TOL, gradcheck_suite


def test_gradcheck_suite_quick():
    results = gradcheck_suite(quick=True)
    names = {r["module"] for r in results}
    assert {"tokenizer", "phoneme_head", "projector_mlp", "projector_cnn",
            "projector_transformer", "generator", "detokenizer",
            "ctc_loss"} <= names
    for r in results:
        assert r["passed"], f"{r['module']}: {r['max_rel_err']:.3e}"
        assert r["max_rel_err"] < GRADCHECK_TOL

"""Operator command line: training stages, data builds, inference, reports.

Exit codes: 0 success, 1 I/O, 2 file format, 3 dimension mismatch,
4 stage-ordering violation. Every command writes byte-identical artifacts
for identical inputs and seeds; files holding wall-clock measurements are
the one exception.
"""

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, replace

import torch

from .backbone import Backbone, BackboneConfig, decode_text
from .detok import Detokenizer, synthesize_utterance
from .errors import DimensionMismatch, FormatError, StageOrderError
from .evaluate import (LatencyTrace, chunk_latency_probe, error_report,
                       latency_report)
from .formats import (OUTPUT_SAMPLE_RATE, load_tokens, read_wav, save_tokens,
                      write_wav)
from .fsq import index_to_code
from .generator import TokenGenerator
from .melspec import griffin_lim, log_to_magnitude
from .nn.checkpoint import load_module, save_module
from .presets import (PAPER_PROJECTOR_PARAMS, PAPER_TOKENIZER_PARAMS, PRESETS,
                      count_parameters, get_preset)
from .projector import Projector
from .tokenizer import SpeechTokenizer
from .training import STAGES, TrainConfig, require_checkpoint

# workdir layout shared by cmd_train and cmd_respond
CKPT = {
    "tokenizer": "tokenizer.solw",
    "tokenizer_ctc": "tokenizer_ctc.solw",
    "projector_stage1": "projector_stage1.solw",
    "projector": "projector.solw",
    "text_projector": "text_projector.solw",
    "generator": "generator.solw",
    "detokenizer": "detokenizer.solw",
    "backbone": "backbone.json",
}

# per-stage defaults tuned so each run stays in CPU minutes
STAGE_DEFAULTS = {
    "tok_ctc": dict(steps=3500, lr=1e-3, batch_size=6, corpus=512),
    "proj_stage1": dict(steps=400, lr=2e-3, batch_size=4, corpus=16),
    "proj_stage2": dict(steps=150, lr=1e-3, batch_size=4, corpus=16),
    "text_proj": dict(steps=300, lr=1e-3, batch_size=4, corpus=50),
    "tok_gen": dict(steps=300, lr=2e-3, batch_size=4, corpus=50),
    "detok": dict(steps=300, lr=2e-3, batch_size=4, corpus=12),
}


@dataclass(frozen=True)
class PipelineManifest:
    """Checkpoint paths for one end-to-end system."""
    tokenizer: str
    projector: str
    backbone: str
    generator: str
    detokenizer: str
    preset: str = "desk_scale"

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise FormatError(f"unknown preset {self.preset!r}")

    @classmethod
    def from_workdir(cls, workdir, preset="desk_scale"):
        proj = os.path.join(workdir, CKPT["projector"])
        if not os.path.exists(proj):
            proj = os.path.join(workdir, CKPT["projector_stage1"])
        return cls(
            tokenizer=os.path.join(workdir, CKPT["tokenizer"]),
            projector=proj,
            backbone=os.path.join(workdir, CKPT["backbone"]),
            generator=os.path.join(workdir, CKPT["generator"]),
            detokenizer=os.path.join(workdir, CKPT["detokenizer"]),
            preset=preset,
        )

    def checkpoints(self):
        return (self.tokenizer, self.projector, self.backbone,
                self.generator, self.detokenizer)


def _configs(args):
    cfgs = get_preset(getattr(args, "preset", "desk_scale"))
    path = getattr(args, "config", None)
    if path:
        with open(path) as f:
            overrides = json.load(f)
        if not isinstance(overrides, dict):
            raise FormatError(f"{path}: config must be a JSON object")
        for module, fields in overrides.items():
            if module not in cfgs:
                raise FormatError(f"{path}: unknown config section {module!r}")
            try:
                cfgs[module] = replace(cfgs[module], **fields)
            except TypeError as e:
                raise FormatError(f"{path}: {module}: {e}") from None
    return cfgs


def _load_backbone(path):
    with open(path) as f:
        stored = json.load(f)
    bb = Backbone(BackboneConfig(**stored["config"]))
    if bb.checksum() != stored["checksum"]:
        raise RuntimeError(f"{path}: backbone no longer reproduces its recorded "
                           f"checksum; construction is no longer deterministic")
    return bb


def _store_backbone(path, bb):
    payload = {"config": asdict(bb.cfg), "checksum": bb.checksum()}
    if os.path.exists(path):
        with open(path) as f:
            prior = json.load(f)
        if prior != payload:
            raise RuntimeError(f"{path}: existing backbone manifest disagrees")
        return
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)


def load_pipeline(manifest: PipelineManifest):
    """Builds all five modules and cross-checks their dimensions."""
    for p in manifest.checkpoints():
        if not os.path.exists(p):
            raise FileNotFoundError(p)
    cfgs = get_preset(manifest.preset)
    tok = SpeechTokenizer(cfgs["tokenizer"], with_head=False)
    load_module(manifest.tokenizer, tok)
    bb = _load_backbone(manifest.backbone)
    proj = Projector(cfgs["projector"])
    load_module(manifest.projector, proj)
    proj.check_attach(bb)
    gen = TokenGenerator(cfgs["generator"])
    load_module(manifest.generator, gen)
    if gen.cfg.in_dim != bb.cfg.embed_dim:
        raise DimensionMismatch(
            f"generator expects hidden width {gen.cfg.in_dim}, "
            f"backbone emits {bb.cfg.embed_dim}")
    if len(cfgs["tokenizer"].fsq_levels) != proj.cfg.in_dim:
        raise DimensionMismatch(
            f"projector input width {proj.cfg.in_dim} != "
            f"{len(cfgs['tokenizer'].fsq_levels)} quantizer dims")
    det = Detokenizer(cfgs["detokenizer"])
    load_module(manifest.detokenizer, det)
    return tok, proj, bb, gen, det


# ---------------------------------------------------------------------------
# inference commands


def cmd_tokenize(args):
    cfgs = _configs(args)
    tok = SpeechTokenizer(cfgs["tokenizer"], with_head=False, seed=args.seed)
    if args.checkpoint:
        load_module(args.checkpoint, tok)
    wave = torch.from_numpy(read_wav(args.audio))
    with torch.no_grad():
        tokens = tok.stream_utterance(wave)
    save_tokens(args.out, tokens)
    print(f"{args.out}: {tokens.shape[0]} tokens "
          f"({tokens.shape[0] / 12.5:.2f} s at 12.5 Hz)")
    return 0


def cmd_detokenize(args):
    cfgs = _configs(args)
    det = Detokenizer(cfgs["detokenizer"], seed=args.seed)
    if args.checkpoint:
        load_module(args.checkpoint, det)
    tokens, _ = load_tokens(args.tokens)
    tokens = torch.from_numpy(tokens)
    ode_steps = args.ode_steps or det.cfg.ode_steps
    mel = synthesize_utterance(det, tokens, ode_steps=ode_steps, seed=args.seed)
    wave = griffin_lim(log_to_magnitude(mel))
    write_wav(args.out, wave, OUTPUT_SAMPLE_RATE)
    print(f"{args.out}: {wave.shape[0] / OUTPUT_SAMPLE_RATE:.2f} s "
          f"from {tokens.shape[0]} tokens via {ode_steps} ODE steps")
    return 0


def run_respond(manifest: PipelineManifest, audio_path, out_wav,
                max_text=24, max_speech_tokens=38, seed=0, active_mtp=None):
    """tokenize -> project -> generate text -> speech tokens -> waveform.

    Returns (answer text, speech tokens, LatencyTrace). Asserts the rate
    ledger at every hop: samples/1280 tokens in, x6 conditioning, 7.5 mel
    frames per token, 256 samples per frame out.
    """
    tok, proj, bb, gen, det = load_pipeline(manifest)
    wave = torch.from_numpy(read_wav(audio_path))

    t0 = time.perf_counter()
    with torch.no_grad():
        tokens = tok.stream_utterance(wave)
    t1 = time.perf_counter()
    want = math.ceil(wave.shape[0] / tok.cfg.samples_per_token)
    if tokens.shape[0] != want:
        raise RuntimeError(f"rate ledger: {wave.shape[0]} samples must give "
                           f"{want} tokens, got {tokens.shape[0]}")

    with torch.no_grad():
        emb = proj.project_codes(index_to_code(tokens))
        if emb.shape[0] != tokens.shape[0]:
            raise RuntimeError("rate ledger: projector must not resample time")
        ids, hidden = bb.generate(emb, max_new=max_text)
    t2 = time.perf_counter()
    answer = decode_text(ids)
    if hidden.shape[0] == 0:
        raise RuntimeError("backbone produced no answer tokens to condition on")

    with torch.no_grad():
        trace = gen.generate_speech_tokens(hidden, max_len=max_speech_tokens,
                                           active_mtp=active_mtp)
    t3 = time.perf_counter()
    speech = torch.tensor(trace.tokens, dtype=torch.long)
    if speech.shape[0] == 0:
        raise RuntimeError("token generator emitted no speech tokens")

    mel = synthesize_utterance(det, speech, seed=seed)
    if mel.shape[0] != det.cfg.frames_for_tokens(speech.shape[0]):
        raise RuntimeError("rate ledger: mel frames != ceil(tokens * 7.5)")
    audio = griffin_lim(log_to_magnitude(mel))
    if audio.shape[0] != mel.shape[0] * 256:
        raise RuntimeError("rate ledger: 256 samples per mel frame")
    t4 = time.perf_counter()

    write_wav(out_wav, audio, OUTPUT_SAMPLE_RATE)
    lat = LatencyTrace(
        entries=(("tokenizer", (t1 - t0) * 1e3), ("backbone", (t2 - t1) * 1e3),
                 ("generator", (t3 - t2) * 1e3), ("detokenizer", (t4 - t3) * 1e3)),
        response_audio_s=audio.shape[0] / OUTPUT_SAMPLE_RATE)
    return answer, speech, lat


def cmd_respond(args):
    if args.manifest:
        with open(args.manifest) as f:
            manifest = PipelineManifest(**json.load(f))
    else:
        manifest = PipelineManifest.from_workdir(args.workdir, args.preset)
    out_txt = os.path.splitext(args.out)[0] + ".txt"
    out_trace = os.path.splitext(args.out)[0] + ".trace.jsonl"
    out_table = os.path.splitext(args.out)[0] + ".latency.txt"
    made = []
    try:
        answer, speech, lat = run_respond(
            manifest, args.audio, args.out, max_text=args.max_text,
            max_speech_tokens=args.max_speech_tokens, seed=args.seed)
        made.append(args.out)
        with open(out_txt, "w") as f:
            f.write(answer + "\n")
        made.append(out_txt)
        table, total = latency_report(lat)
        from .reports import write_jsonl
        write_jsonl(out_trace, [{"stage": s, "ms": ms} for s, ms in lat.entries]
                    + [{"stage": "total", "ms": total}])
        made.append(out_trace)
        with open(out_table, "w") as f:
            f.write(table + "\n")
        made.append(out_table)
    except BaseException:
        for p in made + [args.out]:
            if os.path.exists(p):
                os.unlink(p)
        raise
    print(f"answer: {answer!r}")
    print(f"speech: {speech.shape[0]} tokens -> {args.out}")
    print(table)
    return 0


# ---------------------------------------------------------------------------
# training command


def _train_stage(args, cfgs, workdir):
    from .data.desk import (build_asr_corpus, build_detok_corpus,
                            build_qa_corpus, build_triplets)
    from . import training as T
    from .reports import loss_curve_figure, write_jsonl

    stage = args.stage
    d = STAGE_DEFAULTS[stage]
    tc = TrainConfig(stage=stage, lr=args.lr or d["lr"],
                     steps=args.steps if args.steps is not None else d["steps"],
                     batch_size=d["batch_size"], seed=args.seed)
    count = d["corpus"]
    paths = {k: os.path.join(workdir, v) for k, v in CKPT.items()}

    def trained_tokenizer(with_head=False):
        require_checkpoint(paths["tokenizer"], stage)
        t = SpeechTokenizer(cfgs["tokenizer"], with_head=with_head)
        load_module(paths["tokenizer" if not with_head else "tokenizer_ctc"], t)
        return t

    def backbone():
        bb = Backbone(cfgs["backbone"])
        _store_backbone(paths["backbone"], bb)
        return bb

    if stage == "tok_ctc":
        tok = SpeechTokenizer(cfgs["tokenizer"], with_head=True, seed=args.seed)
        corpus = build_asr_corpus(count=count, seed=args.seed)
        metrics = T.train_tokenizer(tok, corpus, tc)
        held = build_asr_corpus(count=max(count // 4, 4), seed=args.seed + 7777)
        per = T.phoneme_error_rate(tok, held)
        save_module(paths["tokenizer"], tok, meta={"stage": stage},
                    exclude_prefixes=("phoneme_head.",))
        save_module(paths["tokenizer_ctc"], tok, meta={"stage": stage})
        print(f"held-out phoneme error rate: {per:.3f}")

    elif stage in ("proj_stage1", "proj_stage2"):
        if stage == "proj_stage2":
            require_checkpoint(paths["projector_stage1"], stage)
        tok = trained_tokenizer()
        bb = backbone()
        corpus = build_asr_corpus(count=count, seed=args.seed)
        items = [T.asr_item(tok, w, tr) for w, _, tr in corpus]
        proj = Projector(cfgs["projector"], seed=args.seed)
        if stage == "proj_stage1":
            before = T.projector_eval_loss(proj, bb, items)
            metrics = T.train_projector(proj, bb, items, tc)
            after = T.projector_eval_loss(proj, bb, items)
            save_module(paths["projector_stage1"], proj, meta={"stage": stage})
            print(f"ASR loss {before:.4f} -> {after:.4f} "
                  f"({(before - after) / before:.1%} fall)")
        else:
            load_module(paths["projector_stage1"], proj)
            qa = build_qa_corpus(count=count, seed=args.seed + 100)
            qa_items = [T.asr_item(tok, w, a) for w, _, a in qa]
            metrics = T.train_projector(proj, bb, items, tc, qa_items=qa_items)
            save_module(paths["projector"], proj, meta={"stage": stage})
        bb.assert_frozen()

    elif stage == "text_proj":
        tok = trained_tokenizer()
        bb = backbone()
        trips = build_triplets(tok, count=count, seed=args.seed + 200)
        tp_cfg = replace(cfgs["projector"], input_kind="text_embeddings",
                         in_dim=bb.cfg.embed_dim)
        tp = Projector(tp_cfg, seed=args.seed + 1)
        metrics = T.train_text_projector(tp, bb, trips, tc)
        save_module(paths["text_projector"], tp, meta={"stage": stage})
        bb.assert_frozen()

    elif stage == "tok_gen":
        require_checkpoint(paths["text_projector"], stage)
        tok = trained_tokenizer()
        bb = backbone()
        tp_cfg = replace(cfgs["projector"], input_kind="text_embeddings",
                         in_dim=bb.cfg.embed_dim)
        tp = Projector(tp_cfg)
        load_module(paths["text_projector"], tp)
        trips = build_triplets(tok, count=count, seed=args.seed + 200)
        gen = TokenGenerator(cfgs["generator"], seed=args.seed + 2)
        metrics, items = T.train_token_generator(gen, bb, tp, trips, tc)
        acc = T.teacher_forced_accuracy(gen, items)
        save_module(paths["generator"], gen, meta={"stage": stage})
        print(f"teacher-forced speech-token accuracy: {acc:.1%}")
        bb.assert_frozen()

    elif stage == "detok":
        tok = trained_tokenizer()
        corpus = build_detok_corpus(tok, count=count, seed=args.seed + 300)
        det = Detokenizer(cfgs["detokenizer"], seed=args.seed + 3)
        before = T.detok_eval_loss(det, corpus, seed=args.seed)
        metrics = T.train_detokenizer(det, corpus, tc)
        after = T.detok_eval_loss(det, corpus, seed=args.seed)
        save_module(paths["detokenizer"], det, meta={"stage": stage})
        print(f"flow-matching loss {before:.4f} -> {after:.4f} "
              f"({(before - after) / before:.1%} fall)")

    else:
        raise ValueError(f"unknown stage {stage!r}")

    write_jsonl(os.path.join(workdir, f"metrics_{stage}.jsonl"), metrics)
    loss_curve_figure(metrics, os.path.join(workdir, f"loss_{stage}.png"),
                      title=f"{stage} loss")
    print(f"{stage}: {len(metrics)} steps, "
          f"loss {metrics[0]['loss']:.4f} -> {metrics[-1]['loss']:.4f}")
    return 0


def cmd_train(args):
    if args.stage not in STAGES:
        raise FormatError(f"unknown stage {args.stage!r}, expected one of {STAGES}")
    cfgs = _configs(args)
    os.makedirs(args.workdir, exist_ok=True)
    return _train_stage(args, cfgs, args.workdir)


# ---------------------------------------------------------------------------
# data, eval, reports


def cmd_qtats(args):
    from .data.manifest import load_manifest
    from .data.qtats import build_qtats, get_question_client, save_triplets
    cfgs = _configs(args)
    records, errors = load_manifest(args.manifest)
    for line_no, _, reason in errors:
        print(f"{args.manifest}:{line_no}: skipped ({reason})", file=sys.stderr)
    tok = SpeechTokenizer(cfgs["tokenizer"], with_head=False, seed=args.seed)
    if args.tokenizer:
        load_module(args.tokenizer, tok)
    client = get_question_client()
    triplets, failures = build_qtats(records, client, tok,
                                     max_workers=args.workers)
    assert len(triplets) + len(failures) == len(records)
    os.makedirs(args.token_dir, exist_ok=True)
    save_triplets(args.out, triplets, args.token_dir)
    for record, reason in failures:
        print(f"failed {record.audio_path}: {reason}", file=sys.stderr)
    print(f"{len(records)} records -> {len(triplets)} triplets, "
          f"{len(failures)} failures (conserved)")
    return 0


def cmd_eval(args):
    from .reports import error_counts_figure, render_table, write_jsonl
    with open(args.refs) as f:
        refs = [line.rstrip("\n") for line in f]
    with open(args.hyps) as f:
        hyps = [line.rstrip("\n") for line in f]
    rep = error_report(refs, hyps)
    table = render_table(
        ("metric", "value"),
        [("wer", round(rep.wer, 4)), ("cer", round(rep.cer, 4)),
         ("substitutions", rep.substitutions), ("insertions", rep.insertions),
         ("deletions", rep.deletions), ("ref_words", rep.ref_words)])
    print(table)
    if args.report_dir:
        os.makedirs(args.report_dir, exist_ok=True)
        write_jsonl(os.path.join(args.report_dir, "eval.jsonl"), [{
            "wer": rep.wer, "cer": rep.cer, "substitutions": rep.substitutions,
            "insertions": rep.insertions, "deletions": rep.deletions,
            "ref_words": rep.ref_words}])
        error_counts_figure(rep, os.path.join(args.report_dir, "eval.png"))
        with open(os.path.join(args.report_dir, "eval.txt"), "w") as f:
            f.write(table + "\n")
    return 0


def cmd_latency(args):
    from .reports import latency_series_figure, render_table, write_jsonl
    cfgs = _configs(args)
    tok = SpeechTokenizer(cfgs["tokenizer"], with_head=False, seed=args.seed)
    if args.tokenizer:
        load_module(args.tokenizer, tok)
    durations = tuple(float(d) for d in args.durations.split(","))
    stats = chunk_latency_probe(tok, durations_s=durations, seed=args.seed,
                                repeats=args.repeats)
    rows = [(f"{d:g}", s["chunks"], round(s["mean_ms"], 3),
             round(s["max_over_mean"], 3), round(s["slope_ms_per_chunk"], 5),
             round(s["drift_ratio"], 4))
            for d, s in stats.items()]
    table = render_table(
        ("duration_s", "chunks", "mean_ms", "max/mean", "slope_ms", "drift"),
        rows)
    print(table)
    if args.trace:
        with open(args.trace) as f:
            stage_ms = json.load(f)
        trace = LatencyTrace(tuple(stage_ms.items()))
        text, total = latency_report(trace)
        print(text)
    if args.report_dir:
        os.makedirs(args.report_dir, exist_ok=True)
        write_jsonl(os.path.join(args.report_dir, "latency.jsonl"),
                    [{"duration_s": d, **{k: v for k, v in s.items()}}
                     for d, s in stats.items()])
        latency_series_figure(stats, os.path.join(args.report_dir, "latency.png"))
        with open(os.path.join(args.report_dir, "latency.txt"), "w") as f:
            f.write(table + "\n")
    return 0


def cmd_gradcheck(args):
    from .diagnostics import GRADCHECK_TOL, gradcheck_suite
    from .reports import render_table
    results = gradcheck_suite(quick=args.quick)
    table = render_table(
        ("module", "max_rel_err", "seconds", "status"),
        [(r["module"], f"{r['max_rel_err']:.3e}", round(r["seconds"], 2),
          "pass" if r["passed"] else "FAIL") for r in results])
    print(table)
    print(f"tolerance: {GRADCHECK_TOL:g} (64-bit central differences)")
    return 0 if all(r["passed"] for r in results) else 1


def cmd_paramcount(args):
    from .reports import render_table
    cfgs = _configs(args)
    rows = []
    tok = SpeechTokenizer(cfgs["tokenizer"], with_head=False)
    n_tok = count_parameters(tok)
    del tok
    rows.append(("tokenizer (no phoneme head)", n_tok))
    proj = Projector(cfgs["projector"])
    n_proj = count_parameters(proj)
    del proj
    rows.append(("projector", n_proj))
    if args.preset == "desk_scale":
        bb = Backbone(cfgs["backbone"])
        rows.append(("backbone (frozen)", count_parameters(bb)))
        gen = TokenGenerator(cfgs["generator"])
        rows.append(("generator", count_parameters(gen)))
        det = Detokenizer(cfgs["detokenizer"])
        rows.append(("detokenizer", count_parameters(det)))
    print(render_table(("module", "parameters"), rows))
    if args.preset == "paper_scale":
        for name, got, target in (("tokenizer", n_tok, PAPER_TOKENIZER_PARAMS),
                                  ("projector", n_proj, PAPER_PROJECTOR_PARAMS)):
            dev = abs(got - target) / target
            print(f"{name}: {got / 1e6:.2f}M vs published {target / 1e6:.0f}M "
                  f"({dev:.2%} deviation)")
    return 0


# ---------------------------------------------------------------------------
# argument surface


def build_parser():
    p = argparse.ArgumentParser(prog="speechbridge",
                                description="streaming speech-token bridge")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=PRESETS, default="desk_scale")
    p.add_argument("--config", help="JSON file with per-module config overrides")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("tokenize", help="WAV -> speech token file")
    s.add_argument("audio")
    s.add_argument("out")
    s.add_argument("--checkpoint")
    s.set_defaults(func=cmd_tokenize)

    s = sub.add_parser("detokenize", help="speech token file -> WAV")
    s.add_argument("tokens")
    s.add_argument("out")
    s.add_argument("--checkpoint")
    s.add_argument("--ode-steps", type=int, default=None)
    s.set_defaults(func=cmd_detokenize)

    s = sub.add_parser("respond", help="speech question -> speech answer")
    s.add_argument("audio")
    s.add_argument("out")
    s.add_argument("--workdir", default="work")
    s.add_argument("--manifest", help="pipeline manifest JSON (overrides workdir)")
    s.add_argument("--max-text", type=int, default=24)
    s.add_argument("--max-speech-tokens", type=int, default=38)
    s.set_defaults(func=cmd_respond)

    s = sub.add_parser("train", help="run one training stage")
    s.add_argument("--stage", required=True)
    s.add_argument("--workdir", default="work")
    s.add_argument("--steps", type=int, default=None)
    s.add_argument("--lr", type=float, default=None)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("qtats", help="ASR manifest -> question/answer triplets")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--token-dir", required=True)
    s.add_argument("--tokenizer", help="tokenizer checkpoint")
    s.add_argument("--workers", type=int, default=4)
    s.set_defaults(func=cmd_qtats)

    s = sub.add_parser("eval", help="reference/hypothesis files -> WER/CER")
    s.add_argument("--refs", required=True)
    s.add_argument("--hyps", required=True)
    s.add_argument("--report-dir")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("latency", help="per-chunk streaming cost probe")
    s.add_argument("--durations", default="2,5,10")
    s.add_argument("--repeats", type=int, default=3)
    s.add_argument("--tokenizer", help="tokenizer checkpoint")
    s.add_argument("--trace", help="JSON {stage: ms} end-to-end trace to render")
    s.add_argument("--report-dir")
    s.set_defaults(func=cmd_latency)

    s = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    s.add_argument("--quick", action="store_true")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("paramcount", help="construct preset modules and count")
    s.set_defaults(func=cmd_paramcount)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except StageOrderError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except DimensionMismatch as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

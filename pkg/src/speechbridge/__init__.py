"""Speech-in / speech-out extension modules for a frozen text backbone.

The package is organised around five neural components plus the plumbing
that trains and evaluates them:

- ``tokenizer``: streaming discrete speech tokenizer (causal convs ->
  chunked causal transformer -> downsampling -> finite scalar quantizer).
- ``projector``: maps speech codes (or text embeddings) into the frozen
  backbone's input embedding space.
- ``backbone``: a seeded, frozen decoder-only reference backbone.
- ``generator``: encoder-decoder speech-token generator with
  multi-token-prediction heads.
- ``detok``: flow-matching mel de-tokenizer plus a classical
  phase-reconstruction vocoder fallback.

Everything is CPU-sized by default (the ``desk`` preset); the ``paper``
preset builds the full-size architectures for parameter accounting.
"""

__version__ = "0.1.0"

from .manifest import AsrRecord, load_manifest, write_manifest
from .synth import SynthSpec, make_corpus, synth_utterance
from .qtats import (MockQuestionClient, QtatsTriplet, RemoteQuestionClient,
                    build_qtats, get_question_client, load_triplets,
                    mock_question, save_triplets)
from .desk import (build_asr_corpus, build_detok_corpus, build_qa_corpus,
                   build_triplets, qa_answer)

__all__ = [
    "AsrRecord", "load_manifest", "write_manifest",
    "SynthSpec", "make_corpus", "synth_utterance",
    "MockQuestionClient", "QtatsTriplet", "RemoteQuestionClient",
    "build_qtats", "get_question_client", "load_triplets",
    "mock_question", "save_triplets",
    "build_asr_corpus", "build_detok_corpus", "build_qa_corpus",
    "build_triplets", "qa_answer",
]

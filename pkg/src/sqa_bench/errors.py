"""Exception types raised across the toolkit.

Every error carries a short machine-readable ``code`` so the CLI can emit a
structured record on stderr.
"""


class SQAError(Exception):
    code = "error"

    def to_record(self):
        return {"error": self.code, "type": type(self).__name__, "message": str(self)}


# corpus
class MalformedInput(SQAError):
    code = "malformed_input"


class OffsetOutOfRange(SQAError):
    code = "offset_out_of_range"


class MissingTranscript(SQAError):
    code = "missing_transcript"


# asr_sim
class EmptyReference(SQAError):
    code = "empty_reference"


class EmptyLexicon(SQAError):
    code = "empty_lexicon"


class InvalidChannelConfig(SQAError):
    code = "invalid_channel_config"


class InsufficientCorpus(SQAError):
    code = "insufficient_corpus"


class Unreachable(SQAError):
    code = "unreachable"


# subword
class EmptyWord(SQAError):
    code = "empty_word"


class InvalidLexicon(SQAError):
    code = "invalid_lexicon"


class PatternConflict(SQAError):
    code = "pattern_conflict"


# metrics
class EmptyReferences(SQAError):
    code = "empty_references"


class DegenerateInterval(SQAError):
    code = "degenerate_interval"


class AnswerUnalignable(SQAError):
    code = "answer_unalignable"


class IndexOutOfRange(SQAError):
    code = "index_out_of_range"


class EmptyRecords(SQAError):
    code = "empty_records"


# neural
class UnknownPhonemeId(SQAError):
    code = "unknown_phoneme_id"


class NoForwardState(SQAError):
    code = "no_forward_state"


class EmptyDocument(SQAError):
    code = "empty_document"


class InvalidSpan(SQAError):
    code = "invalid_span"


class CheckpointFormatError(SQAError):
    code = "checkpoint_format"


# harness
class VocabularyMismatch(SQAError):
    code = "vocabulary_mismatch"


class InvalidExperimentSpec(SQAError):
    code = "invalid_experiment_spec"

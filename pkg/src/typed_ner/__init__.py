"""Type-oriented generative named entity recognition.

A sentence/type matcher narrows the candidate schema, prompts carry the
narrowed list as a hint, and outputs are parsed and scored at entity level.
Learned computation sits behind :mod:`typed_ner.backends`.
"""

from .codec import ParseOutcome, parse_exp, parse_mentions, serialize_exp, serialize_mentions
from .errors import (BackendError, CodecError, ConfigurationError, CorpusParseError,
                     DegenerateInputError, ReferentialIntegrityError, SchemaMismatchError,
                     TypedNerError)
from .types import (AnnotatedExample, ClassifierLogits, EntityMention, EntityType,
                    FilteredSchema, MatchScore, TokenLogProbs, TypeSchema, conll2003_schema,
                    derive_type_sets, load_schema)

__version__ = "0.1.0"

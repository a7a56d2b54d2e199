"""Offline token-embedding exporter.

Runs a frozen pretrained transformer encoder over a two-column CoNLL corpus
and writes one final-hidden-layer vector per corpus token in the EMBV1
binary format, pooling word pieces to word level. The encoder is never
fine-tuned; exports are deterministic for a fixed encoder.
"""

from .encode import ExportJob, export
from .errors import AlignmentError, CorpusFormatError, EncoderLoadError, ExportError

__version__ = "0.1.0"

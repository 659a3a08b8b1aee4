"""Speech-to-text translation with inference-time named-entity dictionaries, desk scale.

Pipeline: synthetic corpus generation -> jointly trained shared text/speech
encoder -> cross-modal NE detector -> CLAS-style bias decoding, with a
class-LM shallow-fusion baseline and paper-style metrics.
"""

__version__ = "0.1.0"

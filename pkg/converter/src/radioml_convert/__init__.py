"""radioml-convert: RadioML 2018.01A HDF5 -> GAMC frame file converter.

Talks to the classification pipeline purely through its on-disk frame
format; sample values are float32 passthrough, bit-exact.
"""

from .convert import (
    CANONICAL_CLASSES,
    RELEASE_CLASS_ORDER,
    RELEASE_TO_CANONICAL,
    ConversionManifest,
    SchemaError,
    convert,
)

__version__ = "0.1.0"

__all__ = [
    "CANONICAL_CLASSES",
    "RELEASE_CLASS_ORDER",
    "RELEASE_TO_CANONICAL",
    "ConversionManifest",
    "SchemaError",
    "convert",
    "__version__",
]

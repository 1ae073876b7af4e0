"""gestextract: raw video -> detection record stream.

Wraps per-role vision adapters (person detection + tracking, action
classification, object detection, depth estimation, scene classification)
behind one extraction loop that emits the record schema documented by the
downstream pipeline (docs/ingest_schema.md in the gestpipe repo). Any model
with compatible outputs can register as an adapter; the builtin roster uses
classical CV so the harness runs anywhere.
"""

from gestextract.extract import ExtractError, ExtractorConfig, extract

__version__ = "0.1.0"

__all__ = ["ExtractError", "ExtractorConfig", "extract", "__version__"]

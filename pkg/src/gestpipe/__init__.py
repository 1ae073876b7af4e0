"""gestpipe: per-frame video detections -> event graph -> text description.

The package is organized as one module per pipeline stage:

- :mod:`gestpipe.ingest` -- detection record schema, parsing, validation
- :mod:`gestpipe.identity` -- tracker id unification and re-identification
- :mod:`gestpipe.actions` -- confidence filtering and temporal voting
- :mod:`gestpipe.events` -- object association and event aggregation
- :mod:`gestpipe.relations` -- spatial and temporal edges between events
- :mod:`gestpipe.graph` -- graph assembly, sorting, grouping, DOT export
- :mod:`gestpipe.protolang` -- deterministic textual rendering of the graph
- :mod:`gestpipe.llm` -- prompt assembly and completion client with replay
- :mod:`gestpipe.metrics` -- BLEU@4 / ROUGE-L corpus evaluation
- :mod:`gestpipe.pipeline` -- frames-to-graph orchestration
- :mod:`gestpipe.cli` -- command line entry points
"""

from gestpipe.ingest import (
    BBox,
    FrameRecord,
    PipelineConfig,
    VideoMeta,
    parse_video_record,
    serialize_video_record,
    validate,
)
from gestpipe.graph import GestGraph, build_graph, export_dot
from gestpipe.pipeline import build_gest, render_graph_description

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "FrameRecord",
    "GestGraph",
    "PipelineConfig",
    "VideoMeta",
    "build_gest",
    "build_graph",
    "export_dot",
    "parse_video_record",
    "render_graph_description",
    "serialize_video_record",
    "validate",
    "__version__",
]

"""streamslu: alignment-free sequence losses and a streaming SLU harness."""

__version__ = "0.1.0"

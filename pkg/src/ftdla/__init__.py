"""Cross-layer design-space exploration for fault-tolerant DNN accelerators."""

__version__ = "0.1.0"

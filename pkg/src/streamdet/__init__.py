"""Streaming LiDAR object detection: slicing, stateful NMS, latency model."""

__version__ = "0.1.0"

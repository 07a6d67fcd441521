"""Fixed-point arrival processes and interchangeable servers for discrete and continuous queues."""

__version__ = "0.1.0"

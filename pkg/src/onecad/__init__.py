"""Class-count-agnostic image classification by painting and reading back label text."""

__version__ = "0.1.0"

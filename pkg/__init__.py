"""
steerbench - steerability evaluation harness for text-rewriting language models
"""

__version__ = "0.1.0"

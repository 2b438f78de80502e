"""Single-image bacterial swarming detection pipeline.

Subpackages cover the full desk-scale workflow: an agent-based simulator
of confined bacterial motion, long-exposure image preprocessing, an
attention-gated convolutional classifier, training, and threshold/ROC
evaluation.
"""

__version__ = "0.1.0"

"""Central TensorFlow import: quiet logs and deterministic ops.

Import ``tf``/``keras`` from here so the environment variable is set before
TensorFlow initializes and op determinism is enabled exactly once.
"""

import os

os.environ.setdefault("TF_CPP_MIN_LOG_LEVEL", "2")

import tensorflow as tf  # noqa: E402
import keras  # noqa: E402

tf.config.experimental.enable_op_determinism()

__all__ = ["tf", "keras"]

"""Blood-smear leukemia classification pipeline.

Builds a merged binary Normal/Cancer manifest from two public corpora,
segments white blood cells by an HSV purple band, fine-tunes pretrained
image-classification backbones, and reports the full metric suite.
"""

__version__ = "0.1.0"

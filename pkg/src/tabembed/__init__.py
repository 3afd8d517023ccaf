"""tabembed: tabular-to-text feature extraction and benchmarking toolkit.

Converts tabular records into text, obtains token embeddings and
log-probabilities from a pluggable language-model backend, pools them
into fixed-size feature vectors, and benchmarks them against raw-feature
baselines with from-scratch classifiers and a statistical evaluation
suite.
"""

__version__ = "0.1.0"

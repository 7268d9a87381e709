"""Privacy-preserving acoustic-cohort pipeline.

Clusters utterance embeddings without any demographic metadata (PCA then
K-means with elbow selection), emits one-hot cluster-conditioning features
with an unknown-masking policy, and evaluates per-demographic-group WER
fairness reports.
"""

__version__ = "0.1.0"

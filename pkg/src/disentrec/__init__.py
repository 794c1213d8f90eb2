"""Disentanglement and interpretability measures for recommender user representations.

Modules
-------
dataio       interaction ingestion, k-core filtering, splits and snapshots
factors      tag clustering and binary user factors
learners     Top-Popular, PureSVD, MultiDAE, MultiVAE, beta-VAE, MacridVAE
rankeval     NDCG / Recall / MRR / Coverage at k
probeclf     gradient-boosted tree probes
dci          disentanglement and completeness from importance matrices
attribution  LIME / KernelSHAP and the global JS interpretability score
stats        repeated-measures correlation
synth        synthetic data with planted factors
harness      tuning, run matrix and reports
"""

__version__ = "0.1.0"

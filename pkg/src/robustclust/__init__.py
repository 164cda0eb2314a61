"""Optimal Bayesian robust clustering of labeled point processes."""
from .baselines import BaselineConfig, run_baseline
from .bayes import ClusterResult, bayes_partition, map_partition, partition_error, pseed_fast
from .gaussian import (EffectiveRlpp, LabelPrior, NiwModel, UncertaintyClass, build_effective,
                       partition_probs, posterior_label_probs, sample_rlpp)
from .partitions import Partition, cost_matrix, enumerate_partitions, natural_cost

__version__ = "0.1.0"

__all__ = ["BaselineConfig", "ClusterResult", "EffectiveRlpp", "LabelPrior", "NiwModel",
           "Partition", "UncertaintyClass", "bayes_partition", "build_effective", "cost_matrix",
           "enumerate_partitions", "map_partition", "natural_cost", "partition_error",
           "partition_probs", "posterior_label_probs", "pseed_fast", "run_baseline",
           "sample_rlpp"]

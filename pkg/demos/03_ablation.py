"""Four strategies side by side, over five seeds, as a markdown table.

``edge_drop`` and ``feature_mask`` remove information at random; only the
counterfactual pipeline removes it selectively.
"""
from fairicd.pipeline import ExperimentConfig, results_markdown, run_ablation
from fairicd.synthetic import biased_testbed

ds = biased_testbed(seed=0)
for backbone in ("gcn", "sage"):
    results = run_ablation(ds, ExperimentConfig(backbone=backbone, k=5, lam=0.1))
    print(results_markdown(results))

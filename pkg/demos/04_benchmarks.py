"""Small versions of the three benchmark models, run through the harness.

Each run reports samples-to-convergence of the held-out predictive
log-likelihood.  Sizes are kept small so the script finishes in about a minute;
the acceptance suite runs the full sizes.
"""

from nmc.harness import ExperimentConfig, run_experiment

runs = [
    ("blr", "nmc", {"N": 400, "K": 5}),
    ("blr", "mala", {"N": 400, "K": 5}),
    ("robust", "nmc", {"N": 400, "K": 5}),
    ("robust", "rwm", {"N": 400, "K": 5}),
    ("annotation", "nmc", {"N": 100, "K": 8, "C": 3}),
]
for model, method, sizes in runs:
    cfg = ExperimentConfig(model=model, method=method, sizes=sizes, num_samples=300, seed=0, mala_step="auto")
    s = run_experiment(cfg)["summary"]
    extra = ""
    if "z_accuracy" in s:
        extra = f"  z acc {s['z_accuracy']:.3f} vs majority vote {s['majority_vote_accuracy']:.3f}"
    print(
        f"{model:10s} {method:4s} stc {s['samples_to_convergence']}  "
        f"final LL {s['final_predictive_ll']:.1f}  fallbacks {s['fallback_count']}  "
        f"{s['total_seconds']:.1f}s{extra}"
    )

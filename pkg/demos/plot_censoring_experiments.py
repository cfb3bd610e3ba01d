"""
How censoring moves alpha_star
==============================

Three ways to lower the event fraction of a dataset shaped like SUPPORT,
and what each does to the pair mix a C-index is computed over.
"""

from survdecomp.lab import (
    CENSORING_ONLY,
    SIZE_AND_CENSORING,
    ConstantPredictor,
    ExperimentSpec,
    FixedPredictions,
    apply_experiment,
    run_experiment_grid,
    summarize_grid,
)
from survdecomp.synthetic import make_support_like

data, latent = make_support_like()
print(f"{len(data)} subjects, {data.n_events} events ({data.event_fraction:.1%})")

targets = (0.20, 0.35, 0.50, 0.68)
for kind in (CENSORING_ONLY, SIZE_AND_CENSORING):
    for t in targets:
        d = apply_experiment(data, ExperimentSpec(kind, t))
        print(f"{kind:>20} {t:.2f}: {len(d):5d} rows, {d.n_events:5d} events")

###############################################################################
# An oracle that knows the latent times is perfectly concordant at every
# level, so its alpha always equals alpha_star.  The constant predictor sits
# at 0.5.

specs = [ExperimentSpec(CENSORING_ONLY, t) for t in targets]
rows = run_experiment_grid(
    data, specs, {"oracle": FixedPredictions(latent), "constant": ConstantPredictor()}, n_folds=5
)
for s in summarize_grid(rows):
    print(f"{s['predictor']:>8} @ {s['target']:.2f}: CI {s['ci']['median']:.3f}, "
          f"alpha_star {s['alpha_star']['median']:.3f}, "
          f"deviation {s['alpha_deviation']['median']:+.3f}")

"""Library walkthrough on a reduced problem (a few seconds on one core).

Generates labelled training windows and unlabelled test windows, trains both
engines, disaggregates the test set and prints per-load RMSE and TER next to
the proportional baseline.

    python3 demos/quickstart.py
"""
import numpy as np

from btm_disagg import bayes_test, bayes_train, det_disagg, det_train
from btm_disagg.bench import proportional_baseline
from btm_disagg.core import DataShape
from btm_disagg.metrics import report
from btm_disagg.synth import GeneratorConfig, generate_dataset

gen = GeneratorConfig(shape=DataShape(P=96, N=150, M=40, C=3), seed=3, initial_atoms=8)
train, test, truth = generate_dataset(gen)
specs = list(train.specs)
print(f"train X {train.X.shape}, test X {test.X.shape}, classes {[s.name for s in specs]}")

det_model = det_train.train(train.X, train.Y, specs,
                            det_train.DetTrainConfig(max_outer_iters=100, inner_iters=10))
det_est = det_disagg.disaggregate(test, det_model, det_disagg.DetTestConfig(q=100))

posterior = bayes_train.train_bayes(train, bayes_train.BayesHyper(K_init=[8] * 3, burn_in=200,
                                                                 n_collect=20, thin=2, seed=0))
bayes = bayes_test.disaggregate(test, posterior, bayes_test.McConfig(L=20, inner_sweeps=10))

base = proportional_baseline(truth["train"], test.X)

swap = lambda a: np.swapaxes(np.asarray(a), 1, 2)     # C x P x M -> C x M x P
T = swap(truth["test"])
for name, est, u in [("D-EDS", det_est, None), ("B-EDS", bayes.mean, bayes.u),
                     ("baseline", base, None)]:
    rep = report(swap(est), T, u)
    line = f"{name:9s} TER {rep.ter:.3f}  RMSE " + " ".join(f"{v:6.2f}" for v in rep.rmse)
    if rep.wrmse is not None:
        line += "  WRMSE " + " ".join(f"{v:6.2f}" for v in rep.wrmse)
    print(line)

j = 0
print(f"window {j}: uncertainty per load {np.round(bayes.u[j], 2)}, total {bayes.u_all[j]:.2f}")

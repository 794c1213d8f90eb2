"""
From local attributions to a global score
=========================================

KernelSHAP and LIME explain single predictions of a probe. Averaging
absolute attributions over users gives one importance column per factor;
the mean pairwise Jensen-Shannon divergence of those columns rewards
factors that rely on separate dimensions.
"""

import numpy as np

from disentrec.attribution import build_attribution_matrix, global_score, shap_local
from disentrec.harness import probe_user_split
from disentrec.probeclf import fit_probe_suite
from disentrec.synth import SynthSpec, generate, random_orthogonal

_, factors, rep = generate(SynthSpec(n_users=400, n_items=200, K=3, M=3, items_per_factor=40, seed=1))
tr, va, _ = probe_user_split(400, seed=0)
grid = {"n_trees": [25], "max_depth": [2], "shrinkage": [0.1]}
suite = fit_probe_suite(rep, factors, tr, va, grid=grid)

# One user, one probe: exact Shapley values over all 2^3 coalitions.
background = rep.values[tr[:20]]
phi = shap_local(suite.probes[0], rep.values[0], background, absolute=False)
print("SHAP for factor_0, user 0:", np.round(phi, 3))

# %%
# M x K matrices of mean absolute attributions, then the global scores.
for name, Z in (("identity", rep.values), ("rotated", rep.values @ random_orthogonal(3, 5).T)):
    probes = fit_probe_suite(Z, factors, tr, va, grid=grid)
    for method in ("shap", "lime"):
        S = build_attribution_matrix(probes, Z, method, budget=300 if method == "lime" else None,
                                     n_users=60, background_size=10)
        print(f"{name:8s} {method}-global = {global_score(S, method).value:.3f}")

"""Catch both phonons of a HOM pair in one node's f level, using sideband
modulation at the J0 = J1 balance point.

    python demos/two_phonon_catch.py
"""
from phononsim import scenarios
from phononsim.scenarios import ScenarioConfig

opt = scenarios.run(ScenarioConfig(scenario="optimize_catch"))
print("optimizer trace (stage, kappa scale, delta/Omega, P(gf)+P(fg))")
for row in opt.sweep_rows:
    print(f"  {row[1]:<12} {row[2]:.4f} {row[3]:.4f} {row[4]:.6f}")
P = opt.tables["final"]
print(f"lossless: P(gf) = {P[0, 2]:.5f}, P(fg) = {P[2, 0]:.5f}, P(ee) = {P[1, 1]:.1e}")

cfg = ScenarioConfig(scenario="two_phonon_catch").replace(
    **{"loss.eta": scenarios.eta_for_capture(0.32), "node.t1_f": 1500.0, "loss.mode": "jump"})
n1, n2 = scenarios.run(cfg).metrics.n_mean
print(f"with link loss and f decay: <n>_1 = {n1:.3f}, <n>_2 = {n2:.3f}")

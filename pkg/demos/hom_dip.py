"""Hong-Ou-Mandel dip between the two nodes, lossless and with the calibrated floor.

    python demos/hom_dip.py
"""
from phononsim import scenarios
from phononsim.scenarios import ScenarioConfig

FLOOR = 0.0014

lossless = scenarios.run(ScenarioConfig(scenario="hom"))
eta = scenarios.eta_for_hom_visibility(FLOOR, 0.981)
noisy = scenarios.run(ScenarioConfig(scenario="hom").replace(**{"loss.eta": eta, "loss.floor": FLOOR}))

print(f"{'tau (ns)':>9} {'P_ee':>9} {'theory':>9} {'P_ee (floor)':>13}")
for a, b in zip(lossless.sweep_rows, noisy.sweep_rows):
    print(f"{a[0]:9.1f} {a[1]:9.5f} {a[3]:9.5f} {b[1]:13.5f}")
print(f"\nvisibility lossless {lossless.metrics.v_hom:.5f}; with eta={eta:.3f}, floor={FLOOR}: {noisy.metrics.v_hom:.4f}")

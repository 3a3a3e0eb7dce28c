"""Single- and two-phonon phase gate: a detuned node in one arm of the
interferometer steers where the phonons end up.

    python demos/phase_gate.py
"""
from phononsim import scenarios
from phononsim.scenarios import ScenarioConfig

mz = scenarios.run(ScenarioConfig(scenario="mz_single"))
print("single phonon routing")
print(f"{'delta (MHz)':>12} {'P_Q1':>8} {'P_Q2':>8}")
for row in mz.sweep_rows[::4]:
    print(f"{row[0]:12.1f} {row[1]:8.4f} {row[2]:8.4f}")
print(f"visibility {mz.metrics.v_mz:.4f}; scattering phase crossings (MHz): {mz.extrema['scatter_crossings_MHz']}")

tp = scenarios.run(ScenarioConfig(scenario="two_phonon_phase").replace(**{"sweep.delta_MHz": [-60, 60, 13]}))
print("\ntwo phonons")
print(f"{'delta (MHz)':>12} {'P_ee':>8} {'w11':>8} {'cos^2':>8}")
for row in tp.sweep_rows:
    print(f"{row[0]:12.1f} {row[1]:8.4f} {row[2]:8.4f} {row[4]:8.4f}")

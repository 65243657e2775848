"""Closed-form power of the pooled (ATE) and subgroup (GATE) Z-tests.

With equal drift in both subgroups the pooled test is always the more
powerful one (g > 0); with opposite drifts the pooled test has no power
beyond its size.

    python demos/power_curves.py
"""

from mmr_falsify.baselines import PowerSpec, power_ate, power_gate, scenario3_g

print("equal drift, sigma = 1, N = 1, alpha = 0.05")
print(f"{'delta':>6} {'ATE':>7} {'GATE':>7} {'g':>9}")
for d in (0.0, 0.5, 1.0, 2.0, 3.0, 4.0):
    s = PowerSpec(d, d, 1.0, 1, 0.05)
    print(f"{d:6.1f} {power_ate(s):7.4f} {power_gate(s):7.4f} {scenario3_g(d, 0.05):9.2e}")

print("\nopposite drift (delta, -delta)")
for d in (0.5, 2.0, 4.0):
    s = PowerSpec(d, -d, 1.0, 1, 0.05)
    print(f"{d:6.1f} {power_ate(s):7.4f} {power_gate(s):7.4f}")

"""Tour of the click-detector POVM families.

A binary click detector is fully described by one number per photon
count: the probability that m incident photons produce a click. This
script builds the three built-in families, checks them against closed
forms, and shows how a coherent probe averages over them.
"""

import numpy as np

from nlspd import (
    NonlinearSpdParams,
    coherent_click_probability,
    nonlinear_povm,
    npd_povm,
    povm_click_probability,
    spd_povm,
    truncation_for,
)

N = 12

print("Single-photon detector, efficiency 0.25")
spd = spd_povm(0.25, N)
print("  click[m] =", np.array2string(spd.click[:6], precision=4))
print("  closed form 1-(1-p)^m:",
      np.array2string(1.0 - 0.75 ** np.arange(6), precision=4))

print()
print("Two-photon detector (needs pairs), efficiency 0.25")
npd = npd_povm(0.25, 2, N)
print("  click[m] =", np.array2string(npd.click[:6], precision=4))
print("  one photon alone never clicks: click[1] =", npd.click[1])

print()
print("Mixed detector: dark counts + one- and two-photon mechanisms")
params = NonlinearSpdParams([0.01, 0.10, 0.05])
mixed = nonlinear_povm(params, N)
print("  click[m] =", np.array2string(mixed.click[:6], precision=4))
print("  vacuum element is the dark-count efficiency:", mixed.click[0])

# Independence of the mechanisms means survival probabilities multiply:
# click[m] = 1 - prod_n (1 - P_n)^C(m, n).
m = 4
by_hand = 1.0 - (1 - 0.01) * (1 - 0.10) ** 4 * (1 - 0.05) ** 6
print(f"  product rule at m = {m}: {by_hand:.6f} vs {mixed.click[m]:.6f}")

print()
print("Coherent probes average the click vector with Poisson weights")
for mean in (0.5, 2.0, 8.0):
    n = truncation_for(mean)
    q_direct = coherent_click_probability(params, mean)
    q_povm = povm_click_probability(nonlinear_povm(params, n), mean)
    print(f"  mean {mean:4.1f}: Q = {q_direct:.6f}  (via POVM {q_povm:.6f}, "
          f"truncation {n})")

print()
print("The averaged response saturates once photons arrive in bulk:")
means = np.geomspace(0.1, 200.0, 8)
qs = [coherent_click_probability(params, mu) for mu in means]
for mu, q in zip(means, qs):
    bar = "#" * int(round(40 * q))
    print(f"  mean {mu:8.2f}  Q = {q:.4f}  {bar}")

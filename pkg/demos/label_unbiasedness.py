"""Single-draw Monte Carlo labels are noisy but unbiased.

For the chi-squared CDF and the Kou jump integral, averages of one-draw
labels (and of their parameter gradients) converge to the oracle values as
more draws are averaged, which is exactly what makes them usable as
regression targets.  Runs in seconds.
"""

import numpy as np

from diffint import get_problem, ground_truth, labels_and_grads, sampling
from diffint.harness import interior_points

for pid in ("chi2_cdf_2d", "kou"):
    problem = get_problem(pid)
    point = interior_points(problem, 3)[1]
    truth = ground_truth(problem, point)[0]
    state = sampling.RngState(1, sampling.substream("demo-unbiased", pid))
    print(f"{pid} at {np.round(point, 3)}: oracle value {truth:.6f}")
    print("    draws      label mean      abs gap")
    for n in (100, 10_000, 1_000_000):
        u = sampling.open_uniform01(state, n)
        y, _ = labels_and_grads(problem, np.tile(point, (n, 1)), u)
        mean = y[:, 0].mean()
        print(f"  {n:8d}    {mean:10.6f}    {abs(mean - truth):.2e}")
    print()

# the same holds for the gradient labels: their mean tracks the derivative
problem = get_problem("chi2_cdf_2d")
point = interior_points(problem, 3)[1]
state = sampling.RngState(2, sampling.substream("demo-grad"))
u = sampling.open_uniform01(state, 1_000_000)
_, g = labels_and_grads(problem, np.tile(point, (u.size, 1)), u)
h = 1e-4
up, dn = point.copy(), point.copy()
up[0] += h
dn[0] -= h
fd = (ground_truth(problem, up)[0] - ground_truth(problem, dn)[0]) / (2 * h)
print(f"gradient label mean d/db: {g[:, 0, 0].mean():.6f}  "
      f"vs derivative of the oracle: {fd:.6f}")

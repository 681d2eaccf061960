"""Warmup: learn I(b) = integral of cos over [0, b] from noisy one-draw labels.

Each training label is b*cos(b*u) for a single uniform draw u, an unbiased
but very noisy estimate of sin(b).  We train a value-only network (ann) and
a network that also fits the label's derivative in b (dml), then compare
both against the exact sin(b) and plot the error decay with training size.

Takes about five minutes on two cores.
"""

import os

import numpy as np

from diffint import get_problem, ground_truth, run_convergence
from diffint.cli import emit_plot
from diffint.harness import means_path_for, write_means, write_table

problem = get_problem("cos_toy")
sizes = [2048, 8192, 32768]
print(f"problem: {problem.id}, b in [{problem.box[0][0]:.2f}, {problem.box[0][1]:.2f}]")
print(f"training sizes {sizes}, 2 trials each, both modes\n")

table = run_convergence(problem, sizes, trials=2, seed=7, jobs=2, test_size=1024)

print("mean test MSE against sin(b):")
for _, mode, size, mse in table.means():
    print(f"  {mode}  J={size:5d}:  {mse:.3e}")

ann = table.mean_mse("ann", sizes[-1])
dml = table.mean_mse("dml", sizes[-1])
print(f"\nat J={sizes[-1]}: differential training cuts the MSE by {ann / dml:.1f}x")
print("(2-trial means wobble; at J=2^16 with 10 trials, as in the acceptance")
print(" suite, the reduction is roughly an order of magnitude)")

out_dir = os.path.join(os.path.dirname(__file__), "out")
table_path = os.path.join(out_dir, "cosine_convergence.csv")
write_table(table_path, table)
write_means(means_path_for(table_path), table)
emit_plot(means_path_for(table_path), os.path.join(out_dir, "cosine_convergence.svg"))
print(f"table and log-log plot written under {out_dir}/")

# spot-check a few points against the analytic integral
from diffint import sampling
from diffint.problems import generate_dataset
from diffint.training import TrainConfig, train

dataset = generate_dataset(problem, 32768, sampling.RngState(7, sampling.substream("demo-data")))
model = train(problem, dataset, TrainConfig(mode="dml", seed=7, batch_size=1024))
bs = np.array([[0.3], [1.0], [2.0], [3.0]])
pred = model.predict(bs)
truth = ground_truth(problem, bs)
print("\n   b      surrogate     sin(b)")
for b, p, t in zip(bs[:, 0], pred[:, 0], truth[:, 0]):
    print(f"  {b:.1f}   {p:+.6f}   {t:+.6f}")

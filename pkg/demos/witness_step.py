"""Where do two studies disagree? A witness function on a 1-D toy problem.

The signal carries a unit bias only for x > 0. The MMR test rejects and the
normalized witness is positive on the right half of the axis.

    python demos/witness_step.py
"""

import numpy as np

from mmr_falsify.designs import step_bias_signals
from mmr_falsify.kernels import KernelSpec, gram_matrix, standardize
from mmr_falsify.mmr import run_signal_test, witness_eval

x, psi = step_bias_signals(n=500, bias=1.0, seed=0)
kernel = KernelSpec()  # cubic polynomial on z-scored inputs
res = run_signal_test(psi, gram_matrix(kernel, standardize(x)), B=100, seed=0)
print(f"n*M2 = {res.statistic:.2f}, p = {res.p_value:.4f}, reject = {res.reject}")

grid = np.linspace(-2, 2, 9)[:, None]
wit = witness_eval(psi, x, kernel, grid)
for q, v in zip(grid[:, 0], wit.values):
    bar = "+" * int(round(10 * max(v, 0))) or "-" * int(round(10 * max(-v, 0)))
    print(f"x = {q:+.1f}  witness = {v:+.3f}  {bar}")

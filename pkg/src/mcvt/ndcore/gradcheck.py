"""Central finite-difference verification of analytic gradients.

The checker perturbs every parameter element by +-h, re-evaluates a
deterministic scalar forward function, and compares the numeric slope
against the gradient the tape produced.  It is only meaningful in
float64, which is enforced.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_err: dict = field(default_factory=dict)
    worst: float = 0.0
    passed: bool = True

    def __str__(self):
        lines = [f"gradcheck tol={self.tolerance:g} {'PASS' if self.passed else 'FAIL'}"]
        for name, err in sorted(self.max_rel_err.items()):
            mark = "ok " if err < self.tolerance else "BAD"
            lines.append(f"  [{mark}] {name:40s} max rel err {err:.3e}")
        return "\n".join(lines)


def gradcheck(forward, params, eps=1e-5, tolerance=1e-6, max_elems=None, rng=None):
    """Compare tape gradients of ``forward()`` against central differences.

    forward: zero-argument callable returning a scalar Tensor; it must be
        deterministic and must read parameter values from ``params``.
    params: dict name -> Tensor, all float64.
    max_elems: if set, check at most this many randomly chosen elements
        per parameter instead of every element.
    """
    for name, p in params.items():
        if p.data.dtype != np.float64:
            raise ConfigError(f"gradcheck requires float64 parameters; '{name}' is {p.data.dtype}")

    for p in params.values():
        p.grad = None
    loss = forward()
    loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}

    if rng is None:
        rng = np.random.default_rng(0)

    report = GradCheckReport(tolerance=tolerance)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if max_elems is not None and n > max_elems:
            idx = rng.choice(n, size=max_elems, replace=False)
        else:
            idx = np.arange(n)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = forward().item()
            flat[i] = orig - eps
            f_minus = forward().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[name].reshape(-1)[i]
            # the floor bounds the implied absolute tolerance; parameters
            # with an exactly-zero gradient (softmax shift directions) see
            # pure rounding noise of order ulp(loss)/eps, which must not
            # be flagged as a mismatch
            denom = max(abs(a), abs(numeric), 1e-3)
            worst = max(worst, abs(a - numeric) / denom)
        report.max_rel_err[name] = worst
        report.worst = max(report.worst, worst)
        if worst >= tolerance:
            report.passed = False
    return report

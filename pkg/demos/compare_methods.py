"""Compare deterministic, SAA and mean-MAD switching on the bundled 3-bus case.

Run with ``python3 demos/compare_methods.py``.
"""
from drcc_ots.case import build_operators, bundled_case
from drcc_ots.evaluate import oos_evaluate
from drcc_ots.reformulate import build_deterministic, build_mad, build_saa, solve
from drcc_ots.synthetic import edge_family, uniform_family, uniform_training
from drcc_ots.uncertainty import MeanMad, box_support, moment_stats, placement_matrix

case = bundled_case("case3")
ops = build_operators(case)
F = placement_matrix(case, [3])

train = uniform_training(60, seed=0)
support = box_support(train, 0.05)
amb = MeanMad(*moment_stats(train), support)

det = solve(build_deterministic(case, ops, 1), gap_tol=1e-2)
print(f"deterministic  cost {det.result.objective:9.2f}  opened {det.solution.opened_lines}")

solutions = {
    "saa": solve(build_saa(case, ops, train, 0.05, 1, F), gap_tol=1e-2).solution,
    "mad": solve(build_mad(case, ops, amb, 0.05, 1, F), gap_tol=1e-2).solution,
}
tests = {
    "uniform": uniform_family(amb.mu, amb.sigma, 5000, 1),
    "edge": edge_family(support, 5000, 1),
}
for name, sol in solutions.items():
    print(f"{name:<13}  cost {sol.objective:9.2f}  opened {sol.opened_lines}")
    for label, test in tests.items():
        rep = oos_evaluate(sol, test, case)
        print(f"    {label:<8} violation {rep.average_violation_rate:.4f}"
              f"  joint {rep.joint_violation_rate:.4f}  curtailment {rep.curtailment_mean:.3f} MW")

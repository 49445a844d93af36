"""Scalar linear-quadratic benchmark: one ODE for the value coefficient.

For x' = alpha x + u + noise with cost zeta x^2 + u^2, the relative value
function is -b x^2 and the optimal feedback is u = -k x with
k = b alpha / (1 + b).  The coefficient solves

    db/dzeta = 1 / (1 - (alpha / (1 + b))^2),   b(0) = 0,

and an algebraic fixed-point iteration provides an independent oracle.
"""

from mdp_ode import LqrModel, lqr_coefficient_ode, riccati_oracle

model = LqrModel(alpha=0.95)
table = lqr_coefficient_ode(model, 1.0, step=1e-3)

print(" zeta      b (ODE)    b (oracle)   gap        gain k")
for zeta, b, gain in table[:: len(table) // 10]:
    b_ref = riccati_oracle(model, zeta)
    print(f"{zeta:5.2f}  {b:10.7f}  {b_ref:10.7f}  {abs(b - b_ref):9.2e}  {gain:8.6f}")

print(f"\ninitial slope db/dzeta|_0 = 1/(1 - alpha^2) = {1 / (1 - 0.95**2):.6f}")
print(f"endpoint gap vs oracle    = {abs(table[-1][1] - riccati_oracle(model, 1.0)):.2e}")

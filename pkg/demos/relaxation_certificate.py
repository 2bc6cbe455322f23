"""Why relaxing nonnegativity by a fixed amount cannot rescue a lattice basis.

For each n the two lattice moves of the Lawrence-lifted family join u and v
only once cells may drop to -(n-2).
"""
from fibertool.counterexamples import build_relaxation_family, certify_relaxation_family

print(" n  min step  disconnected q<=n-3  minimal q")
for n in range(4, 9):
    cert = certify_relaxation_family(build_relaxation_family(n))
    print(f"{n:2d}  {min(cert['single_step_minima']):8d}  {str(cert['disconnected_all_q_le_n_minus_3']):>20}"
          f"  {cert['minimal_q']:9d}")

"""Very singular self-similar profile for N = 1, q = 2 and its Gaussian tail."""
from parcap.model import make_context
from parcap.vss import insertion_residual, vss_profile

prof = vss_profile(make_context(1, 2))
print(f"f(0) = {prof.f0:.10f}  bracket width {prof.bracket_width:.1e}")
print(f"tail exponent {prof.tail_exponent:.4f}  drift {prof.drift:.2e}")
print(f"residual of the self-similar field in the PDE {insertion_residual(prof):.2e}")
for y in (0.0, 1.0, 2.0, 4.0, 8.0):
    print(f"  f({y:.0f}) = {prof(y):.6e}")

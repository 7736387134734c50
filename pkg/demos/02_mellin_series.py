"""The SNR transform behind every delay bound, and how we trust it.

The MRC SNR of a Rice channel is approximated by a scaled chi-square. Its
Mellin transform has a series form; here it is compared with brute-force
quadrature of the defining integral, including far-negative arguments where
the alternating series cancels and the evaluator switches to Gauss-Laguerre.
"""

from pladelay.channel import snr_moments, square_grid_deployment
from pladelay.snc import gamma_approx_params, log_mellin_g, mellin_g, mellin_g_oracle

dep = square_grid_deployment()
for dev in ("D1", "D12", "D24"):
    mean, var = snr_moments(dep.stats(dev))
    p = gamma_approx_params((mean, var))
    print(f"{dev}: mean SNR {mean:7.2f}, var {var:9.2f} -> alpha_g={p.alpha_g:.3f}, k_g={p.k_g:.2f}")

p = gamma_approx_params(snr_moments(dep.stats("D12")))
print("\n   s      series          quadrature      rel. diff")
for s in (0.2, 0.5, 1.0, 1.5, 2.0, 3.0):
    a, b = mellin_g(s, p, method="series"), mellin_g_oracle(s, p)
    print(f"{s:5.2f}  {a:.10e}  {b:.10e}  {abs(a / b - 1):.1e}")

# With 288 symbols per frame the service transform needs M_g at
# 1 - 288 s / ln 2, which is deep in the negative range.
print("\n    s        log M_g(s)")
for s in (-10.0, -100.0, -1000.0):
    print(f"{s:8.1f}  {log_mellin_g(s, p):.8f}")

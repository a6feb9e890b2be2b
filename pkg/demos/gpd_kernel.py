"""GPD kernel: cdf, quantiles, the mean/median switch and the orthogonal parameters."""
from disastertoll.distributions import INFINITE_MEAN, GpdParams, gpd_cdf, gpd_mean, gpd_median, gpd_quantile

for xi in (-0.5, 0.0, 0.5, 1.0, 2.545):
    p = GpdParams(xi, 2.0)
    q99 = gpd_quantile(p, 0.99)
    mean = gpd_mean(p)
    shown = "infinite" if mean is INFINITE_MEAN else f"{mean:.3f}"
    print(f"xi={xi:>6}: median {gpd_median(p):8.3f}  q99 {q99:10.3f}  F(q99) {gpd_cdf(p, q99):.6f}  mean {shown}")

o = GpdParams(0.3, 2.0).to_ortho()
print(f"(xi=0.3, beta=2) -> nu = log((1 + xi) beta) = {o.nu:.4f}")

"""Residual count correlation and chi-bar, with and without a common shock."""
import numpy as np

from disastertoll.calibration import published_frequency_fit, synthetic_covariates
from disastertoll.data_model import covariate_panel
from disastertoll.dependence import chi_bar, count_residual_correlation, residual_null_band, with_null_band
from disastertoll.frequency import fit_frequency

rng = np.random.default_rng(3)
panel = covariate_panel(synthetic_covariates(), (1960, 2019))
fa, fb = published_frequency_fit("flood"), published_frequency_fit("storm")
rows = panel.covariate_rows()
for shock in (0.0, 0.3):
    m = np.exp(shock * rng.normal(size=len(panel)) - shock**2 / 2)
    data = panel.with_counts("flood", rng.poisson(fa.lambda_at(rows) * m))
    data = data.with_counts("storm", rng.poisson(fb.lambda_at(rows) * m))
    a, b = fit_frequency(data, fa.spec), fit_frequency(data, fb.spec)
    corr = count_residual_correlation(a, b, data)
    corr = with_null_band(corr, residual_null_band(a, b, data, n_sim=100, rng=rng))
    vals = np.array(list(corr.series.values()))
    print(f"shock sd {shock}: window correlations {vals.min():+.2f}..{vals.max():+.2f}, "
          f"inside null band {corr.inside_null_share():.0%}")

z = rng.normal(size=(5000, 2))
for name, (x, y) in {"independent": (z[:, 0], z[:, 1]), "comonotone": (z[:, 0], z[:, 0]),
                     "gaussian rho=0.7": (z[:, 0], 0.7 * z[:, 0] + 0.71 * z[:, 1])}.items():
    c = chi_bar(x, y, (0.8, 0.9, 0.95))
    print(f"{name:<18}" + "  ".join(f"u={u}: {v:.3f}" for u, v in c.values.items()))

"""Parametric bootstrap intervals for flood projections (small B for a quick run)."""
import warnings

from disastertoll.bootstrap import BootstrapConfig, run_bootstrap
from disastertoll.calibration import published_frequency_fit, published_severity_fit, ssp1_like_path, synthetic_covariates
from disastertoll.data_model import covariate_panel
from disastertoll.projection import splice_path

covariates = synthetic_covariates()
panel = covariate_panel(covariates, (1960, 2019))
path = splice_path(ssp1_like_path(covariates), covariates)
cfg = BootstrapConfig(replications=200, seed=42)
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    res = run_bootstrap(published_frequency_fit("flood"), published_severity_fit("flood"), panel, path, cfg, (2040, 2100))
for q in ("n_disasters", "deaths_per_disaster", "annual_deaths"):
    for h in (2040, 2100):
        med, lo, hi = res.get(q, "WLD", h)
        print(f"world {q:<20} {h}: {med:9.1f}  [{lo:.1f}, {hi:.1f}]")
print(f"{res.n_effective} replicates kept, {res.refit_failures} failed refits")

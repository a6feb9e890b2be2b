"""Project counts and tolls under a spliced SSP1-like path with the published estimates."""
from disastertoll.calibration import published_fits, ssp1_like_path, synthetic_covariates
from disastertoll.projection import project, splice_path

covariates = synthetic_covariates()
path = splice_path(ssp1_like_path(covariates), covariates)
table = project(published_fits(), path, (2040, 2100), on_boundary="flag")
print(table.render_text())

"""Likelihood-ratio ladder for the severity covariates of floods."""
import warnings

from disastertoll.calibration import calibrated_dataset
from disastertoll.pipeline import prepare_inputs
from disastertoll.selection import lr_test_logliks, select_severity_spec

# a published comparison: constant vs GDP model for the scale of floods
print(lr_test_logliks(-18468.0, -18127.5, 1))

data = calibrated_dataset(seed=2020, types=("flood",), counts="fixed")
inputs = prepare_inputs(data.events, data.covariates, (1960, 2019), 2019, ("flood",))
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    nu_report, xi_report = select_severity_spec(inputs.samples["flood"], inputs.panel, "flood")
print(nu_report.render_text())
print(xi_report.render_text())

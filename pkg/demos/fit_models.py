"""Fit the Poisson frequency and GPD severity regressions on a synthetic flood history."""
import warnings

from disastertoll.calibration import calibrated_dataset, published_severity_spec
from disastertoll.frequency import FrequencySpec, fit_frequency
from disastertoll.pipeline import FitBundle, prepare_inputs, render_fit_table
from disastertoll.severity import fit_severity

data = calibrated_dataset(seed=2020, types=("flood",), counts="fixed")
inputs = prepare_inputs(data.events, data.covariates, (1960, 2019), 2019, ("flood",))
freq = fit_frequency(inputs.panel, FrequencySpec("flood"))
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    sev = fit_severity(inputs.samples["flood"], inputs.panel, published_severity_spec("flood"))
print(render_fit_table({"flood": FitBundle(freq, sev)}))

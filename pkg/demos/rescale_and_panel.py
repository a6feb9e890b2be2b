"""Population rescaling of event tolls and the (year, region) count panel."""
import datetime as dt

from disastertoll.calibration import calibrated_dataset
from disastertoll.data_model import DisasterEvent, build_panel, rescale_events

data = calibrated_dataset(seed=1, types=("flood", "storm"))
one = DisasterEvent("ev-1", dt.date(1975, 7, 1), "BGD", "SAS", "flood", 1000)
(r,) = rescale_events([one], data.covariates)
print(f"1000 deaths in South Asia, mid-1975 -> {r.rescaled_deaths:.0f} at 2019 population")

events = rescale_events(data.events, data.covariates)
panel = build_panel(events, data.covariates, (1960, 2019), ("flood", "storm"))
print(f"{len(data.events)} events -> panel of {len(panel)} cells")
for kind in ("flood", "storm"):
    print(f"  {kind}: {panel.counts[kind].sum() / 60:.1f} per year")

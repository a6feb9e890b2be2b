"""Closed vocabularies: World Bank regions and the six climate disaster types."""
from __future__ import annotations

import csv
from functools import lru_cache
from importlib import resources
from pathlib import Path

REGIONS: tuple[str, ...] = ("EAP", "ECA", "LAC", "MNA", "NAC", "SAS", "SSF")

REGION_NAMES = {
    "EAP": "East Asia - Pacific",
    "ECA": "Europe - Central Asia",
    "LAC": "Latin America - Caribbean",
    "MNA": "Middle East - North Africa",
    "NAC": "North America",
    "SAS": "South Asia",
    "SSF": "Sub-Saharan Africa",
}

DISASTER_TYPES: tuple[str, ...] = (
    "flood",
    "storm",
    "landslide",
    "wildfire",
    "heat_wave",
    "cold_wave",
)

WORLD = "WLD"


def region_index(code: str) -> int:
    return REGIONS.index(code)


@lru_cache(maxsize=None)
def _load_mapping(path: str | None) -> dict[str, str]:
    if path is None:
        handle = resources.files("disastertoll").joinpath("data/country_regions.csv").open("r", encoding="utf-8")
    else:
        handle = open(path, "r", encoding="utf-8")
    with handle:
        return {row["country"].strip(): row["region"].strip() for row in csv.DictReader(handle)}


def country_regions(path: str | Path | None = None) -> dict[str, str]:
    """Country (ISO3) -> region code mapping.

    The default asset follows the World Bank seven-region classification; pass
    ``path`` to use an edited copy with the same ``country,region`` header.
    """
    return dict(_load_mapping(None if path is None else str(path)))

"""Frequency-severity regression of climate-disaster death tolls."""

__version__ = "1.0.0"
__description__ = "Temporal-consistency workbench for range-azimuth heatmap sequences."

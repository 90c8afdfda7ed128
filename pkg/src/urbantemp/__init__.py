"""Multi-horizon urban air-temperature forecasting toolkit.

Ingests gridded IoT and weather-station temperature series, fills gaps,
trains a from-scratch stacked LSTM plus classical baselines, and scores
24-hour forecasts per horizon hour.
"""

__version__ = "0.1.0"

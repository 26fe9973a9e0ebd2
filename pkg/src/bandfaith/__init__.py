"""Frequency-band faithfulness evaluation for spectrogram attributions of anomalous sound detectors."""

__version__ = "0.1.0"

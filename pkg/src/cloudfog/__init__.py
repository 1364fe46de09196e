"""Energy- and delay-aware placement of IoT processing over a cloud-fog network."""

__version__ = "0.1.0"

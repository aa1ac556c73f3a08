"""Battery sizing and siting under wildfire line shutoffs, by extensive form or progressive hedging."""

__version__ = "0.1.0"

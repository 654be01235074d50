"""Co-simulation of an LTE uplink carried over a DOCSIS upstream, with and
without eNB bandwidth reports that let the CMTS grant ahead of the data."""

__version__ = "0.1.0"

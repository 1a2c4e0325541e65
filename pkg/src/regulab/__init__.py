"""Data-driven adaptive output regulation of unknown SISO linear plants."""

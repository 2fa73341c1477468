"""fdcert: certificate-carrying autocoding for observer-based fault detection."""

__version__ = "0.1.0"

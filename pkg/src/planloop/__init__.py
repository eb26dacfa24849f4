"""Plan, check, scrub and refine multi-day travel itineraries against a closed sandbox."""

__version__ = "0.1.0"

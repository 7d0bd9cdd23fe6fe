"""drsim: deterministic discrete-event simulator for two-zone high-availability
architectures with measurable SLA, RTO, and RPO."""

__version__ = "0.1.0"

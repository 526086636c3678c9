"""Campus smart-local-energy-system simulator.

Subpackages cover the network model, telemetry, DC power flow with
self-healing restoration, carbon-minimizing dispatch, KPI metrics, the
what-if twin engine, and the operator-facing service.
"""

__version__ = "0.1.0"

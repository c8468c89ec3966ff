"""Functional simulator and analytical cost model for a hybrid
analog-digital spiking transformer accelerator.

Subsystems:
    spikecore  - LFSR streams, Bernoulli coding, LIF dynamics
    ssa        - stochastic spiking attention (functional + cycle-level)
    aimc       - PCM crossbar engine: programming, noise, drift, mapping, GDC
    model      - end-to-end spiking transformer inference
    oracle     - exact rate-domain and integer references used in tests
    costmodel  - operation counts, energy and latency estimation
    cli        - command line front end and weight manifest handling
"""

__version__ = "0.1.0"

"""Desk-scale LEO satellite handover laboratory.

Subpackages cover the full pipeline: analytic constellation propagation
(`constellation`), link budget and Shannon rates (`channel`), the slotted
handover environment with capacity/blocking bookkeeping (`environment`),
multi-objective reward shaping (`reward`), a small dense-network substrate
with a dueling head (`neuralnet`), the dueling double-DQN agent (`agent`),
rule-based comparison policies and a tiny-instance enumeration oracle
(`baselines`), and seeded experiment sweeps with CSV outputs
(`experiments`).
"""

__version__ = "0.1.0"

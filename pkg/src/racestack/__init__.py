"""Closed-loop autonomous racing simulation stack.

Subsystems: track geometry and racelines (:mod:`racestack.track`), single-track
plant models (:mod:`racestack.vehicle`), robust sensor fusion
(:mod:`racestack.estimation`), radar opponent tracking
(:mod:`racestack.perception`), low-level controllers
(:mod:`racestack.control`), behavioral race logic (:mod:`racestack.race`), and
the deterministic scenario harness (:mod:`racestack.harness`).
"""

__version__ = "0.1.0"

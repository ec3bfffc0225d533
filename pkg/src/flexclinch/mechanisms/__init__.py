from .market_clearing import clearing_price, run_market_clearing
from .mca import clinch_step, final_rationing, run_mca
from .outcome import ClinchEvent, ClinchLedger, MechanismError, MechanismTag, Outcome, welfare_of
from .vcg import run_vcg
from .welfare import solve_welfare_max

__all__ = [
    "ClinchEvent",
    "ClinchLedger",
    "MechanismError",
    "MechanismTag",
    "Outcome",
    "clearing_price",
    "clinch_step",
    "final_rationing",
    "run_market_clearing",
    "run_mca",
    "run_vcg",
    "solve_welfare_max",
    "welfare_of",
]

"""Scenarios for the thinlab runner"""
from thinlab.scenarios.sc_julia_set import sc as sc_julia_set
from thinlab.scenarios.sc_eigen import sc as sc_eigen
from thinlab.scenarios.sc_sojourn import sc as sc_sojourn
from thinlab.scenarios.sc_thinness import sc as sc_thinness
from thinlab.scenarios.sc_fn_build import sc as sc_fn_build
from thinlab.scenarios.sc_p0 import sc as sc_p0
from thinlab.scenarios.sc_cascade import sc as sc_cascade
from thinlab.scenarios.sc_separation import sc as sc_separation
from thinlab.scenarios.sc_law_check import sc as sc_law_check

__all__ = [
    "sc_julia_set",
    "sc_eigen",
    "sc_sojourn",
    "sc_thinness",
    "sc_fn_build",
    "sc_p0",
    "sc_cascade",
    "sc_separation",
    "sc_law_check"
]

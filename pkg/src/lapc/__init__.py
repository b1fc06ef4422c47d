"""lapc: a λC-to-HOL translator with TPTP TH0 and SMT-LIB emission."""

__version__ = "0.1.0"

"""acouz: boundary spectra, rough impedance operators, and dissipative
acoustic eigenproblems on 2-D domains."""

__version__ = "0.1.0"

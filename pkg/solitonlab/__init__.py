# Soliton Lab - numerical laboratory for NLS ground-state asymptotic stability

__version__ = "0.1.0"

"""Fire-sale clearing - liquidation, borrowing and price equilibria in interbank networks"""

__version__ = "0.1.0"

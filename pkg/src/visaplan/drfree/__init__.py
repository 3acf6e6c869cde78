"""\
Distributionally robust free-energy control on learned Gaussian models
"""

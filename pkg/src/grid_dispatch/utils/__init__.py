"""
Utility modules for grid-dispatch
"""

"""
Command-line application layer.
Delivery mechanism only. No experiment logic.
"""

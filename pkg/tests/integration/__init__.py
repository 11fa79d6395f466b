"""
Integration tests package.
"""

"""
Command handlers exposed through the CLI.
"""

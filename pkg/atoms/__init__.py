"""
Core domain logic: tensors, sparse coding, attention adapters, toy tasks,
training protocols and analysis.
"""

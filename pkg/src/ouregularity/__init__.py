"""Numerical engine for nonautonomous Ornstein-Uhlenbeck transition operators."""

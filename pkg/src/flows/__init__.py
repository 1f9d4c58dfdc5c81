"""Flows - Prefect scenario runs and parameter sweeps"""

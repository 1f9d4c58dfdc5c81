"""Utilities - balance-sheet ingestion and calibration"""

"""Calibration, simulation, validation and persistence services for moesd"""

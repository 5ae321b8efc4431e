"""
Benchmark harness: experiment configs, phantoms, experiment runs and the CLI.
"""

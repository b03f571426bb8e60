"""Operator tooling: CLI, dataset ingestion, benchmarks and the leakage audit."""

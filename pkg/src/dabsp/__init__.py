"""Data-association-aware belief space planning."""

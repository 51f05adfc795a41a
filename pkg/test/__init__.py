# Test Suite for the Harmonic Power-Flow Package

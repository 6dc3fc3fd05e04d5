"""Test package for vqsim."""

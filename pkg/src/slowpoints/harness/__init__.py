"""Command line, configuration and artifact plumbing."""

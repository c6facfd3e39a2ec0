"""Tasks Package - replication jobs for the worker pool."""

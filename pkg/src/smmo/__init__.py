"""Concurrent slab allocator with SOA blocks and parallel do-all for SMMO workloads."""
